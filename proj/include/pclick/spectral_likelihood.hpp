// spectral_likelihood.hpp — Cached-eigenbasis conditional likelihood.
//
// Diagonalizes the no-click generator of one model once, then evaluates
// record likelihoods with elementwise eigenvalue phases plus a single
// click-matrix product per detection. Mathematically identical to
// ConditionalPropagator; built for grid scans where the same model is
// queried against hundreds of records. Every instance validates its
// factorization (residual, conditioning, round trip) and refuses to run
// when the eigenbasis is unreliable.

#pragma once

#include "pclick/posterior.hpp"

namespace pclick {

struct SpectralEngineOptions {
    double cond_limit = 1e9;       // ||V|| * ||V^-1|| (Frobenius estimate)
    double residual_limit = 1e-9;  // relative eigen residual
};

class SpectralLikelihoodEngine {
  public:
    explicit SpectralLikelihoodEngine(const ModelSpec& model,
                                      SpectralEngineOptions opts = {});

    bool usable() const { return usable_; }
    double condition_estimate() const { return cond_; }
    double residual() const { return residual_; }
    const ModelSpec& model() const { return model_; }

    // log p(record | model); requires usable()
    double record_log_likelihood(const PhotoclickRecord& record) const;

    // Batched scan: all records must share the same click count. One
    // click-matrix product per click step covers the whole batch (BLAS-3).
    RVec batch_log_likelihood(const std::vector<const PhotoclickRecord*>& records) const;

  private:
    ModelSpec model_;
    SpectralEngineOptions opts_;
    int n_ = 0;    // Hilbert dimension
    int n2_ = 0;   // superoperator dimension
    bool usable_ = false;
    double cond_ = 0.0, residual_ = 0.0;

    CVec eigvals_;       // no-click generator spectrum (Re <= 0)
    CMat click_eig_;     // click superoperator in the eigenbasis
    CVec init_coeff_;    // V^-1 vec(rho_0)
    Eigen::RowVectorXcd trace_row_;  // trace functional in the eigenbasis
};

}  // namespace pclick
