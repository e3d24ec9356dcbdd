// posterior.hpp — Discrete posterior grids and the generic brute-force
// likelihood: conditional density-matrix propagation along a click record,
// valid for any model. Serves as the ground-truth oracle for the
// likelihood-free methods.

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "pclick/common.hpp"
#include "pclick/quantum.hpp"
#include "pclick/trajectory.hpp"

namespace pclick {

struct GridAxis {
    std::string name;
    RVec values;  // strictly increasing cell centers
};

struct PosteriorGrid {
    std::vector<GridAxis> axes;
    RVec weights;               // C-order (last axis fastest), sums to 1
    double log_evidence = 0.0;  // log of the unnormalized mass (flat prior scale)

    Eigen::Index cells() const;
    ParameterPoint cell_point(Eigen::Index flat) const;
    void validate() const;

    static PosteriorGrid uniform(std::vector<GridAxis> axes);
};

ParameterPoint posterior_mean(const PosteriorGrid& grid);
// argmax cell center; ties break toward the lowest flat index
ParameterPoint posterior_mode(const PosteriorGrid& grid);

// weights ∝ prior * exp(log_like), log-sum-exp normalized; throws
// DegeneratePosterior when every cell underflows.
PosteriorGrid grid_from_log_likelihood(const PosteriorGrid& prior, const RVec& log_like);

std::string posterior_to_json(const PosteriorGrid& grid);
PosteriorGrid posterior_from_json(const std::string& text);

enum class LikelihoodRoute {
    Auto,        // adaptive RK for small spaces, Krylov otherwise
    AdaptiveRk,  // same integrator and tolerances as the trajectory sampler
    Krylov
};

struct LikelihoodOptions {
    LikelihoodRoute route = LikelihoodRoute::Auto;
    Numerics numerics = default_numerics();
};

// Stepwise conditional propagator: between clicks
//   d rho/dt = -i (H_cond rho - rho H_cond^dag)
//              + sum_{lost, dissipative} rate O rho O^dag
// (the detected-channel recycling term is dropped), and at a click
//   rho -> rate_det c rho c^dag.
// The accumulated log-trace is the log click-record density.
struct NoClickKernel;  // banded generator internals

class ConditionalPropagator {
  public:
    ConditionalPropagator(const ModelSpec& model, LikelihoodOptions opts = {});
    ~ConditionalPropagator();
    ConditionalPropagator(ConditionalPropagator&&) noexcept;
    ConditionalPropagator& operator=(ConditionalPropagator&&) noexcept;

    void reset();
    void no_click(double dt);
    void click(int detected_channel_index);
    double log_weight() const { return log_weight_; }
    // largest admissible single-click log gain; used for safe pruning of
    // grid scans
    double max_click_log_gain() const { return max_click_log_gain_; }

    const ModelSpec& model() const { return model_; }

  private:
    ModelSpec model_;
    LikelihoodOptions opts_;
    LikelihoodRoute route_;
    std::vector<int> detected_;
    std::unique_ptr<NoClickKernel> kernel_;
    CVec rho_;  // vectorized, n x n column-major
    double log_weight_ = 0.0;
    double max_click_log_gain_ = 0.0;
    int dim_ = 0;
};

// log p(record | model): conditional-propagation likelihood of the ordered
// waiting times. Empty records give 0.
double record_likelihood(const ModelSpec& model, const PhotoclickRecord& record,
                         LikelihoodOptions opts = {});

using ModelFamily = std::function<ModelSpec(const ParameterPoint&)>;

// Bayes update of `prior` (same axes) with the record likelihood evaluated
// at every grid cell; log-sum-exp normalized.
PosteriorGrid posterior_on_grid(const ModelFamily& family, const PhotoclickRecord& record,
                                const PosteriorGrid& prior, LikelihoodOptions opts = {},
                                int threads = 0);

// As posterior_on_grid, but drops grid cells once their running likelihood
// provably cannot contribute more than e^-30 of the posterior mass
// (per-click log-gain bound). Identical result up to that mass.
PosteriorGrid posterior_on_grid_pruned(const ModelFamily& family,
                                       const PhotoclickRecord& record,
                                       const PosteriorGrid& prior,
                                       LikelihoodOptions opts = {}, int threads = 0);

}  // namespace pclick
