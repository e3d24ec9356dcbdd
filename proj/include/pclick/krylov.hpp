// krylov.hpp — Arnoldi approximation of e^{tA} v for large linear systems,
// with adaptive substepping. Used as the fast propagation route for
// conditional density-matrix likelihoods; cross-checked against the
// adaptive Runge-Kutta route in the test suite.

#pragma once

#include <cstdint>

#include "pclick/ode.hpp"

namespace pclick {

struct KrylovOptions {
    int basis_size = 36;
    double rel_tol = 1e-12;   // per-substep, relative to the current norm
    double tau_init = 0.1;
    std::uint64_t max_substeps = 2000000;
};

struct KrylovStats {
    std::uint64_t substeps = 0;
    std::uint64_t matvecs = 0;
    std::uint64_t rejects = 0;
    double min_tau = 0.0, max_tau = 0.0;
};

// out = e^{tA} v, A given by its action. Returns the number of substeps.
// If renorm_log is non-null, the running vector is rescaled to unit norm
// whenever it drops below 1e-150 and the accumulated log-scale is added
// to *renorm_log.
std::uint64_t krylov_expmv(const ApplyFn& apply, double t, const CVec& v, CVec& out,
                           const KrylovOptions& opt = {}, double* renorm_log = nullptr,
                           KrylovStats* stats = nullptr);

}  // namespace pclick
