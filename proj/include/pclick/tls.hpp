// tls.hpp — Analytic oracle for the driven two-level atom: closed-form
// waiting-time density (2x2 conditional propagator), renewal likelihood,
// exact posterior and the minimal-RMSE reference map.

#pragma once

#include <optional>

#include "pclick/posterior.hpp"
#include "pclick/rng.hpp"
#include "pclick/trajectory.hpp"

namespace pclick {

// w(tau) = kappa |<e| exp(-i H_cond tau) |g>|^2; a proper renewal density
// because the atom resets to |g> at every emission.
double waiting_time_density(double delta, double omega, double kappa, double tau);

struct WaitingTimeDensity {
    double delta = 0.0, omega = 0.0, kappa = 1.0;

    double operator()(double tau) const {
        return waiting_time_density(delta, omega, kappa, tau);
    }

    // slowest norm-decay rate of H_cond (bounds the tail of w)
    double slow_decay_rate() const;

    struct Normalization {
        double integral = 0.0;   // adaptive Gauss-Kronrod over [0, T*]
        double tail_bound = 0.0; // analytic bound on the remaining mass
    };
    Normalization normalization() const;
};

// sum_i log w(dt_i); empty records give 0, a vanishing density gives -inf.
double exact_log_likelihood_tls(const PhotoclickRecord& record, double delta,
                                double omega, double kappa);

// Bayes posterior on a (Delta[, Omega]) grid with the analytic likelihood.
// When the grid has no Omega axis, fixed_omega must be supplied.
PosteriorGrid exact_posterior_tls(const PhotoclickRecord& record, const PosteriorGrid& prior,
                                  double kappa,
                                  std::optional<double> fixed_omega = std::nullopt);

struct RmseSurface {
    GridAxis delta_axis, omega_axis;
    RMat rmse;        // sqrt(MSE[Delta] + MSE[Omega]) per true cell
    RMat predicted;   // mean posterior spread per cell (sqrt of summed variances)
    Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> flagged;  // dark cells
    int n_clicks = 0, n_mc = 0;
};

// Monte-Carlo map of the Bayes-optimal (posterior-mean) RMSE over true
// (Delta, Omega) cells; the reference surface for estimator benchmarks.
// Cells whose records cannot be generated (dark states) are flagged.
RmseSurface true_rmse_map(const GridAxis& true_delta, const GridAxis& true_omega,
                          int n_clicks, int n_mc, double kappa,
                          const PosteriorGrid& estimation_prior, std::uint64_t seed,
                          int threads = 0);

}  // namespace pclick
