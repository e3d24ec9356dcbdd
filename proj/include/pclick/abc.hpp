// abc.hpp — Approximate Bayesian Computation by rejection against a
// precomputed trajectory library, with per-statistic acceptance thresholds.

#pragma once

#include "pclick/library.hpp"
#include "pclick/posterior.hpp"
#include "pclick/summaries.hpp"

namespace pclick {

struct ABCConfig {
    std::vector<SummarySpec> statistics;
    RVec thresholds;              // one epsilon >= 0 per statistic
    double target_accept = 0.005; // per-statistic calibration quantile
};

struct AbcResult {
    std::vector<ParameterPoint> accepted;
    PosteriorGrid posterior;   // accepted-theta histogram on the template grid
    double joint_acceptance = 0.0;
};

// Per-statistic epsilon_i at the target_accept quantile of the distances
// from `observed` to every library entry.
RVec calibrate_thresholds(const PhotoclickRecord& observed, const TrajectoryLibrary& library,
                          const std::vector<SummarySpec>& specs, double target_accept);

// Accepts an entry iff distance_i <= epsilon_i for every statistic i;
// the posterior is the normalized histogram of accepted theta on the
// template grid (weights of `grid_template` are ignored).
AbcResult abc_posterior(const PhotoclickRecord& observed, const TrajectoryLibrary& library,
                        const ABCConfig& cfg, const PosteriorGrid& grid_template);

// calibrate_thresholds + abc_posterior, iterating the per-statistic quantile
// until the joint acceptance count lands in [min_accept, max_accept].
AbcResult abc_posterior_calibrated(const PhotoclickRecord& observed,
                                   const TrajectoryLibrary& library,
                                   const std::vector<SummarySpec>& specs,
                                   const PosteriorGrid& grid_template, int min_accept,
                                   int max_accept);

}  // namespace pclick
