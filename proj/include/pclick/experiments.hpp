// experiments.hpp — Orchestration shared by the CLI evaluate command and
// the acceptance suite: cached library generation, grid scans through the
// spectral likelihood engine, estimator adaptors, dark-count pairing.

#pragma once

#include <filesystem>

#include "pclick/abc.hpp"
#include "pclick/config.hpp"
#include "pclick/evaluation.hpp"
#include "pclick/nn.hpp"
#include "pclick/spectral_likelihood.hpp"

namespace pclick {

// Loads `path` when present, otherwise builds via `make()` and saves.
TrajectoryLibrary cached_library(const std::string& path,
                                 const std::function<TrajectoryLibrary()>& make);
NeuralModel cached_model(const std::string& path, const std::function<NeuralModel()>& make);

// One-axis (Delta) spectral posterior scan: an eigenbasis engine per grid
// cell evaluates every record in one batched pass.
struct SpectralScan {
    RVec grid;        // Delta cell centers
    RMat log_like;    // records x cells
    RVec condition;   // per-cell eigenbasis condition estimates
    RVec residual;    // per-cell factorization residuals
};

SpectralScan spectral_posterior_scan(const std::map<std::string, double>& base_params,
                                     int box_cavity, int box_mech, const RVec& grid,
                                     const std::vector<PhotoclickRecord>& records,
                                     bool verbose = false);

// posterior grid for one scanned record (flat prior over the grid)
PosteriorGrid scan_posterior(const SpectralScan& scan, Eigen::Index record_index,
                             const std::string& axis_name = "Delta");

// ---- estimator adaptors -------------------------------------------------------

// ABC posterior-mean (or mode) estimator with per-record threshold
// calibration into the given acceptance window.
EstimatorFn abc_estimator(const TrajectoryLibrary& library, const PosteriorGrid& grid_template,
                          int min_accept, int max_accept, bool use_mode = false);

EstimatorFn nn_point_estimator(const NeuralModel& model, const std::string& target = "Delta");
// Gaussian-head estimator: mean + predicted sigma
EstimatorFn nn_gaussian_estimator(const NeuralModel& model, int component = 0);
// Categorical-head estimator: posterior mean (or mode) + posterior sigma
EstimatorFn nn_classifier_estimator(const NeuralModel& model, bool use_mode = false);

// strips labels and feeds a permuted copy to the inner estimator
EstimatorFn permuted_estimator(EstimatorFn inner, std::uint64_t seed);

// ---- experiment helpers --------------------------------------------------------

struct BucketSet {
    std::vector<PhotoclickRecord> records;
    RVec truths;
};

// records at fixed true detunings (bucket values), n per bucket
BucketSet optomech_bucket_records(const ExperimentConfig& cfg, const std::vector<double>& deltas,
                                  int per_bucket, int n_clicks, std::uint64_t seed,
                                  std::uint64_t stream_offset = 0);

// records with theta drawn uniformly from the prior
BucketSet optomech_uniform_records(const ExperimentConfig& cfg, int count, int n_clicks,
                                   std::uint64_t seed, std::uint64_t stream_offset = 0);

// per-record dark-count injection (stripped labels), preserving truths
BucketSet with_dark_counts(const BucketSet& clean, double rate, std::uint64_t seed,
                           const std::string& strip_label);

double rmse_at(const RmseCurve& curve, double center, double tol = 1e-6);

// CLI evaluation suites: rmse-curves, posterior-fidelity, darkcounts,
// timing, pca, calibration. Writes CSVs plus a manifest entry under
// out_dir; model_path may be empty for ABC-only suites.
int run_evaluation_suite(const ExperimentConfig& cfg, const std::string& suite,
                         const std::string& library_path, const std::string& model_path,
                         const std::string& out_dir);

}  // namespace pclick
