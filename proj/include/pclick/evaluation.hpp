// evaluation.hpp — Metrics and comparison machinery: RMSE curves with
// predicted uncertainties, Bhattacharyya posterior fidelity, one-to-one
// estimate densities with plateau detection, PCA of raw trajectories,
// timing harness, CSV/manifest output.

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pclick/posterior.hpp"
#include "pclick/trajectory.hpp"

namespace pclick {

// sum_i sqrt(p_i q_i) over identical grids
double bhattacharyya(const PosteriorGrid& p, const PosteriorGrid& q);

struct Estimate {
    double value = 0.0;
    double predicted_sigma = std::numeric_limits<double>::quiet_NaN();
};

using EstimatorFn = std::function<Estimate(const PhotoclickRecord&)>;

struct RmseCurve {
    RVec bucket_centers;
    RVec rmse;                // attained error per bucket
    RVec predicted;           // mean reported uncertainty (NaN when absent)
    Eigen::VectorXi counts;   // samples per bucket; empty buckets are omitted
};

// Buckets records by the true parameter, reports per-bucket RMSE of the
// estimates plus the average method-reported uncertainty.
RmseCurve rmse_curve(const EstimatorFn& estimator,
                     const std::vector<PhotoclickRecord>& records, const RVec& truths,
                     double lo, double hi, double bucket_width);

struct OneToOneDensity {
    RVec truth_centers, estimate_centers;
    RMat density;                  // rows: truth bins, cols: estimate bins
    RVec mean_estimate;            // <estimate> per truth bin
    std::vector<int> plateau_flags;  // 1 where d<est>/dtruth < threshold
    double slope_threshold = 0.1;
};

OneToOneDensity one_to_one_density(const RVec& estimates, const RVec& truths, int bins,
                                   double lo, double hi, double slope_threshold = 0.1);

struct PcaResult {
    RMat components;    // columns: orthonormal principal directions
    RMat projections;   // rows: per-record coordinates
    RVec explained;     // eigenvalues, descending
    RVec mean;          // feature mean removed before the decomposition
};

// PCA over raw waiting-time vectors (records must share the click count).
PcaResult pca_top_components(const std::vector<PhotoclickRecord>& records, int k);

double pearson_correlation(const RVec& a, const RVec& b);

struct TimingReport {
    double median_seconds = 0.0;
    double mean_seconds = 0.0;
    int n_records = 0;
};

// Median per-record latency of `method` over the records (warm start: the
// first call is excluded).
TimingReport timing_benchmark(const std::function<void(const PhotoclickRecord&)>& method,
                              const std::vector<PhotoclickRecord>& records);

// ---- small output helpers ----------------------------------------------------

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const RMat& rows);
void append_manifest(const std::string& dir, const std::string& entry_name,
                     const std::string& config_blob, std::uint64_t seed,
                     const std::vector<std::string>& outputs);

}  // namespace pclick
