// evaluation.cpp

#include "pclick/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace pclick {

double bhattacharyya(const PosteriorGrid& p, const PosteriorGrid& q) {
    if (p.axes.size() != q.axes.size())
        fail(ErrorKind::GridMismatch, "bhattacharyya: different axis counts");
    for (std::size_t a = 0; a < p.axes.size(); ++a) {
        if (p.axes[a].name != q.axes[a].name ||
            p.axes[a].values.size() != q.axes[a].values.size() ||
            (p.axes[a].values - q.axes[a].values).cwiseAbs().maxCoeff() > 1e-12)
            fail(ErrorKind::GridMismatch, "bhattacharyya: grids differ");
    }
    double acc = 0.0;
    for (Eigen::Index i = 0; i < p.weights.size(); ++i)
        acc += std::sqrt(p.weights[i] * q.weights[i]);
    return std::min(acc, 1.0 + 1e-12);
}

RmseCurve rmse_curve(const EstimatorFn& estimator,
                     const std::vector<PhotoclickRecord>& records, const RVec& truths,
                     double lo, double hi, double bucket_width) {
    if (static_cast<Eigen::Index>(records.size()) != truths.size())
        fail(ErrorKind::Usage, "rmse_curve: records/truths length mismatch");
    if (!(bucket_width > 0.0) || !(hi > lo)) fail(ErrorKind::Usage, "rmse_curve: bad bucketing");

    const int nb = static_cast<int>(std::ceil((hi - lo) / bucket_width));
    RVec se = RVec::Zero(nb), pred = RVec::Zero(nb);
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(nb), pred_counts = Eigen::VectorXi::Zero(nb);

    for (std::size_t i = 0; i < records.size(); ++i) {
        double t = truths[static_cast<Eigen::Index>(i)];
        int b = std::clamp(static_cast<int>((t - lo) / bucket_width), 0, nb - 1);
        Estimate e = estimator(records[i]);
        se[b] += (e.value - t) * (e.value - t);
        counts[b] += 1;
        if (std::isfinite(e.predicted_sigma)) {
            pred[b] += e.predicted_sigma;
            pred_counts[b] += 1;
        }
    }

    int kept = 0;
    for (int b = 0; b < nb; ++b) kept += counts[b] > 0;
    RmseCurve curve;
    curve.bucket_centers.resize(kept);
    curve.rmse.resize(kept);
    curve.predicted.resize(kept);
    curve.counts.resize(kept);
    int j = 0;
    for (int b = 0; b < nb; ++b) {
        if (counts[b] == 0) continue;  // omitted with note in the CSV writer
        curve.bucket_centers[j] = lo + (b + 0.5) * bucket_width;
        curve.rmse[j] = std::sqrt(se[b] / counts[b]);
        curve.predicted[j] = pred_counts[b] > 0
                                 ? pred[b] / pred_counts[b]
                                 : std::numeric_limits<double>::quiet_NaN();
        curve.counts[j] = counts[b];
        ++j;
    }
    return curve;
}

OneToOneDensity one_to_one_density(const RVec& estimates, const RVec& truths, int bins,
                                   double lo, double hi, double slope_threshold) {
    if (estimates.size() != truths.size())
        fail(ErrorKind::Usage, "one_to_one_density: length mismatch");
    OneToOneDensity out;
    out.slope_threshold = slope_threshold;
    out.truth_centers = RVec::LinSpaced(bins, lo + 0.5 * (hi - lo) / bins,
                                        hi - 0.5 * (hi - lo) / bins);
    out.estimate_centers = out.truth_centers;
    out.density = RMat::Zero(bins, bins);
    RVec est_sum = RVec::Zero(bins);
    Eigen::VectorXi n = Eigen::VectorXi::Zero(bins);
    const double w = (hi - lo) / bins;
    for (Eigen::Index i = 0; i < truths.size(); ++i) {
        int bt = std::clamp(static_cast<int>((truths[i] - lo) / w), 0, bins - 1);
        int be = std::clamp(static_cast<int>((estimates[i] - lo) / w), 0, bins - 1);
        out.density(bt, be) += 1.0;
        est_sum[bt] += estimates[i];
        n[bt] += 1;
    }
    double total = out.density.sum();
    if (total > 0) out.density /= total;
    out.mean_estimate = RVec::Constant(bins, std::numeric_limits<double>::quiet_NaN());
    for (int b = 0; b < bins; ++b)
        if (n[b] > 0) out.mean_estimate[b] = est_sum[b] / n[b];

    out.plateau_flags.assign(bins, 0);
    for (int b = 0; b < bins; ++b) {
        int a = b > 0 ? b - 1 : b, c = b + 1 < bins ? b + 1 : b;
        if (!(n[a] > 0) || !(n[c] > 0) || a == c) continue;
        double slope = (out.mean_estimate[c] - out.mean_estimate[a]) /
                       (out.truth_centers[c] - out.truth_centers[a]);
        if (slope < slope_threshold) out.plateau_flags[b] = 1;
    }
    return out;
}

PcaResult pca_top_components(const std::vector<PhotoclickRecord>& records, int k) {
    if (records.empty()) fail(ErrorKind::Usage, "pca: no records");
    const auto len = records[0].clicks();
    for (const auto& r : records)
        if (r.clicks() != len) fail(ErrorKind::Compatibility, "pca: records differ in length");
    const auto n = static_cast<Eigen::Index>(records.size());
    const auto d = static_cast<Eigen::Index>(len);
    RMat x(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j)
            x(i, j) = records[static_cast<std::size_t>(i)].waiting_times[static_cast<std::size_t>(j)];

    PcaResult out;
    out.mean = x.colwise().mean();
    RMat centered = x.rowwise() - out.mean.transpose();
    RMat cov = centered.transpose() * centered / static_cast<double>(std::max<Eigen::Index>(n - 1, 1));
    Eigen::SelfAdjointEigenSolver<RMat> es(cov);
    if (es.info() != Eigen::Success) fail(ErrorKind::Numerics, "pca eigensolver failed");

    k = static_cast<int>(std::min<Eigen::Index>(k, d));
    out.components.resize(d, k);
    out.explained.resize(k);
    for (int c = 0; c < k; ++c) {
        out.components.col(c) = es.eigenvectors().col(d - 1 - c);  // descending
        out.explained[c] = es.eigenvalues()[d - 1 - c];
    }
    out.projections = centered * out.components;
    return out;
}

double pearson_correlation(const RVec& a, const RVec& b) {
    if (a.size() != b.size() || a.size() < 2) fail(ErrorKind::Usage, "correlation needs pairs");
    double ma = a.mean(), mb = b.mean();
    double num = ((a.array() - ma) * (b.array() - mb)).sum();
    double da = std::sqrt((a.array() - ma).square().sum());
    double db = std::sqrt((b.array() - mb).square().sum());
    if (da == 0.0 || db == 0.0) return 0.0;
    return num / (da * db);
}

TimingReport timing_benchmark(const std::function<void(const PhotoclickRecord&)>& method,
                              const std::vector<PhotoclickRecord>& records) {
    if (records.size() < 2) fail(ErrorKind::Usage, "timing benchmark needs >= 2 records");
    method(records.front());  // warm caches
    std::vector<double> times;
    times.reserve(records.size());
    for (const auto& r : records) {
        auto t0 = std::chrono::steady_clock::now();
        method(r);
        auto t1 = std::chrono::steady_clock::now();
        times.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    std::sort(times.begin(), times.end());
    TimingReport rep;
    rep.n_records = static_cast<int>(times.size());
    rep.median_seconds = times[times.size() / 2];
    rep.mean_seconds = 0.0;
    for (double t : times) rep.mean_seconds += t;
    rep.mean_seconds /= static_cast<double>(times.size());
    return rep;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const RMat& rows) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) fail(ErrorKind::Io, "cannot open " + path);
    for (std::size_t i = 0; i < header.size(); ++i)
        os << header[i] << (i + 1 < header.size() ? "," : "\n");
    os.precision(12);
    for (Eigen::Index r = 0; r < rows.rows(); ++r)
        for (Eigen::Index c = 0; c < rows.cols(); ++c)
            os << rows(r, c) << (c + 1 < rows.cols() ? "," : "\n");
    if (!os) fail(ErrorKind::Io, "write failure on " + path);
}

void append_manifest(const std::string& dir, const std::string& entry_name,
                     const std::string& config_blob, std::uint64_t seed,
                     const std::vector<std::string>& outputs) {
    std::filesystem::create_directories(dir);
    const std::string path = dir + "/manifest.json";
    nlohmann::json manifest;
    if (std::filesystem::exists(path)) {
        std::ifstream is(path);
        is >> manifest;
    }
    nlohmann::json entry;
    entry["config_hash"] = hex64(fnv1a(config_blob));
    entry["seed"] = seed;
    entry["outputs"] = outputs;
    manifest[entry_name] = entry;
    std::ofstream os(path, std::ios::trunc);
    os << manifest.dump(2) << "\n";
}

}  // namespace pclick
