// experiments.cpp

#include "pclick/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "pclick/rng.hpp"

namespace pclick {

TrajectoryLibrary cached_library(const std::string& path,
                                 const std::function<TrajectoryLibrary()>& make) {
    if (std::filesystem::exists(path)) return TrajectoryLibrary::load(path);
    TrajectoryLibrary lib = make();
    std::filesystem::create_directories(std::filesystem::path(path).parent_path());
    lib.save(path, true);
    return lib;
}

NeuralModel cached_model(const std::string& path, const std::function<NeuralModel()>& make) {
    if (std::filesystem::exists(path)) return NeuralModel::load(path);
    NeuralModel model = make();
    std::filesystem::create_directories(std::filesystem::path(path).parent_path());
    model.save(path, true);
    return model;
}

SpectralScan spectral_posterior_scan(const std::map<std::string, double>& base_params,
                                     int box_cavity, int box_mech, const RVec& grid,
                                     const std::vector<PhotoclickRecord>& records,
                                     bool verbose) {
    SpectralScan scan;
    scan.grid = grid;
    scan.log_like.resize(static_cast<Eigen::Index>(records.size()), grid.size());
    scan.condition.resize(grid.size());
    scan.residual.resize(grid.size());

    std::vector<PhotoclickRecord> stripped;
    stripped.reserve(records.size());
    for (const auto& r : records) stripped.push_back(r.relabeled("cavity_detected"));
    std::vector<const PhotoclickRecord*> ptrs;
    for (const auto& r : stripped) ptrs.push_back(&r);

    for (Eigen::Index gi = 0; gi < grid.size(); ++gi) {
        auto params = base_params;
        params["Delta"] = grid[gi];
        ModelSpec box_model = build_optomech_model(params, box_cavity, box_mech);
        SpectralLikelihoodEngine engine(box_model);
        scan.condition[gi] = engine.condition_estimate();
        scan.residual[gi] = engine.residual();
        if (!engine.usable())
            fail(ErrorKind::Numerics,
                 "spectral engine unusable at Delta = " + std::to_string(grid[gi]));
        scan.log_like.col(gi) = engine.batch_log_likelihood(ptrs);
        if (verbose)
            std::printf("  scan Delta=%.4f done (cond %.1e, resid %.1e)\n", grid[gi],
                        scan.condition[gi], scan.residual[gi]);
    }
    return scan;
}

PosteriorGrid scan_posterior(const SpectralScan& scan, Eigen::Index record_index,
                             const std::string& axis_name) {
    PosteriorGrid prior = PosteriorGrid::uniform({GridAxis{axis_name, scan.grid}});
    return grid_from_log_likelihood(prior, scan.log_like.row(record_index).transpose());
}

EstimatorFn abc_estimator(const TrajectoryLibrary& library, const PosteriorGrid& grid_template,
                          int min_accept, int max_accept, bool use_mode) {
    auto specs = library.default_statistics();
    return [&library, grid_template, specs, min_accept, max_accept, use_mode](
               const PhotoclickRecord& rec) {
        AbcResult res = abc_posterior_calibrated(rec, library, specs, grid_template,
                                                 min_accept, max_accept);
        ParameterPoint point =
            use_mode ? posterior_mode(res.posterior) : posterior_mean(res.posterior);
        // posterior spread of the accepted-theta histogram
        ParameterPoint mean = posterior_mean(res.posterior);
        double var = 0.0;
        for (Eigen::Index c = 0; c < res.posterior.cells(); ++c) {
            ParameterPoint p = res.posterior.cell_point(c);
            var += res.posterior.weights[c] * (p.values - mean.values).squaredNorm();
        }
        return Estimate{point.values[0], std::sqrt(var)};
    };
}

EstimatorFn nn_point_estimator(const NeuralModel& model, const std::string& target) {
    int comp = 0;
    for (std::size_t i = 0; i < model.arch.target_names.size(); ++i)
        if (model.arch.target_names[i] == target) comp = static_cast<int>(i);
    return [&model, comp](const PhotoclickRecord& rec) {
        ParameterPoint p = predict_point(model, rec);
        return Estimate{p.values[comp], std::numeric_limits<double>::quiet_NaN()};
    };
}

EstimatorFn nn_gaussian_estimator(const NeuralModel& model, int component) {
    return [&model, component](const PhotoclickRecord& rec) {
        GaussianPrediction g = predict_gaussian(model, rec);
        RMat cov = g.covariance();
        return Estimate{g.mean[component], std::sqrt(cov(component, component))};
    };
}

EstimatorFn nn_classifier_estimator(const NeuralModel& model, bool use_mode) {
    return [&model, use_mode](const PhotoclickRecord& rec) {
        PosteriorGrid post = predict_posterior(model, rec);
        ParameterPoint mean = posterior_mean(post);
        double var = 0.0;
        for (Eigen::Index c = 0; c < post.cells(); ++c) {
            double x = post.axes[0].values[c];
            var += post.weights[c] * (x - mean.values[0]) * (x - mean.values[0]);
        }
        double value = use_mode ? posterior_mode(post).values[0] : mean.values[0];
        return Estimate{value, std::sqrt(var)};
    };
}

EstimatorFn permuted_estimator(EstimatorFn inner, std::uint64_t seed) {
    return [inner, seed](const PhotoclickRecord& rec) {
        PhotoclickRecord shuffled = rec;
        CounterRng rng(seed, fnv1a(rec.waiting_times.data(),
                                   rec.waiting_times.size() * sizeof(double)));
        auto& w = shuffled.waiting_times;
        for (std::size_t i = w.size(); i > 1; --i)
            std::swap(w[i - 1], w[rng.next_u64() % i]);
        return inner(shuffled);
    };
}

BucketSet optomech_bucket_records(const ExperimentConfig& cfg, const std::vector<double>& deltas,
                                  int per_bucket, int n_clicks, std::uint64_t seed,
                                  std::uint64_t stream_offset) {
    BucketSet set;
    set.records.resize(deltas.size() * per_bucket);
    set.truths.resize(static_cast<Eigen::Index>(set.records.size()));
    std::size_t idx = 0;
    for (double delta : deltas) {
        auto params = cfg.model.params;
        params["Delta"] = delta;
        ModelSpec model =
            build_optomech_model(params, cfg.model.cavity_dim, cfg.model.mech_dim);
        TrajectoryEngine engine(model);
        for (int k = 0; k < per_bucket; ++k, ++idx) {
            set.records[idx] = engine.sample(n_clicks, {seed, stream_offset + idx});
            set.truths[static_cast<Eigen::Index>(idx)] = delta;
        }
    }
    return set;
}

BucketSet optomech_uniform_records(const ExperimentConfig& cfg, int count, int n_clicks,
                                   std::uint64_t seed, std::uint64_t stream_offset) {
    BucketSet set;
    set.records.resize(count);
    set.truths.resize(count);
    const auto& pr = cfg.prior.front();
    for (int i = 0; i < count; ++i) {
        CounterRng rng(seed ^ 0x7472757468ull, stream_offset + i);
        double delta = pr.lo + (pr.hi - pr.lo) * rng.u01();
        auto params = cfg.model.params;
        params["Delta"] = delta;
        ModelSpec model =
            build_optomech_model(params, cfg.model.cavity_dim, cfg.model.mech_dim);
        TrajectoryEngine engine(model);
        set.records[i] = engine.sample(n_clicks, {seed, stream_offset + i});
        set.truths[i] = delta;
    }
    return set;
}

BucketSet with_dark_counts(const BucketSet& clean, double rate, std::uint64_t seed,
                           const std::string& strip_label) {
    BucketSet noisy;
    noisy.truths = clean.truths;
    noisy.records.reserve(clean.records.size());
    for (std::size_t i = 0; i < clean.records.size(); ++i) {
        PhotoclickRecord r = inject_dark_counts(clean.records[i], {rate}, {seed, i});
        noisy.records.push_back(r.relabeled(strip_label));
    }
    return noisy;
}

double rmse_at(const RmseCurve& curve, double center, double tol) {
    for (Eigen::Index i = 0; i < curve.bucket_centers.size(); ++i)
        if (std::abs(curve.bucket_centers[i] - center) <= tol) return curve.rmse[i];
    // nearest bucket
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < curve.bucket_centers.size(); ++i)
        if (std::abs(curve.bucket_centers[i] - center) <
            std::abs(curve.bucket_centers[best] - center))
            best = i;
    return curve.rmse[best];
}

}  // namespace pclick
