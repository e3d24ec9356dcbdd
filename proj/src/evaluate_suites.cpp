// evaluate_suites.cpp — CSV-producing evaluation suites behind the CLI

#include <cmath>
#include <cstdio>

#include "pclick/experiments.hpp"
#include "pclick/tls.hpp"

namespace pclick {

namespace {

struct SuiteContext {
    const ExperimentConfig& cfg;
    std::string out_dir;
    std::vector<std::string> outputs;

    void emit(const std::string& name, const std::vector<std::string>& header,
              const RMat& rows) {
        std::filesystem::create_directories(out_dir);
        std::string path = out_dir + "/" + name;
        write_csv(path, header, rows);
        outputs.push_back(path);
    }
};

RMat curve_rows(const RmseCurve& c) {
    RMat rows(c.bucket_centers.size(), 4);
    for (Eigen::Index i = 0; i < c.bucket_centers.size(); ++i) {
        rows(i, 0) = std::abs(c.bucket_centers[i]);  // |Delta| reporting convention
        rows(i, 1) = c.rmse[i];
        rows(i, 2) = c.predicted[i];
        rows(i, 3) = c.counts[i];
    }
    return rows;
}

BucketSet test_records_for(const ExperimentConfig& cfg, std::uint64_t stream_offset) {
    if (cfg.model.family == "optomech")
        return optomech_uniform_records(cfg, cfg.evaluate.test_records, cfg.n_clicks,
                                        cfg.seed + 1, stream_offset);
    BucketSet set;
    set.records.resize(cfg.evaluate.test_records);
    set.truths.resize(cfg.evaluate.test_records);
    for (int i = 0; i < cfg.evaluate.test_records; ++i) {
        CounterRng rng(cfg.seed ^ 0x7165ull, stream_offset + i);
        ParameterPoint p;
        for (const auto& pr : cfg.prior) {
            p.names.push_back(pr.name);
        }
        p.values.resize(static_cast<Eigen::Index>(cfg.prior.size()));
        for (std::size_t a = 0; a < cfg.prior.size(); ++a)
            p.values[static_cast<Eigen::Index>(a)] =
                cfg.prior[a].lo + (cfg.prior[a].hi - cfg.prior[a].lo) * rng.u01();
        ModelSpec m = cfg.build_model(p);
        TrajectoryEngine engine(m);
        set.records[i] = engine.sample(cfg.n_clicks, {cfg.seed + 1, stream_offset + i});
        set.truths[i] = p.values[0];  // first prior axis is the reported one
    }
    return set;
}

EstimatorFn estimator_for_model(const NeuralModel& model) {
    switch (model.arch.head) {
        case HeadKind::Gaussian: return nn_gaussian_estimator(model);
        case HeadKind::Categorical: return nn_classifier_estimator(model);
        default: return nn_point_estimator(model, model.arch.target_names[0]);
    }
}

}  // namespace

int run_evaluation_suite(const ExperimentConfig& cfg, const std::string& suite,
                         const std::string& library_path, const std::string& model_path,
                         const std::string& out_dir) {
    SuiteContext ctx{cfg, out_dir, {}};
    const auto& pr = cfg.prior.front();
    const double lo = pr.lo, hi = pr.hi;

    if (suite == "pca") {
        if (library_path.empty()) fail(ErrorKind::Usage, "pca suite needs --library");
        TrajectoryLibrary lib = TrajectoryLibrary::load(library_path);
        std::vector<PhotoclickRecord> recs;
        RVec totals(static_cast<Eigen::Index>(lib.size()));
        for (std::size_t i = 0; i < lib.size(); ++i) {
            recs.push_back(lib.entries[i].record);
            totals[static_cast<Eigen::Index>(i)] = lib.entries[i].record.total_time;
        }
        PcaResult pca = pca_top_components(recs, 2);
        double corr = pearson_correlation(pca.projections.col(0), totals);
        RMat rows(pca.projections.rows(), 3);
        rows.col(0) = pca.projections.col(0);
        rows.col(1) = pca.projections.col(1);
        rows.col(2) = totals;
        ctx.emit("pca_projections.csv", {"pc1", "pc2", "total_time"}, rows);
        RMat summary(1, 3);
        summary << corr, pca.explained[0], pca.explained[1];
        ctx.emit("pca_summary.csv", {"corr_pc1_total_time", "var_pc1", "var_pc2"}, summary);
        std::printf("pca: |corr(PC1, total time)| = %.4f\n", std::abs(corr));
    } else if (suite == "rmse-curves" || suite == "darkcounts" || suite == "timing") {
        if (library_path.empty()) fail(ErrorKind::Usage, suite + " suite needs --library");
        TrajectoryLibrary lib = TrajectoryLibrary::load(library_path);
        PosteriorGrid tmpl = cfg.estimation_grid();
        EstimatorFn abc_est = abc_estimator(lib, tmpl, cfg.abc.min_accept, cfg.abc.max_accept);

        BucketSet test = test_records_for(cfg, 7000000);
        std::vector<PhotoclickRecord> stripped;
        const std::string detected_label =
            cfg.model.family == "optomech" ? "cavity_detected" : "emission";
        for (const auto& r : test.records) stripped.push_back(r.relabeled(detected_label));

        if (suite == "rmse-curves") {
            RmseCurve abc_curve = rmse_curve(abc_est, stripped, test.truths, lo, hi,
                                             cfg.evaluate.bucket_width);
            ctx.emit("rmse_abc.csv", {"abs_delta", "rmse", "predicted", "count"},
                     curve_rows(abc_curve));
            if (!model_path.empty()) {
                NeuralModel model = NeuralModel::load(model_path);
                RmseCurve nn_curve = rmse_curve(estimator_for_model(model), stripped,
                                                test.truths, lo, hi, cfg.evaluate.bucket_width);
                ctx.emit("rmse_model.csv", {"abs_delta", "rmse", "predicted", "count"},
                         curve_rows(nn_curve));
            }
        } else if (suite == "darkcounts") {
            for (double rate : cfg.evaluate.dark_rates) {
                BucketSet noisy = with_dark_counts(test, rate, cfg.seed + 77, detected_label);
                RmseCurve clean_curve = rmse_curve(abc_est, stripped, test.truths, lo, hi,
                                                   cfg.evaluate.bucket_width);
                RmseCurve noisy_curve = rmse_curve(abc_est, noisy.records, noisy.truths, lo,
                                                   hi, cfg.evaluate.bucket_width);
                RMat rows(clean_curve.bucket_centers.size(), 4);
                for (Eigen::Index i = 0; i < rows.rows(); ++i) {
                    rows(i, 0) = std::abs(clean_curve.bucket_centers[i]);
                    rows(i, 1) = clean_curve.rmse[i];
                    rows(i, 2) = i < noisy_curve.rmse.size() ? noisy_curve.rmse[i]
                                                             : std::nan("");
                    rows(i, 3) = rows(i, 2) - rows(i, 1);
                }
                char name[64];
                std::snprintf(name, sizeof(name), "darkcounts_abc_%g.csv", rate);
                ctx.emit(name, {"abs_delta", "rmse_clean", "rmse_noisy", "degradation"}, rows);
            }
        } else {  // timing
            std::vector<PhotoclickRecord> subset(
                stripped.begin(), stripped.begin() + std::min<std::size_t>(60, stripped.size()));
            TimingReport abc_time =
                timing_benchmark([&](const PhotoclickRecord& r) { (void)abc_est(r); }, subset);
            RMat rows(1, 3);
            rows(0, 0) = abc_time.median_seconds;
            rows(0, 1) = std::nan("");
            rows(0, 2) = std::nan("");
            if (!model_path.empty()) {
                NeuralModel model = NeuralModel::load(model_path);
                EstimatorFn nn_est = estimator_for_model(model);
                TimingReport nn_time = timing_benchmark(
                    [&](const PhotoclickRecord& r) { (void)nn_est(r); }, subset);
                rows(0, 1) = nn_time.median_seconds;
                rows(0, 2) = abc_time.median_seconds / nn_time.median_seconds;
            }
            ctx.emit("timing.csv", {"abc_median_s", "model_median_s", "speedup"}, rows);
            std::printf("timing: abc %.4gs median%s\n", abc_time.median_seconds,
                        rows(0, 2) > 0 ? (" speedup " + std::to_string(rows(0, 2))).c_str()
                                       : "");
        }
    } else if (suite == "posterior-fidelity") {
        if (library_path.empty()) fail(ErrorKind::Usage, "posterior-fidelity needs --library");
        TrajectoryLibrary lib = TrajectoryLibrary::load(library_path);
        PosteriorGrid tmpl = cfg.estimation_grid();
        auto specs = lib.default_statistics();

        const int n_test = std::min(cfg.evaluate.test_records, 12);
        BucketSet test = test_records_for(cfg, 9000000);
        test.records.resize(n_test);
        RMat rows(n_test, 4);
        for (int i = 0; i < n_test; ++i) {
            PosteriorGrid exact;
            const std::string detected_label =
                cfg.model.family == "optomech" ? "cavity_detected" : "emission";
            PhotoclickRecord rec = test.records[i].relabeled(detected_label);
            if (cfg.model.family == "tls") {
                exact = exact_posterior_tls(rec, tmpl, cfg.model.params.at("kappa"),
                                            tmpl.axes.size() == 1
                                                ? std::optional<double>(
                                                      cfg.model.params.count("Omega")
                                                          ? cfg.model.params.at("Omega")
                                                          : 1.0)
                                                : std::nullopt);
            } else {
                SpectralScan scan = spectral_posterior_scan(
                    cfg.model.params, std::min(cfg.model.cavity_dim, 4),
                    std::min(cfg.model.mech_dim, 12), tmpl.axes[0].values, {rec});
                exact = scan_posterior(scan, 0, tmpl.axes[0].name);
            }
            AbcResult abc_res = abc_posterior_calibrated(rec, lib, specs, tmpl,
                                                         cfg.abc.min_accept, cfg.abc.max_accept);
            rows(i, 0) = test.truths[i];
            rows(i, 1) = bhattacharyya(exact, abc_res.posterior);
            rows(i, 2) = std::nan("");
            if (!model_path.empty()) {
                NeuralModel model = NeuralModel::load(model_path);
                if (model.arch.head == HeadKind::Categorical)
                    rows(i, 2) = bhattacharyya(exact, predict_posterior(model, rec));
            }
            rows(i, 3) = posterior_mean(exact).values[0];
            std::printf("record %d: F[abc] = %.4f%s\n", i, rows(i, 1),
                        std::isfinite(rows(i, 2))
                            ? ("  F[classifier] = " + std::to_string(rows(i, 2))).c_str()
                            : "");
        }
        ctx.emit("posterior_fidelity.csv",
                 {"true_delta", "bc_abc", "bc_classifier", "exact_mean"}, rows);
    } else if (suite == "calibration") {
        if (model_path.empty()) fail(ErrorKind::Usage, "calibration needs --model");
        NeuralModel model = NeuralModel::load(model_path);
        if (model.arch.head != HeadKind::Gaussian)
            fail(ErrorKind::Usage, "calibration needs a gaussian-head model");
        BucketSet test = test_records_for(cfg, 11000000);
        const std::string detected_label =
            cfg.model.family == "optomech" ? "cavity_detected" : "emission";
        RMat rows(static_cast<Eigen::Index>(test.records.size()), 3);
        RVec z(static_cast<Eigen::Index>(test.records.size()));
        for (std::size_t i = 0; i < test.records.size(); ++i) {
            GaussianPrediction g =
                predict_gaussian(model, test.records[i].relabeled(detected_label));
            double sigma = std::sqrt(g.covariance()(0, 0));
            double zi = (g.mean[0] - test.truths[static_cast<Eigen::Index>(i)]) / sigma;
            z[static_cast<Eigen::Index>(i)] = zi;
            rows(static_cast<Eigen::Index>(i), 0) = test.truths[static_cast<Eigen::Index>(i)];
            rows(static_cast<Eigen::Index>(i), 1) = g.mean[0];
            rows(static_cast<Eigen::Index>(i), 2) = sigma;
        }
        ctx.emit("calibration_records.csv", {"truth", "mean", "sigma"}, rows);
        double zm = z.mean();
        double zv = (z.array() - zm).square().mean();
        RMat summary(1, 2);
        summary << zm, zv;
        ctx.emit("calibration_summary.csv", {"z_mean", "z_variance"}, summary);
        std::printf("calibration: z mean %.4f, variance %.4f over %d records\n", zm, zv,
                    static_cast<int>(z.size()));
    } else {
        fail(ErrorKind::Usage, "unknown suite: " + suite);
    }

    append_manifest(out_dir, "evaluate-" + suite, cfg.to_json(), cfg.seed, ctx.outputs);
    return 0;
}

}  // namespace pclick
