// acceptance_main.cpp — end-to-end acceptance suite. Each numbered check
// prints one PASS/FAIL line; the exit code is the number of failures.
// Heavy artifacts (libraries, trained models, grid scans) are cached under
// the work directory so reruns are cheap.

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

#include "pclick/experiments.hpp"
#include "pclick/tls.hpp"

using namespace pclick;
using Clock = std::chrono::steady_clock;

namespace {

std::string g_work = "acceptance_work";
nlohmann::json g_results;
int g_failures = 0;

void report(int id, bool pass, const std::string& text) {
    std::printf("%s criterion %2d: %s\n", pass ? "PASS" : "FAIL", id, text.c_str());
    std::fflush(stdout);
    g_results["criteria"][std::to_string(id)] = {{"pass", pass}, {"detail", text}};
    if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof(buf), f, args);
    va_end(args);
    return buf;
}

// ---- shared configuration -----------------------------------------------------

constexpr double kDelta1 = -2.8284271247461903;  // -g^2/omega_M at the reference point
constexpr double kDelta2 = -5.656854249492381;
constexpr double kDelta3 = -8.485281374238571;
constexpr double kMid12 = 0.5 * (kDelta1 + kDelta2);
constexpr double kMid23 = 0.5 * (kDelta2 + kDelta3);

ExperimentConfig tls2_config() {
    ExperimentConfig cfg = ExperimentConfig::defaults_for("tls");
    cfg.library_size = 20000;
    cfg.n_clicks = 50;
    cfg.seed = 20001;
    return cfg;
}

ExperimentConfig tls1_config() {
    ExperimentConfig cfg = ExperimentConfig::defaults_for("tls");
    cfg.prior = {{"Delta", 0.0, 2.0}};
    cfg.model.params["Omega"] = 1.0;
    cfg.library_size = 20000;
    cfg.n_clicks = 50;
    cfg.seed = 20002;
    cfg.train.targets = {"Delta"};
    return cfg;
}

ExperimentConfig optomech_config() {
    ExperimentConfig cfg = ExperimentConfig::defaults_for("optomech");
    cfg.n_clicks = 30;  // desk scale
    cfg.library_size = 6000;
    cfg.seed = 30001;
    cfg.train.targets = {"Delta"};
    return cfg;
}

TrajectoryLibrary make_library(const ExperimentConfig& cfg, const std::string& name,
                               double dark_rate = 0.0, int size_override = 0,
                               std::uint64_t stream_offset = 0) {
    return cached_library(g_work + "/" + name + ".pclb", [&] {
        GenerationConfig gen;
        gen.n_entries = size_override > 0 ? size_override : cfg.library_size;
        gen.n_clicks = cfg.n_clicks;
        gen.seed = cfg.seed;
        gen.dark_rate = dark_rate;
        gen.stream_offset = stream_offset;
        return generate_library(
            [&](const ParameterPoint& p) { return cfg.build_model(p); },
            cfg.base_metadata(), gen);
    });
}

NeuralModel make_model(const TrajectoryLibrary& lib, const ExperimentConfig& cfg,
                       const std::string& frontend, const std::string& loss,
                       const std::string& name, bool nll_standard = false,
                       int epochs = 400) {
    return cached_model(g_work + "/" + name + ".pcnm", [&] {
        ExperimentConfig c = cfg;
        c.train.frontend = frontend;
        c.train.loss = loss;
        c.train.base.nll_standard_form = nll_standard;
        c.train.base.epochs = epochs;
        c.train.base.seed = cfg.seed + fnv1a(name) % 1000;
        TrainingCurve curve;
        auto t0 = Clock::now();
        NeuralModel model = train(lib, c.architecture(), c.loss_kind(), c.train.base, &curve);
        std::printf("  trained %s: %zu epochs (best %d), val %.5g, %.0f s\n", name.c_str(),
                    curve.val_loss.size(), curve.best_epoch,
                    curve.best_epoch >= 0 ? curve.val_loss[curve.best_epoch] : -1.0,
                    seconds_since(t0));
        return model;
    });
}

// cached spectral scan: records x grid log-likelihood table
SpectralScan cached_scan(const std::string& name, const ExperimentConfig& cfg, int box_cav,
                         int box_mech, const RVec& grid,
                         const std::vector<PhotoclickRecord>& records) {
    const std::string path = g_work + "/" + name + ".scan.json";
    if (std::filesystem::exists(path)) {
        std::ifstream is(path);
        nlohmann::json j;
        is >> j;
        SpectralScan scan;
        auto g = j.at("grid").get<std::vector<double>>();
        scan.grid = Eigen::Map<const RVec>(g.data(), static_cast<Eigen::Index>(g.size()));
        auto ll = j.at("log_like").get<std::vector<std::vector<double>>>();
        scan.log_like.resize(static_cast<Eigen::Index>(ll.size()), scan.grid.size());
        for (std::size_t r = 0; r < ll.size(); ++r)
            scan.log_like.row(static_cast<Eigen::Index>(r)) =
                Eigen::Map<const RVec>(ll[r].data(), scan.grid.size()).transpose();
        return scan;
    }
    auto t0 = Clock::now();
    SpectralScan scan =
        spectral_posterior_scan(cfg.model.params, box_cav, box_mech, grid, records, true);
    std::printf("  scan %s: %zu records x %d cells in %.0f s\n", name.c_str(), records.size(),
                static_cast<int>(grid.size()), seconds_since(t0));
    nlohmann::json j;
    j["grid"] = std::vector<double>(grid.data(), grid.data() + grid.size());
    std::vector<std::vector<double>> ll;
    for (Eigen::Index r = 0; r < scan.log_like.rows(); ++r)
        ll.push_back(std::vector<double>(scan.log_like.row(r).data(),
                                         scan.log_like.row(r).data() + scan.log_like.cols()));
    j["log_like"] = ll;
    std::ofstream os(path);
    os << j.dump();
    return scan;
}

double bucket_rmse(const RVec& estimates, const RVec& truths, double bucket_value) {
    double se = 0.0;
    int n = 0;
    for (Eigen::Index i = 0; i < truths.size(); ++i) {
        if (std::abs(truths[i] - bucket_value) > 1e-9) continue;
        se += (estimates[i] - truths[i]) * (estimates[i] - truths[i]);
        ++n;
    }
    return n ? std::sqrt(se / n) : std::nan("");
}

}  // namespace

// =================================================================================

int main(int argc, char** argv) {
    if (const char* env = std::getenv("PCLICK_ACCEPT_DIR")) g_work = env;
    if (argc > 1) g_work = argv[1];
    std::filesystem::create_directories(g_work);
    std::printf("acceptance work directory: %s\n", g_work.c_str());
    auto t_suite = Clock::now();

    // ---------------- shared artifacts ----------------
    ExperimentConfig tls2 = tls2_config();
    ExperimentConfig tls1 = tls1_config();
    ExperimentConfig om = optomech_config();

    // ---------------- criterion 1: oracle equivalence --------------------------
    try {
        auto t0 = Clock::now();
        CounterRng rng(41, 0);
        double worst = 0.0;
        for (int k = 0; k < 100; ++k) {
            double delta = 2.0 * rng.u01();
            double omega = 0.05 + 1.95 * rng.u01();
            ModelSpec m = build_tls_model(delta, omega, 1.0);
            TrajectoryEngine engine(m);
            PhotoclickRecord rec = engine.sample(20, {671, static_cast<std::uint64_t>(k)});
            double analytic = exact_log_likelihood_tls(rec, delta, omega, 1.0);
            double generic = record_likelihood(m, rec);
            worst = std::max(worst, std::abs(generic - analytic) / std::abs(analytic));
        }
        double dt = seconds_since(t0);
        report(1, worst < 1e-6 && dt < 60.0,
               fmt("generic vs analytic likelihood on 100 records: max rel err %.2e "
                   "(limit 1e-6), runtime %.1f s (limit 60)", worst, dt));
    } catch (const std::exception& e) {
        report(1, false, std::string("exception: ") + e.what());
    }

    // ---------------- criterion 2: simulator fidelity --------------------------
    try {
        ModelSpec m = build_tls_model(0.0, 1.0, 1.0);
        TrajectoryEngine engine(m);
        PhotoclickRecord rec = engine.sample(10000, {42, 0});
        const int nbins = 60;
        const double upper = 12.0, width = upper / nbins;
        std::vector<double> emp(nbins + 1, 0.0);
        for (double w : rec.waiting_times)
            emp[w >= upper ? nbins : static_cast<int>(w / width)] += 1e-4;
        double tv = 0.0, covered = 0.0;
        for (int b = 0; b < nbins; ++b) {
            double mass = 0.0;
            const int sub = 64;
            for (int s = 0; s <= sub; ++s) {
                double tau = b * width + width * s / sub;
                double f = waiting_time_density(0.0, 1.0, 1.0, tau);
                mass += (s == 0 || s == sub) ? 0.5 * f : f;
            }
            mass *= width / sub;
            covered += mass;
            tv += 0.5 * std::abs(emp[b] - mass);
        }
        tv += 0.5 * std::abs(emp[nbins] - std::max(0.0, 1.0 - covered));

        CVec excited = CVec::Zero(2);
        excited(1) = 1.0;
        ModelSpec und = build_tls_model(0.0, 0.0, 1.0);
        double survival = no_jump_evolve(excited, und, 1.0).squaredNorm();
        double surv_err = std::abs(survival - std::exp(-1.0));
        report(2, tv < 0.02 && surv_err < 1e-6,
               fmt("waiting-time TV distance %.4f (limit 0.02); no-jump survival error "
                   "%.2e (limit 1e-6)", tv, surv_err));
    } catch (const std::exception& e) {
        report(2, false, std::string("exception: ") + e.what());
    }

    // ---------------- TLS libraries -------------------------------------------
    TrajectoryLibrary lib_tls2 = make_library(tls2, "tls2_train");
    TrajectoryLibrary lib_tls1 = make_library(tls1, "tls1_train");
    ExperimentConfig tls1_small = tls1;
    tls1_small.seed = 20003;
    TrajectoryLibrary lib_tls1_small = make_library(tls1_small, "tls1_small", 0.0, 2000);
    std::printf("TLS libraries ready (%zu / %zu / %zu records)\n", lib_tls2.size(),
                lib_tls1.size(), lib_tls1_small.size());

    // ---------------- criterion 3: ABC convergence (TLS) -----------------------
    try {
        PosteriorGrid grid101 = PosteriorGrid::uniform(
            {GridAxis{"Delta", RVec::LinSpaced(101, 0.0, 2.0)}});
        auto specs = lib_tls1.default_statistics();
        auto specs_small = lib_tls1_small.default_statistics();

        double bc_big = 0.0, bc_small = 0.0;
        double acc_count = 0.0;
        const int n_obs = 20;
        for (int k = 0; k < n_obs; ++k) {
            CounterRng rng(555, static_cast<std::uint64_t>(k));
            double dtrue = 2.0 * rng.u01();
            ModelSpec m = build_tls_model(dtrue, 1.0, 1.0);
            TrajectoryEngine engine(m);
            PhotoclickRecord obs = engine.sample(50, {556, static_cast<std::uint64_t>(k)});
            PosteriorGrid exact = exact_posterior_tls(obs, grid101, 1.0, 1.0);

            AbcResult big = abc_posterior_calibrated(obs, lib_tls1, specs, grid101, 150, 300);
            AbcResult small =
                abc_posterior_calibrated(obs, lib_tls1_small, specs_small, grid101, 150, 300);
            bc_big += bhattacharyya(big.posterior, exact) / n_obs;
            bc_small += bhattacharyya(small.posterior, exact) / n_obs;
            acc_count += static_cast<double>(big.accepted.size()) / n_obs;
        }
        report(3, bc_big >= 0.9 && bc_big >= bc_small,
               fmt("mean Bhattacharyya vs exact: %.4f at nu=2e4 (~%.0f acceptances, limit "
                   ">= 0.9), %.4f at nu=2e3 (monotone improvement %s)",
                   bc_big, acc_count, bc_small, bc_big >= bc_small ? "yes" : "NO"));
    } catch (const std::exception& e) {
        report(3, false, std::string("exception: ") + e.what());
    }

    // ---------------- criterion 4: regressor near-optimality -------------------
    try {
        auto t0 = Clock::now();
        NeuralModel reg = make_model(lib_tls2, tls2, "histogram", "mse", "tls2_mse");

        GridAxis truth_d{"Delta", RVec::LinSpaced(5, 0.2, 1.8)};
        GridAxis truth_o{"Omega", RVec::LinSpaced(5, 0.2, 1.8)};
        PosteriorGrid est_grid = PosteriorGrid::uniform(
            {GridAxis{"Delta", RVec::LinSpaced(21, 0.0, 2.0)},
             GridAxis{"Omega", RVec::LinSpaced(21, 0.0, 2.0)}});
        const int n_mc = 100;
        RmseSurface surface = true_rmse_map(truth_d, truth_o, 50, n_mc, 1.0, est_grid, 777);

        // same records, neural estimates
        double nn_avg = 0.0, true_avg = 0.0;
        for (Eigen::Index i = 0; i < 5; ++i)
            for (Eigen::Index j = 0; j < 5; ++j) {
                ModelSpec m = build_tls_model(truth_d.values[i], truth_o.values[j], 1.0);
                TrajectoryEngine engine(m);
                double se = 0.0;
                for (int k = 0; k < n_mc; ++k) {
                    std::size_t cell = static_cast<std::size_t>(i) * 5 + j;
                    PhotoclickRecord rec =
                        engine.sample(50, {777, cell * static_cast<std::size_t>(n_mc) + k});
                    ParameterPoint p = predict_point(reg, rec);
                    se += (p.get("Delta") - truth_d.values[i]) * (p.get("Delta") - truth_d.values[i]) +
                          (p.get("Omega") - truth_o.values[j]) * (p.get("Omega") - truth_o.values[j]);
                }
                nn_avg += std::sqrt(se / n_mc) / 25.0;
                true_avg += surface.rmse(i, j) / 25.0;
            }
        double ratio = nn_avg / true_avg;
        double dt = seconds_since(t0);
        report(4, ratio <= 1.2 && dt < 1800.0,
               fmt("regressor RMSE %.4f vs Bayes-optimal %.4f over the 5x5 grid: ratio %.3f "
                   "(limit 1.2), runtime %.0f s (limit 1800)", nn_avg, true_avg, ratio, dt));
        g_results["c4"] = {{"nn_rmse", nn_avg}, {"true_rmse", true_avg}, {"ratio", ratio}};
    } catch (const std::exception& e) {
        report(4, false, std::string("exception: ") + e.what());
    }

    // ---------------- criterion 5: NLL calibration -----------------------------
    try {
        NeuralModel nll = make_model(lib_tls2, tls2, "histogram", "nll", "tls2_nll",
                                     /*nll_standard=*/true);
        const int n_test = 600;
        RVec zd(n_test), zo(n_test);
        for (int k = 0; k < n_test; ++k) {
            CounterRng rng(901, static_cast<std::uint64_t>(k));
            double dtrue = 2.0 * rng.u01();
            double otrue = 0.15 + 1.85 * rng.u01();
            ModelSpec m = build_tls_model(dtrue, otrue, 1.0);
            TrajectoryEngine engine(m);
            PhotoclickRecord rec = engine.sample(50, {902, static_cast<std::uint64_t>(k)});
            GaussianPrediction g = predict_gaussian(nll, rec);
            RMat cov = g.covariance();
            zd[k] = (g.mean[0] - dtrue) / std::sqrt(cov(0, 0));
            zo[k] = (g.mean[1] - otrue) / std::sqrt(cov(1, 1));
        }
        auto stats = [](const RVec& z) {
            double m = z.mean();
            double v = (z.array() - m).square().mean();
            return std::pair<double, double>(m, v);
        };
        auto [md, vd] = stats(zd);
        auto [mo, vo] = stats(zo);
        bool pass = std::abs(md) < 0.1 && vd > 0.7 && vd < 1.3 && std::abs(mo) < 0.1 &&
                    vo > 0.7 && vo < 1.3;
        report(5, pass,
               fmt("standardized residuals over %d records: Delta mean %.3f var %.3f, Omega "
                   "mean %.3f var %.3f (limits |mean|<0.1, var in [0.7,1.3])",
                   n_test, md, vd, mo, vo));
    } catch (const std::exception& e) {
        report(5, false, std::string("exception: ") + e.what());
    }

    // ---------------- criterion 6: classifier posterior fidelity ----------------
    try {
        ExperimentConfig ce_cfg = tls1;
        ce_cfg.train.grid_bins = 101;
        NeuralModel clf = make_model(lib_tls1, ce_cfg, "histogram", "ce", "tls1_ce");
        PosteriorGrid grid101 = PosteriorGrid::uniform(
            {GridAxis{"Delta", RVec::LinSpaced(101, 0.0, 2.0)}});
        double bc = 0.0;
        const int n_obs = 50;
        for (int k = 0; k < n_obs; ++k) {
            CounterRng rng(1111, static_cast<std::uint64_t>(k));
            double dtrue = 2.0 * rng.u01();
            ModelSpec m = build_tls_model(dtrue, 1.0, 1.0);
            TrajectoryEngine engine(m);
            PhotoclickRecord rec = engine.sample(50, {1112, static_cast<std::uint64_t>(k)});
            PosteriorGrid exact = exact_posterior_tls(rec, grid101, 1.0, 1.0);
            PosteriorGrid pred = predict_posterior(clf, rec);
            bc += bhattacharyya(exact, pred) / n_obs;
        }
        report(6, bc >= 0.85,
               fmt("classifier mean Bhattacharyya vs exact over %d held-out records: %.4f "
                   "(limit >= 0.85)", n_obs, bc));
    } catch (const std::exception& e) {
        report(6, false, std::string("exception: ") + e.what());
    }

    // ---------------- criterion 7: CE == KL and gradient checks -----------------
    try {
        // analytic CE-vs-KL gradient identity at the logit level
        CounterRng rng(7, 7);
        RVec logits(11);
        for (int i = 0; i < 11; ++i) logits[i] = rng.normal();
        RVec q = (logits.array() - logits.maxCoeff()).exp();
        q /= q.sum();
        int true_bin = 4;
        RVec grad_ce = q;
        grad_ce[true_bin] -= 1.0;
        // KL gradient via dKL/dq_b = -p_b/q_b and the softmax Jacobian
        RVec grad_kl = RVec::Zero(11);
        for (int j = 0; j < 11; ++j) {
            for (int b = 0; b < 11; ++b) {
                double p = b == true_bin ? 1.0 : 0.0;
                if (p == 0.0) continue;
                double jac = q[b] * ((b == j ? 1.0 : 0.0) - q[j]);
                grad_kl[j] += -(p / q[b]) * jac;
            }
        }
        double ce_kl_gap = (grad_ce - grad_kl).cwiseAbs().maxCoeff();

        // full finite-difference sweeps: every frontend and head
        PhotoclickRecord rec;
        CounterRng rec_rng(77, 0);
        for (int i = 0; i < 6; ++i) {
            double w = 0.2 + 2.0 * rec_rng.u01();
            rec.waiting_times.push_back(w);
            rec.channel_labels.push_back("emission");
            rec.total_time += w;
        }
        double worst_fd = 0.0;
        auto check_arch = [&](Frontend fe, HeadKind head, bool std_nll, std::uint64_t seed) {
            NeuralModel m;
            m.arch.frontend = fe;
            m.arch.recurrent_units = 4;
            m.arch.dense_widths = {6, 5};
            m.arch.head = head;
            m.arch.target_names = head == HeadKind::Categorical
                                      ? std::vector<std::string>{"Delta"}
                                      : std::vector<std::string>{"Delta", "Omega"};
            if (head == HeadKind::Categorical) m.arch.grid_values = RVec::LinSpaced(9, 0.0, 2.0);
            m.nll_standard_form = std_nll;
            m.norm.wait_scale = 1.5;
            m.norm.total_scale = 12.0;
            m.norm.histogram_edges = RVec::LinSpaced(7, 0.0, 6.0);
            m.target_offset = RVec::Zero(m.arch.target_dim());
            m.target_scale = RVec::Ones(m.arch.target_dim());
            int in_dim = fe == Frontend::SequenceEncoder
                             ? m.arch.recurrent_units
                             : static_cast<int>(m.norm.histogram_edges.size()) + 1;
            int total = fe == Frontend::SequenceEncoder ? 2 * (4 + 16 + 4) : 0;
            int prev = in_dim;
            std::vector<int> widths = m.arch.dense_widths;
            widths.push_back(m.arch.head_dim());
            for (int wd : widths) {
                total += wd * prev + wd;
                prev = wd;
            }
            m.weights.resize(total);
            CounterRng wr(seed, 3);
            for (Eigen::Index i = 0; i < m.weights.size(); ++i)
                m.weights[i] = 0.4 * wr.normal();
            RVec truth = head == HeadKind::Categorical ? RVec::Constant(1, 0.9)
                                                       : RVec::Constant(2, 0.7);
            RVec grad, dummy;
            loss_and_gradient(m, rec, truth, grad);
            const double eps = 1e-6;
            for (Eigen::Index k = 0; k < m.weights.size(); ++k) {
                double keep = m.weights[k];
                m.weights[k] = keep + eps;
                double lp = loss_and_gradient(m, rec, truth, dummy);
                m.weights[k] = keep - eps;
                double lm = loss_and_gradient(m, rec, truth, dummy);
                m.weights[k] = keep;
                double fd = (lp - lm) / (2.0 * eps);
                double scale = std::max({std::abs(fd), std::abs(grad[k]), 1e-4});
                worst_fd = std::max(worst_fd, std::abs(fd - grad[k]) / scale);
            }
        };
        check_arch(Frontend::HistogramFeatures, HeadKind::Point, false, 1);
        check_arch(Frontend::HistogramFeatures, HeadKind::Gaussian, false, 2);
        check_arch(Frontend::HistogramFeatures, HeadKind::Gaussian, true, 3);
        check_arch(Frontend::HistogramFeatures, HeadKind::Categorical, false, 4);
        check_arch(Frontend::SequenceEncoder, HeadKind::Point, false, 5);
        check_arch(Frontend::SequenceEncoder, HeadKind::Gaussian, false, 6);
        check_arch(Frontend::SequenceEncoder, HeadKind::Categorical, false, 7);
        report(7, ce_kl_gap < 1e-10 && worst_fd < 1e-4,
               fmt("CE-vs-KL gradient gap %.2e (limit 1e-10); worst finite-difference "
                   "relative error across frontends/heads %.2e (limit 1e-4)",
                   ce_kl_gap, worst_fd));
    } catch (const std::exception& e) {
        report(7, false, std::string("exception: ") + e.what());
    }

    // ---------------- optomech artifacts ---------------------------------------
    TrajectoryLibrary lib_om = make_library(om, "om_train");
    std::printf("optomech library ready (%zu records, l = %d)\n", lib_om.size(),
                lib_om.meta.n_clicks);

    const std::vector<double> bucket_deltas = {kDelta1, kMid12, kDelta2, kMid23, kDelta3};
    const int per_bucket = 220;
    BucketSet test_a = optomech_bucket_records(om, bucket_deltas, per_bucket, om.n_clicks,
                                               40001, 0);
    BucketSet test_b = optomech_uniform_records(om, 1200, om.n_clicks, 40002, 500000);
    std::printf("optomech test sets ready (%zu bucket + %zu uniform records)\n",
                test_a.records.size(), test_b.records.size());

    PosteriorGrid om_grid101 = PosteriorGrid::uniform(
        {GridAxis{"Delta", RVec::LinSpaced(101, -10.0, 0.0)}});

    NeuralModel gru_mse = make_model(lib_om, om, "sequence", "mse", "om_gru_mse");
    NeuralModel gru_nll = make_model(lib_om, om, "sequence", "nll", "om_gru_nll",
                                     /*nll_standard=*/true);
    NeuralModel gru_lambda = make_model(lib_om, om, "sequence", "mse_lambda", "om_gru_lambda");
    ExperimentConfig om_ce = om;
    om_ce.train.grid_bins = 101;
    NeuralModel om_clf = make_model(lib_om, om_ce, "histogram", "ce", "om_clf");

    // stripped copies for estimators
    auto strip_set = [](const BucketSet& in) {
        BucketSet out;
        out.truths = in.truths;
        for (const auto& r : in.records) out.records.push_back(r.relabeled("cavity_detected"));
        return out;
    };
    BucketSet test_a_s = strip_set(test_a);
    BucketSet test_b_s = strip_set(test_b);

    // ---------------- criterion 8: resonance structure --------------------------
    RVec abc_means_a(static_cast<Eigen::Index>(test_a.records.size()));
    RVec abc_sigmas_a(static_cast<Eigen::Index>(test_a.records.size()));
    try {
        auto t0 = Clock::now();
        // exact posterior: spectral scan over a 21-point grid, evaluation box
        // validated against the full space (see results.json box_probe)
        const int box_cav = 5, box_mech = 12;
        RVec grid21 = RVec::LinSpaced(21, -10.0, 0.0);
        std::vector<PhotoclickRecord> exact_records;
        RVec exact_truths(4 * per_bucket);
        for (std::size_t i = 0; i < test_a.records.size(); ++i) {
            if (std::abs(test_a.truths[static_cast<Eigen::Index>(i)] - kDelta3) < 1e-9)
                continue;  // the n=3 bucket is exercised by criterion 9
            exact_truths[static_cast<Eigen::Index>(exact_records.size())] =
                test_a.truths[static_cast<Eigen::Index>(i)];
            exact_records.push_back(test_a.records[i]);
        }
        SpectralScan scan = cached_scan("c8_exact", om, box_cav, box_mech, grid21,
                                        exact_records);
        RVec exact_means(static_cast<Eigen::Index>(exact_records.size()));
        for (Eigen::Index r = 0; r < exact_means.size(); ++r)
            exact_means[r] = posterior_mean(scan_posterior(scan, r)).values[0];

        // ABC over the full bucket set (also feeds criteria 10 and the report)
        auto specs = lib_om.default_statistics();
        for (std::size_t i = 0; i < test_a_s.records.size(); ++i) {
            AbcResult res = abc_posterior_calibrated(test_a_s.records[i], lib_om, specs,
                                                     om_grid101, 100, 300);
            ParameterPoint mean = posterior_mean(res.posterior);
            abc_means_a[static_cast<Eigen::Index>(i)] = mean.values[0];
            double var = 0.0;
            for (Eigen::Index c = 0; c < res.posterior.cells(); ++c) {
                double x = res.posterior.axes[0].values[c];
                var += res.posterior.weights[c] * (x - mean.values[0]) * (x - mean.values[0]);
            }
            abc_sigmas_a[static_cast<Eigen::Index>(i)] = std::sqrt(var);
        }

        double ex_d1 = bucket_rmse(exact_means, exact_truths, kDelta1);
        double ex_m12 = bucket_rmse(exact_means, exact_truths, kMid12);
        double ex_d2 = bucket_rmse(exact_means, exact_truths, kDelta2);
        double ex_m23 = bucket_rmse(exact_means, exact_truths, kMid23);
        double ab_d1 = bucket_rmse(abc_means_a, test_a.truths, kDelta1);
        double ab_m12 = bucket_rmse(abc_means_a, test_a.truths, kMid12);
        double ab_d2 = bucket_rmse(abc_means_a, test_a.truths, kDelta2);
        double ab_m23 = bucket_rmse(abc_means_a, test_a.truths, kMid23);

        bool exact_ok = ex_d1 < ex_m12 && ex_d2 < ex_m12 && ex_d2 < ex_m23;
        bool abc_ok = ab_d1 < ab_m12 && ab_d2 < ab_m12 && ab_d2 < ab_m23;
        report(8, exact_ok && abc_ok,
               fmt("RMSE dips at resonances — exact: D1 %.3f | mid12 %.3f | D2 %.3f | mid23 "
                   "%.3f (%s); ABC: %.3f | %.3f | %.3f | %.3f (%s); %.0f s",
                   ex_d1, ex_m12, ex_d2, ex_m23, exact_ok ? "ok" : "NO", ab_d1, ab_m12,
                   ab_d2, ab_m23, abc_ok ? "ok" : "NO", seconds_since(t0)));
        g_results["c8"] = {{"exact", {ex_d1, ex_m12, ex_d2, ex_m23}},
                           {"abc", {ab_d1, ab_m12, ab_d2, ab_m23}}};
    } catch (const std::exception& e) {
        report(8, false, std::string("exception: ") + e.what());
    }

    // ---------------- criterion 9: history dependence ---------------------------
    try {
        EstimatorFn ordered = nn_point_estimator(gru_mse);
        EstimatorFn permuted = permuted_estimator(ordered, 991);

        std::vector<double> se_ord, se_perm;
        for (std::size_t i = 0; i < test_a_s.records.size(); ++i) {
            if (std::abs(test_a.truths[static_cast<Eigen::Index>(i)] - kDelta3) > 1e-9)
                continue;
            double t = test_a.truths[static_cast<Eigen::Index>(i)];
            double eo = ordered(test_a_s.records[i]).value - t;
            double ep = permuted(test_a_s.records[i]).value - t;
            se_ord.push_back(eo * eo);
            se_perm.push_back(ep * ep);
        }
        const auto n = se_ord.size();
        double rmse_ord = std::sqrt(std::accumulate(se_ord.begin(), se_ord.end(), 0.0) / n);
        double rmse_perm = std::sqrt(std::accumulate(se_perm.begin(), se_perm.end(), 0.0) / n);

        // bootstrap the RMSE difference
        CounterRng boot(1999, 0);
        int positive = 0;
        const int B = 2000;
        for (int b = 0; b < B; ++b) {
            double so = 0.0, sp = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                std::size_t j = boot.next_u64() % n;
                so += se_ord[j];
                sp += se_perm[j];
            }
            if (std::sqrt(sp / n) > std::sqrt(so / n)) ++positive;
        }
        double boot_frac = static_cast<double>(positive) / B;

        // exact permutation invariance of the histogram frontend
        bool hist_invariant = true;
        EstimatorFn clf_est = nn_classifier_estimator(om_clf);
        for (int i = 0; i < 20; ++i) {
            PhotoclickRecord rec = test_a_s.records[i];
            PhotoclickRecord perm = rec;
            std::reverse(perm.waiting_times.begin(), perm.waiting_times.end());
            std::swap(perm.waiting_times[2], perm.waiting_times[11]);
            perm.total_time = rec.total_time;
            hist_invariant = hist_invariant &&
                             clf_est(rec).value == clf_est(perm).value;
        }
        report(9, boot_frac >= 0.975 && hist_invariant,
               fmt("sequence model at Delta_3: RMSE ordered %.3f < permuted %.3f over %zu "
                   "records (bootstrap P = %.3f, limit >= 0.975); histogram frontend "
                   "bit-invariant: %s",
                   rmse_ord, rmse_perm, n, boot_frac, hist_invariant ? "yes" : "NO"));
        g_results["c9"] = {{"rmse_ordered", rmse_ord}, {"rmse_permuted", rmse_perm},
                           {"bootstrap", boot_frac}};
    } catch (const std::exception& e) {
        report(9, false, std::string("exception: ") + e.what());
    }

    // ---------------- criterion 10: predicted-uncertainty structure -------------
    try {
        double abc_sigma_d2 = 0.0, abc_rmse_d2 = 0.0;
        int n_d2 = 0;
        for (Eigen::Index i = 0; i < test_a.truths.size(); ++i) {
            if (std::abs(test_a.truths[i] - kDelta2) > 1e-9) continue;
            abc_sigma_d2 += abc_sigmas_a[i];
            abc_rmse_d2 += (abc_means_a[i] - kDelta2) * (abc_means_a[i] - kDelta2);
            ++n_d2;
        }
        abc_sigma_d2 /= n_d2;
        abc_rmse_d2 = std::sqrt(abc_rmse_d2 / n_d2);
        double abc_ratio = abc_sigma_d2 / abc_rmse_d2;

        auto ratio_for = [&](const EstimatorFn& est) {
            double sig = 0.0, se = 0.0;
            int n = 0;
            for (std::size_t i = 0; i < test_a_s.records.size(); ++i) {
                if (std::abs(test_a.truths[static_cast<Eigen::Index>(i)] - kDelta2) > 1e-9)
                    continue;
                Estimate e = est(test_a_s.records[i]);
                sig += e.predicted_sigma;
                se += (e.value - kDelta2) * (e.value - kDelta2);
                ++n;
            }
            return (sig / n) / std::sqrt(se / n);
        };
        double nll_ratio = ratio_for(nn_gaussian_estimator(gru_nll));
        double clf_ratio = ratio_for(nn_classifier_estimator(om_clf));
        report(10, abc_ratio > 1.0,
               fmt("predicted-sigma / attained-RMSE at Delta_2 — ABC %.2f (limit > 1); "
                   "NLL regressor %.2f, classifier %.2f (reported)",
                   abc_ratio, nll_ratio, clf_ratio));
        g_results["c10"] = {{"abc", abc_ratio}, {"nll", nll_ratio}, {"classifier", clf_ratio}};
    } catch (const std::exception& e) {
        report(10, false, std::string("exception: ") + e.what());
    }

    // ---------------- criterion 11: dark counts ---------------------------------
    try {
        // (a) injected counts per 80-click reference trajectory at 1e-2
        ExperimentConfig om80 = om;
        om80.n_clicks = 80;
        BucketSet dark_src = optomech_uniform_records(om80, 200, 80, 50001, 800000);
        int in_range = 0;
        double mean_added = 0.0;
        for (std::size_t i = 0; i < dark_src.records.size(); ++i) {
            PhotoclickRecord noisy =
                inject_dark_counts(dark_src.records[i], {1e-2}, {50002, i});
            auto added = noisy.clicks() - dark_src.records[i].clicks();
            mean_added += static_cast<double>(added) / dark_src.records.size();
            if (added >= 10 && added <= 30) ++in_range;
        }
        double frac = static_cast<double>(in_range) / dark_src.records.size();

        // (b) RMSE degradation at 1e-4 below Monte-Carlo error (ABC,
        // noise-matched library)
        TrajectoryLibrary lib_om_dark = make_library(om, "om_train_dark4", 1e-4);
        auto specs_dark = lib_om_dark.default_statistics();
        auto specs = lib_om.default_statistics();
        BucketSet noisy_b = with_dark_counts(test_b, 1e-4, 50003, "cavity_detected");

        const int n_eval = 400;
        RVec clean_means(n_eval), noisy_means(n_eval);
        for (int i = 0; i < n_eval; ++i) {
            AbcResult c = abc_posterior_calibrated(test_b_s.records[i], lib_om, specs,
                                                   om_grid101, 100, 300);
            AbcResult d = abc_posterior_calibrated(noisy_b.records[i], lib_om_dark, specs_dark,
                                                   om_grid101, 100, 300);
            clean_means[i] = posterior_mean(c.posterior).values[0];
            noisy_means[i] = posterior_mean(d.posterior).values[0];
        }
        double se_clean = 0.0, se_noisy = 0.0;
        for (int i = 0; i < n_eval; ++i) {
            se_clean += (clean_means[i] - test_b.truths[i]) * (clean_means[i] - test_b.truths[i]);
            se_noisy += (noisy_means[i] - test_b.truths[i]) * (noisy_means[i] - test_b.truths[i]);
        }
        double rmse_clean = std::sqrt(se_clean / n_eval);
        double rmse_noisy = std::sqrt(se_noisy / n_eval);
        // bootstrap error bar on the clean RMSE
        CounterRng boot(50004, 0);
        std::vector<double> boots;
        for (int b = 0; b < 1000; ++b) {
            double se = 0.0;
            for (int i = 0; i < n_eval; ++i) {
                int j = static_cast<int>(boot.next_u64() % n_eval);
                se += (clean_means[j] - test_b.truths[j]) * (clean_means[j] - test_b.truths[j]);
            }
            boots.push_back(std::sqrt(se / n_eval));
        }
        std::sort(boots.begin(), boots.end());
        double band = boots[975] - boots[25];  // ~95% spread
        double degradation = std::abs(rmse_noisy - rmse_clean);

        report(11, frac >= 0.6 && degradation < band,
               fmt("dark counts at 1e-2: %.0f%% of 80-click records gain 10-30 counts (mean "
                   "%.1f, limit >= 60%%); at 1e-4: |RMSE change| %.4f < MC band %.4f",
                   100.0 * frac, mean_added, degradation, band));
        g_results["c11"] = {{"frac_in_range", frac}, {"mean_added", mean_added},
                            {"rmse_clean", rmse_clean}, {"rmse_noisy", rmse_noisy},
                            {"mc_band", band}};
    } catch (const std::exception& e) {
        report(11, false, std::string("exception: ") + e.what());
    }

    // ---------------- criterion 12: speed ratio ---------------------------------
    try {
        NeuralModel reg = make_model(lib_tls2, tls2, "histogram", "mse", "tls2_mse");
        PosteriorGrid tmpl = PosteriorGrid::uniform(
            {GridAxis{"Delta", RVec::LinSpaced(21, 0.0, 2.0)},
             GridAxis{"Omega", RVec::LinSpaced(21, 0.0, 2.0)}});
        EstimatorFn abc_est = abc_estimator(lib_tls2, tmpl, 100, 400);
        EstimatorFn nn_est = nn_point_estimator(reg, "Delta");

        std::vector<PhotoclickRecord> timing_records;
        for (int k = 0; k < 60; ++k) {
            CounterRng rng(1600, static_cast<std::uint64_t>(k));
            ModelSpec m = build_tls_model(2.0 * rng.u01(), 0.2 + 1.8 * rng.u01(), 1.0);
            TrajectoryEngine engine(m);
            timing_records.push_back(engine.sample(50, {1601, static_cast<std::uint64_t>(k)}));
        }
        TimingReport abc_time = timing_benchmark(
            [&](const PhotoclickRecord& r) { (void)abc_est(r); }, timing_records);
        TimingReport nn_time = timing_benchmark(
            [&](const PhotoclickRecord& r) { (void)nn_est(r); }, timing_records);
        double ratio = abc_time.median_seconds / nn_time.median_seconds;
        report(12, ratio >= 10.0,
               fmt("median inference latency: ABC %.3f ms vs neural %.4f ms against the "
                   "nu=2e4 library — ratio %.0fx (limit >= 10x)",
                   1e3 * abc_time.median_seconds, 1e3 * nn_time.median_seconds, ratio));
        g_results["c12"] = {{"abc_ms", 1e3 * abc_time.median_seconds},
                            {"nn_ms", 1e3 * nn_time.median_seconds}, {"ratio", ratio}};
    } catch (const std::exception& e) {
        report(12, false, std::string("exception: ") + e.what());
    }

    // ---------------- criterion 13: PCA -----------------------------------------
    try {
        std::vector<PhotoclickRecord> recs;
        RVec totals(static_cast<Eigen::Index>(lib_om.size()));
        for (std::size_t i = 0; i < lib_om.size(); ++i) {
            recs.push_back(lib_om.entries[i].record);
            totals[static_cast<Eigen::Index>(i)] = lib_om.entries[i].record.total_time;
        }
        PcaResult pca = pca_top_components(recs, 2);
        double corr = std::abs(pearson_correlation(pca.projections.col(0), totals));
        // orthonormality and full-reconstruction sanity
        RMat gram = pca.components.transpose() * pca.components;
        double ortho = (gram - RMat::Identity(2, 2)).cwiseAbs().maxCoeff();
        report(13, corr >= 0.95 && ortho < 1e-10,
               fmt("|corr(PC1 projection, total time)| = %.4f on the optomech library "
                   "(limit >= 0.95); component orthonormality %.1e", corr, ortho));
        g_results["c13"] = {{"corr", corr}};
    } catch (const std::exception& e) {
        report(13, false, std::string("exception: ") + e.what());
    }

    // ---------------- criterion 14: bias mitigation -----------------------------
    try {
        auto specs = lib_om.default_statistics();
        const auto n = test_b_s.records.size();
        RVec mean_est(static_cast<Eigen::Index>(n)), mode_est(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            AbcResult res = abc_posterior_calibrated(test_b_s.records[i], lib_om, specs,
                                                     om_grid101, 100, 300);
            mean_est[static_cast<Eigen::Index>(i)] = posterior_mean(res.posterior).values[0];
            mode_est[static_cast<Eigen::Index>(i)] = posterior_mode(res.posterior).values[0];
        }
        RVec mse_est(static_cast<Eigen::Index>(n)), lam_est(static_cast<Eigen::Index>(n));
        EstimatorFn mse_fn = nn_point_estimator(gru_mse);
        EstimatorFn lam_fn = nn_point_estimator(gru_lambda);
        for (std::size_t i = 0; i < n; ++i) {
            mse_est[static_cast<Eigen::Index>(i)] = mse_fn(test_b_s.records[i]).value;
            lam_est[static_cast<Eigen::Index>(i)] = lam_fn(test_b_s.records[i]).value;
        }
        auto plateaus = [&](const RVec& est) {
            OneToOneDensity d = one_to_one_density(est, test_b.truths, 20, -10.0, 0.0);
            return std::accumulate(d.plateau_flags.begin(), d.plateau_flags.end(), 0);
        };
        auto overall_rmse = [&](const RVec& est) {
            return std::sqrt((est - test_b.truths).squaredNorm() / static_cast<double>(n));
        };
        int p_mean = plateaus(mean_est), p_mode = plateaus(mode_est);
        int p_mse = plateaus(mse_est), p_lam = plateaus(lam_est);
        double r_mean = overall_rmse(mean_est), r_mode = overall_rmse(mode_est);
        double r_mse = overall_rmse(mse_est), r_lam = overall_rmse(lam_est);
        bool mode_ok = p_mode < p_mean && r_mode >= 0.99 * r_mean;
        bool lam_ok = p_lam < p_mse && r_lam >= 0.99 * r_mse;
        report(14, mode_ok && lam_ok,
               fmt("plateau buckets / overall RMSE — ABC mean: %d / %.3f vs mode: %d / %.3f "
                   "(%s); MSE regressor: %d / %.3f vs lambda=0.8: %d / %.3f (%s)",
                   p_mean, r_mean, p_mode, r_mode, mode_ok ? "ok" : "NO", p_mse, r_mse,
                   p_lam, r_lam, lam_ok ? "ok" : "NO"));
        g_results["c14"] = {{"abc_mean", {p_mean, r_mean}}, {"abc_mode", {p_mode, r_mode}},
                            {"gru_mse", {p_mse, r_mse}}, {"gru_lambda", {p_lam, r_lam}}};
    } catch (const std::exception& e) {
        report(14, false, std::string("exception: ") + e.what());
    }

    // ---------------- summary ----------------------------------------------------
    std::printf("acceptance suite: %d/14 criteria passed in %.0f s\n", 14 - g_failures,
                seconds_since(t_suite));
    std::ofstream os(g_work + "/results.json");
    os << g_results.dump(2) << "\n";
    return g_failures;
}
