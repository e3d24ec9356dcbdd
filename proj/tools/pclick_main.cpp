// pclick_main.cpp — command-line front end: simulate, abc, train, infer,
// exact-posterior, evaluate, report.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pclick/experiments.hpp"
#include "pclick/tls.hpp"

using namespace pclick;

namespace {

int exit_code_for(const Error& e) {
    switch (e.kind) {
        case ErrorKind::Usage:
        case ErrorKind::Compatibility:
        case ErrorKind::GridMismatch:
        case ErrorKind::ShapeMismatch:
        case ErrorKind::Io:
        case ErrorKind::InvalidDimension:
        case ErrorKind::InvalidRate:
        case ErrorKind::InconsistentEfficiency:
        case ErrorKind::UnsupportedModel:
            return 2;
        default:
            return 1;
    }
}

PhotoclickRecord record_from_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) fail(ErrorKind::Usage, "cannot open record file " + path);
    nlohmann::json j;
    is >> j;
    PhotoclickRecord rec;
    rec.waiting_times = j.at("waiting_times").get<std::vector<double>>();
    if (j.contains("channel_labels"))
        rec.channel_labels = j.at("channel_labels").get<std::vector<std::string>>();
    else
        rec.channel_labels.assign(rec.waiting_times.size(), "");
    for (double w : rec.waiting_times) rec.total_time += w;
    rec.validate();
    return rec;
}

PhotoclickRecord load_observed(const std::string& obs_library, int index,
                               const std::string& record_json) {
    if (!record_json.empty()) return record_from_json_file(record_json);
    if (obs_library.empty())
        fail(ErrorKind::Usage, "need --obs-library with --index, or --record");
    TrajectoryLibrary lib = TrajectoryLibrary::load(obs_library);
    if (index < 0 || static_cast<std::size_t>(index) >= lib.size())
        fail(ErrorKind::Usage, "record index out of range");
    return lib.entries[static_cast<std::size_t>(index)].record;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) fail(ErrorKind::Io, "cannot open " + path);
    os << text;
}

ExperimentConfig load_config(const std::string& path, const std::string& family) {
    if (!path.empty()) return ExperimentConfig::from_file(path);
    return ExperimentConfig::defaults_for(family.empty() ? "optomech" : family);
}

int cmd_simulate(const ExperimentConfig& cfg, const std::string& out, bool force) {
    TrajectoryLibrary lib;
    LibraryMetadata meta = cfg.base_metadata();
    GenerationConfig gen;
    gen.n_entries = cfg.library_size;
    gen.n_clicks = cfg.n_clicks;
    gen.seed = cfg.seed;
    gen.dark_rate = cfg.dark_rate;
    gen.threads = cfg.threads;

    if (cfg.model.family == "optomech") {
        ParameterPoint mid;
        mid.names = {"Delta"};
        mid.values = RVec::Constant(1, 0.5 * (cfg.prior[0].lo + cfg.prior[0].hi));
        ModelSpec probe_model = cfg.build_model(mid);
        TruncationReport report = truncation_check(probe_model, std::min(cfg.n_clicks, 20), 3);
        std::printf("truncation check: %s — %s\n", report.pass ? "pass" : "FAIL",
                    report.detail.c_str());
        meta.truncation_note = report.detail;
        if (!report.pass && !force)
            fail(ErrorKind::TruncationInsufficient,
                 "truncation check failed (rerun with --force to override): " + report.detail);
    }
    lib = generate_library([&](const ParameterPoint& p) { return cfg.build_model(p); }, meta,
                           gen);
    lib.save(out, force);
    std::printf("library %s: %zu records, l = %d, id %s\n", out.c_str(), lib.size(),
                lib.meta.n_clicks, lib.meta.id().c_str());
    return 0;
}

int cmd_abc(const ExperimentConfig& cfg, const std::string& library_path,
            const std::string& obs_library, int index, const std::string& record_json,
            const std::string& out, const std::string& accepted_csv) {
    TrajectoryLibrary lib = TrajectoryLibrary::load(library_path);
    PhotoclickRecord obs = load_observed(obs_library, index, record_json);

    std::vector<SummarySpec> specs;
    for (const auto& name : cfg.abc.statistics) {
        SummarySpec spec;
        spec.kind = summary_kind_from_string(name);
        if (spec.kind == SummaryKind::Histogram) spec.bin_edges = lib.meta.histogram_edges;
        specs.push_back(spec);
    }
    PosteriorGrid tmpl = cfg.estimation_grid();
    AbcResult res = abc_posterior_calibrated(obs, lib, specs, tmpl, cfg.abc.min_accept,
                                             cfg.abc.max_accept);
    write_text(out, posterior_to_json(res.posterior));
    std::printf("abc: %zu acceptances (%.3f%%), posterior written to %s\n",
                res.accepted.size(), 100.0 * res.joint_acceptance, out.c_str());
    if (!accepted_csv.empty()) {
        RMat rows(static_cast<Eigen::Index>(res.accepted.size()),
                  res.accepted.empty() ? 1 : res.accepted[0].values.size());
        for (std::size_t i = 0; i < res.accepted.size(); ++i)
            rows.row(static_cast<Eigen::Index>(i)) = res.accepted[i].values.transpose();
        std::vector<std::string> header;
        for (const auto& n : res.accepted[0].names) header.push_back(n);
        write_csv(accepted_csv, header, rows);
    }
    return 0;
}

int cmd_train(const ExperimentConfig& cfg, const std::string& library_path,
              const std::string& out, bool force) {
    TrajectoryLibrary lib = TrajectoryLibrary::load(library_path);
    TrainingCurve curve;
    NeuralModel model = train(lib, cfg.architecture(), cfg.loss_kind(), cfg.train.base, &curve);
    model.save(out, force);
    RMat rows(static_cast<Eigen::Index>(curve.train_loss.size()), 3);
    for (std::size_t e = 0; e < curve.train_loss.size(); ++e) {
        rows(static_cast<Eigen::Index>(e), 0) = static_cast<double>(e);
        rows(static_cast<Eigen::Index>(e), 1) = curve.train_loss[e];
        rows(static_cast<Eigen::Index>(e), 2) = curve.val_loss[e];
    }
    write_csv(out + ".curve.csv", {"epoch", "train_loss", "val_loss"}, rows);
    std::printf("trained %s (%s/%s): best epoch %d, final val %.6g%s\n", out.c_str(),
                to_string(model.arch.frontend).c_str(), to_string(model.loss).c_str(),
                curve.best_epoch,
                curve.val_loss.empty() ? 0.0 : curve.val_loss[curve.best_epoch < 0 ? 0 : curve.best_epoch],
                curve.diverged ? " [diverged; best checkpoint kept]" : "");
    return 0;
}

int cmd_infer(const std::string& model_path, const std::string& obs_library, int index,
              const std::string& record_json, const std::string& out) {
    NeuralModel model = NeuralModel::load(model_path);
    PhotoclickRecord rec = load_observed(obs_library, index, record_json);
    nlohmann::json j;
    if (model.arch.head == HeadKind::Categorical) {
        PosteriorGrid post = predict_posterior(model, rec);
        write_text(out, posterior_to_json(post));
        std::printf("posterior written to %s (mean %.5f)\n", out.c_str(),
                    posterior_mean(post).values[0]);
        return 0;
    }
    if (model.arch.head == HeadKind::Gaussian) {
        GaussianPrediction g = predict_gaussian(model, rec);
        j["mean"] = std::vector<double>(g.mean.data(), g.mean.data() + g.mean.size());
        RMat cov = g.covariance();
        std::vector<std::vector<double>> cv;
        for (Eigen::Index r = 0; r < cov.rows(); ++r)
            cv.push_back(std::vector<double>(cov.row(r).data(), cov.row(r).data() + cov.cols()));
        j["covariance"] = cv;
    } else {
        ParameterPoint p = predict_point(model, rec);
        j["mean"] = std::vector<double>(p.values.data(), p.values.data() + p.values.size());
    }
    j["targets"] = model.arch.target_names;
    write_text(out, j.dump(2));
    std::printf("estimate written to %s\n", out.c_str());
    return 0;
}

int cmd_exact_posterior(const ExperimentConfig& cfg, const std::string& obs_library, int index,
                        const std::string& record_json, const std::string& route,
                        int box_cavity, int box_mech, const std::string& out) {
    PhotoclickRecord rec = load_observed(obs_library, index, record_json);
    PosteriorGrid prior = cfg.estimation_grid();
    PosteriorGrid post;
    if (cfg.model.family == "optomech" && route == "spectral") {
        if (box_cavity <= 0) box_cavity = cfg.model.cavity_dim;
        if (box_mech <= 0) box_mech = cfg.model.mech_dim;
        SpectralScan scan = spectral_posterior_scan(cfg.model.params, box_cavity, box_mech,
                                                    prior.axes[0].values, {rec});
        post = scan_posterior(scan, 0, prior.axes[0].name);
    } else {
        LikelihoodOptions opts;
        opts.route = route == "rk" ? LikelihoodRoute::AdaptiveRk
                     : route == "krylov" ? LikelihoodRoute::Krylov
                                         : LikelihoodRoute::Auto;
        post = posterior_on_grid_pruned(
            [&](const ParameterPoint& p) { return cfg.build_model(p); },
            rec.relabeled(cfg.model.family == "optomech" ? "cavity_detected" : "emission"),
            prior, opts, cfg.threads);
    }
    write_text(out, posterior_to_json(post));
    std::printf("exact posterior written to %s (mean %.5f)\n", out.c_str(),
                posterior_mean(post).values[0]);
    return 0;
}

int cmd_report(const std::string& dir) {
    const std::string manifest_path = dir + "/manifest.json";
    if (!std::filesystem::exists(manifest_path))
        fail(ErrorKind::Usage, "no manifest.json under " + dir);
    std::ifstream is(manifest_path);
    nlohmann::json manifest;
    is >> manifest;
    std::printf("experiment artifacts in %s\n", dir.c_str());
    for (auto& [name, entry] : manifest.items()) {
        std::printf("  %-28s seed %-12llu config %s\n", name.c_str(),
                    static_cast<unsigned long long>(entry.value("seed", 0ull)),
                    entry.value("config_hash", std::string("?")).c_str());
        for (const auto& f : entry.value("outputs", std::vector<std::string>{}))
            std::printf("      %s\n", f.c_str());
    }
    const std::string results_path = dir + "/results.json";
    if (std::filesystem::exists(results_path)) {
        std::ifstream rs(results_path);
        nlohmann::json results;
        rs >> results;
        std::printf("results:\n%s\n", results.dump(2).c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"photoclick inference toolkit"};
    app.require_subcommand(1);

    std::string config_path, family, out, library_path, obs_library, record_json;
    std::string model_path, accepted_csv, route = "spectral", report_dir;
    int index = 0, threads = 0, box_cavity = 0, box_mech = 0;
    bool force = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "experiment config (JSON)");
        sub->add_option("--family", family, "model family when no config is given");
        sub->add_option("--threads", threads, "worker cap (default PCLICK_THREADS or cores)");
    };

    auto* simulate = app.add_subcommand("simulate", "generate a trajectory library");
    add_common(simulate);
    simulate->add_option("--out", out, "output .pclb path")->required();
    simulate->add_flag("--force", force, "overwrite and ignore truncation failures");

    auto* abc = app.add_subcommand("abc", "ABC posterior for one observed record");
    add_common(abc);
    abc->add_option("--library", library_path, "reference library")->required();
    abc->add_option("--obs-library", obs_library, "library holding the observed record");
    abc->add_option("--index", index, "record index in --obs-library");
    abc->add_option("--record", record_json, "observed record as JSON");
    abc->add_option("--out", out, "posterior JSON output")->required();
    abc->add_option("--accepted-csv", accepted_csv, "accepted-theta dump");

    auto* train_cmd = app.add_subcommand("train", "train a neural estimator");
    add_common(train_cmd);
    train_cmd->add_option("--library", library_path, "training library")->required();
    train_cmd->add_option("--out", out, "model output (.pcnm)")->required();
    train_cmd->add_flag("--force", force, "overwrite outputs");

    auto* infer = app.add_subcommand("infer", "run a trained model on a record");
    infer->add_option("--model", model_path, "model file")->required();
    infer->add_option("--obs-library", obs_library, "library holding the record");
    infer->add_option("--index", index, "record index");
    infer->add_option("--record", record_json, "record as JSON");
    infer->add_option("--out", out, "output JSON")->required();

    auto* exact = app.add_subcommand("exact-posterior", "brute-force conditional posterior");
    add_common(exact);
    exact->add_option("--obs-library", obs_library, "library holding the record");
    exact->add_option("--index", index, "record index");
    exact->add_option("--record", record_json, "record as JSON");
    exact->add_option("--route", route, "rk | krylov | spectral (optomech default)");
    exact->add_option("--box-cavity", box_cavity, "spectral evaluation box (cavity)");
    exact->add_option("--box-mech", box_mech, "spectral evaluation box (mech)");
    exact->add_option("--out", out, "posterior JSON output")->required();

    std::string suite;
    auto* evaluate = app.add_subcommand("evaluate", "run an evaluation suite");
    add_common(evaluate);
    evaluate->add_option("--suite", suite,
                         "rmse-curves | posterior-fidelity | darkcounts | timing | pca | "
                         "calibration")->required();
    evaluate->add_option("--library", library_path, "library for ABC/training features");
    evaluate->add_option("--model", model_path, "trained model, when the suite uses one");
    evaluate->add_option("--out", out, "output directory")->required();

    auto* report = app.add_subcommand("report", "summarize an output directory");
    report->add_option("--dir", report_dir, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (threads > 0) set_default_thread_count(threads);
        if (simulate->parsed()) {
            ExperimentConfig cfg = load_config(config_path, family);
            if (threads > 0) cfg.threads = threads;
            return cmd_simulate(cfg, out, force);
        }
        if (abc->parsed()) {
            ExperimentConfig cfg = load_config(config_path, family);
            return cmd_abc(cfg, library_path, obs_library, index, record_json, out,
                           accepted_csv);
        }
        if (train_cmd->parsed()) {
            ExperimentConfig cfg = load_config(config_path, family);
            return cmd_train(cfg, library_path, out, force);
        }
        if (infer->parsed()) return cmd_infer(model_path, obs_library, index, record_json, out);
        if (exact->parsed()) {
            ExperimentConfig cfg = load_config(config_path, family);
            if (threads > 0) cfg.threads = threads;
            return cmd_exact_posterior(cfg, obs_library, index, record_json, route, box_cavity,
                                       box_mech, out);
        }
        if (evaluate->parsed()) {
            ExperimentConfig cfg = load_config(config_path, family);
            if (threads > 0) cfg.threads = threads;
            return run_evaluation_suite(cfg, suite, library_path, model_path, out);
        }
        if (report->parsed()) return cmd_report(report_dir);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
