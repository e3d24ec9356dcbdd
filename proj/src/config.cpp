// config.cpp

#include "pclick/config.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace pclick {

std::map<std::string, double> reference_optomech_params() {
    const double omega_m = 4.0 * std::sqrt(2.0);
    return {{"kappa", 1.0},          {"kappa_d", 0.9}, {"omega_M", omega_m},
            {"gamma", 1e-3 * omega_m}, {"g", 4.0},     {"m_bar", 1.0},
            {"Omega", 0.3 * omega_m}};
}

ExperimentConfig ExperimentConfig::defaults_for(const std::string& family) {
    ExperimentConfig cfg;
    if (family == "tls") {
        cfg.model.family = "tls";
        cfg.model.params = {{"kappa", 1.0}};
        cfg.model.cavity_dim = cfg.model.mech_dim = 0;
        cfg.prior = {{"Delta", 0.0, 2.0}, {"Omega", 0.0, 2.0}};
        cfg.n_clicks = 50;
        cfg.train.targets = {"Delta", "Omega"};
    } else if (family == "optomech") {
        cfg.model.family = "optomech";
        cfg.prior = {{"Delta", -10.0, 0.0}};
        cfg.n_clicks = 80;
        cfg.train.targets = {"Delta"};
    } else {
        fail(ErrorKind::Usage, "unknown model family: " + family);
    }
    return cfg;
}

namespace {

void apply_json(ExperimentConfig& cfg, const nlohmann::json& j) {
    if (j.contains("model")) {
        const auto& m = j["model"];
        if (m.contains("params"))
            for (auto& [k, v] : m["params"].items())
                cfg.model.params[k] = v.get<double>();
        cfg.model.cavity_dim = m.value("cavity_dim", cfg.model.cavity_dim);
        cfg.model.mech_dim = m.value("mech_dim", cfg.model.mech_dim);
    }
    if (j.contains("prior")) {
        cfg.prior.clear();
        for (const auto& p : j["prior"])
            cfg.prior.push_back({p.at("name").get<std::string>(), p.at("lo").get<double>(),
                                 p.at("hi").get<double>()});
    }
    cfg.n_clicks = j.value("n_clicks", cfg.n_clicks);
    cfg.library_size = j.value("library_size", cfg.library_size);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.dark_rate = j.value("dark_rate", cfg.dark_rate);
    cfg.threads = j.value("threads", cfg.threads);
    cfg.grid_points = j.value("grid_points", cfg.grid_points);
    if (j.contains("abc")) {
        const auto& a = j["abc"];
        if (a.contains("statistics"))
            cfg.abc.statistics = a["statistics"].get<std::vector<std::string>>();
        cfg.abc.target_accept = a.value("target_accept", cfg.abc.target_accept);
        cfg.abc.min_accept = a.value("min_accept", cfg.abc.min_accept);
        cfg.abc.max_accept = a.value("max_accept", cfg.abc.max_accept);
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        cfg.train.frontend = t.value("frontend", cfg.train.frontend);
        cfg.train.loss = t.value("loss", cfg.train.loss);
        if (t.contains("targets")) cfg.train.targets = t["targets"].get<std::vector<std::string>>();
        cfg.train.recurrent_units = t.value("recurrent_units", cfg.train.recurrent_units);
        if (t.contains("dense_widths"))
            cfg.train.dense_widths = t["dense_widths"].get<std::vector<int>>();
        cfg.train.grid_bins = t.value("grid_bins", cfg.train.grid_bins);
        auto& b = cfg.train.base;
        b.epochs = t.value("epochs", b.epochs);
        b.batch_size = t.value("batch_size", b.batch_size);
        b.learning_rate = t.value("learning_rate", b.learning_rate);
        b.seed = t.value("seed", b.seed);
        b.validation_fraction = t.value("validation_fraction", b.validation_fraction);
        b.lambda_bias = t.value("lambda", b.lambda_bias);
        b.patience = t.value("patience", b.patience);
        b.nll_standard_form = t.value("nll_standard_form", b.nll_standard_form);
    }
    if (j.contains("evaluate")) {
        const auto& e = j["evaluate"];
        if (e.contains("suites")) cfg.evaluate.suites = e["suites"].get<std::vector<std::string>>();
        if (e.contains("dark_rates"))
            cfg.evaluate.dark_rates = e["dark_rates"].get<std::vector<double>>();
        cfg.evaluate.bucket_width = e.value("bucket_width", cfg.evaluate.bucket_width);
        cfg.evaluate.test_records = e.value("test_records", cfg.evaluate.test_records);
    }
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    std::string family = j.contains("model") && j["model"].contains("family")
                             ? j["model"]["family"].get<std::string>()
                             : "optomech";
    ExperimentConfig cfg = defaults_for(family);
    apply_json(cfg, j);
    return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) fail(ErrorKind::Usage, "cannot open config " + path);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return from_json(text);
}

std::string ExperimentConfig::to_json() const {
    nlohmann::json j;
    j["model"]["family"] = model.family;
    j["model"]["params"] = model.params;
    j["model"]["cavity_dim"] = model.cavity_dim;
    j["model"]["mech_dim"] = model.mech_dim;
    nlohmann::json prior_json = nlohmann::json::array();
    for (const auto& p : prior)
        prior_json.push_back({{"name", p.name}, {"lo", p.lo}, {"hi", p.hi}});
    j["prior"] = prior_json;
    j["n_clicks"] = n_clicks;
    j["library_size"] = library_size;
    j["seed"] = seed;
    j["dark_rate"] = dark_rate;
    j["threads"] = threads;
    j["grid_points"] = grid_points;
    j["abc"] = {{"statistics", abc.statistics},
                {"target_accept", abc.target_accept},
                {"min_accept", abc.min_accept},
                {"max_accept", abc.max_accept}};
    j["train"] = {{"frontend", train.frontend},
                  {"loss", train.loss},
                  {"targets", train.targets},
                  {"recurrent_units", train.recurrent_units},
                  {"dense_widths", train.dense_widths},
                  {"grid_bins", train.grid_bins},
                  {"epochs", train.base.epochs},
                  {"batch_size", train.base.batch_size},
                  {"learning_rate", train.base.learning_rate},
                  {"seed", train.base.seed},
                  {"validation_fraction", train.base.validation_fraction},
                  {"lambda", train.base.lambda_bias},
                  {"patience", train.base.patience},
                  {"nll_standard_form", train.base.nll_standard_form}};
    j["evaluate"] = {{"suites", evaluate.suites},
                     {"dark_rates", evaluate.dark_rates},
                     {"bucket_width", evaluate.bucket_width},
                     {"test_records", evaluate.test_records}};
    return j.dump(2);
}

ModelSpec ExperimentConfig::build_model(const ParameterPoint& theta) const {
    if (model.family == "tls") {
        double delta = theta.get("Delta");
        double omega = 0.0;
        bool has_omega = false;
        for (const auto& n : theta.names) has_omega = has_omega || n == "Omega";
        if (has_omega)
            omega = theta.get("Omega");
        else if (model.params.count("Omega"))
            omega = model.params.at("Omega");
        else
            fail(ErrorKind::Usage, "tls model needs Omega (prior axis or fixed param)");
        return build_tls_model(delta, omega, model.params.at("kappa"));
    }
    std::map<std::string, double> p = model.params;
    for (std::size_t i = 0; i < theta.names.size(); ++i)
        p[theta.names[i]] = theta.values[static_cast<Eigen::Index>(i)];
    return build_optomech_model(p, model.cavity_dim, model.mech_dim);
}

LibraryMetadata ExperimentConfig::base_metadata() const {
    LibraryMetadata meta;
    meta.model_family = model.family;
    meta.control = model.params;
    if (model.family == "optomech") meta.dims = {model.cavity_dim, model.mech_dim};
    else meta.dims = {2};
    meta.prior = prior;
    return meta;
}

PosteriorGrid ExperimentConfig::estimation_grid() const {
    std::vector<GridAxis> axes;
    for (const auto& p : prior)
        axes.push_back({p.name, RVec::LinSpaced(grid_points, p.lo, p.hi)});
    return PosteriorGrid::uniform(axes);
}

ArchitectureSpec ExperimentConfig::architecture() const {
    ArchitectureSpec arch;
    arch.frontend = train.frontend == "sequence" ? Frontend::SequenceEncoder
                                                 : Frontend::HistogramFeatures;
    arch.recurrent_units = train.recurrent_units;
    arch.dense_widths = train.dense_widths;
    arch.target_names = train.targets.empty()
                            ? [&] {
                                  std::vector<std::string> t;
                                  for (const auto& p : prior) t.push_back(p.name);
                                  return t;
                              }()
                            : train.targets;
    LossKind loss = loss_kind();
    arch.head = loss == LossKind::NLL ? HeadKind::Gaussian
                : loss == LossKind::CE ? HeadKind::Categorical
                                       : HeadKind::Point;
    if (arch.head == HeadKind::Categorical) {
        const auto& p = prior.front();
        arch.grid_values = RVec::LinSpaced(train.grid_bins, p.lo, p.hi);
        arch.target_names = {p.name};
    }
    return arch;
}

LossKind ExperimentConfig::loss_kind() const {
    if (train.loss == "mse") return LossKind::MSE;
    if (train.loss == "nll") return LossKind::NLL;
    if (train.loss == "ce") return LossKind::CE;
    if (train.loss == "mse_lambda") return LossKind::MSE_Lambda;
    fail(ErrorKind::Usage, "unknown loss: " + train.loss);
}

}  // namespace pclick
