// config.hpp — Experiment configuration: one JSON file drives library
// generation, ABC, training and evaluation; CLI flags override keys.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "pclick/library.hpp"
#include "pclick/nn.hpp"

namespace pclick {

// Reference optomechanical parameters (scaled units, kappa = 1):
// kappa_d 0.9, omega_M 4*sqrt(2), gamma 1e-3*omega_M, g 4, m_bar 1,
// Omega 0.3*omega_M. Delta enters through the prior.
std::map<std::string, double> reference_optomech_params();

struct ModelConfig {
    std::string family = "optomech";
    std::map<std::string, double> params = reference_optomech_params();
    int cavity_dim = 6, mech_dim = 12;
};

struct AbcSection {
    std::vector<std::string> statistics = {"total_time", "histogram"};
    double target_accept = 0.005;
    int min_accept = 100, max_accept = 400;
};

struct TrainSection {
    TrainConfig base;
    std::string frontend = "histogram";  // "histogram" | "sequence"
    std::string loss = "mse";            // mse | nll | ce | mse_lambda
    std::vector<std::string> targets;    // defaults to the prior names
    int recurrent_units = 40;
    std::vector<int> dense_widths = {64, 16};
    int grid_bins = 101;                 // categorical head resolution
};

struct EvalSection {
    std::vector<std::string> suites = {"rmse-curves"};
    std::vector<double> dark_rates = {1e-2};
    double bucket_width = 0.25;
    int test_records = 400;
};

struct ExperimentConfig {
    ModelConfig model;
    std::vector<PriorRange> prior;  // defaults per family
    int n_clicks = 0;               // defaults: tls 50, optomech 80
    int library_size = 20000;
    std::uint64_t seed = 1;
    double dark_rate = 0.0;
    int threads = 0;
    int grid_points = 101;
    AbcSection abc;
    TrainSection train;
    EvalSection evaluate;

    static ExperimentConfig defaults_for(const std::string& family);
    static ExperimentConfig from_json(const std::string& text);
    static ExperimentConfig from_file(const std::string& path);
    std::string to_json() const;

    // model factory over the estimated parameters
    ModelSpec build_model(const ParameterPoint& theta) const;
    LibraryMetadata base_metadata() const;
    PosteriorGrid estimation_grid() const;  // uniform over the prior box
    ArchitectureSpec architecture() const;
    LossKind loss_kind() const;
};

}  // namespace pclick
