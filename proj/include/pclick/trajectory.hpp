// trajectory.hpp — Photoclick records sampled from the full unravelling:
// no-jump evolution under H_cond, jump-time draws, channel selection,
// dark-count injection and truncation diagnostics.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pclick/common.hpp"
#include "pclick/quantum.hpp"
#include "pclick/rng.hpp"

namespace pclick {

struct RecordMeta {
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
    std::string model_id;
};

struct PhotoclickRecord {
    std::vector<double> waiting_times;  // units of 1/kappa, between detected clicks
    std::vector<std::string> channel_labels;
    double total_time = 0.0;
    std::optional<RecordMeta> meta;

    std::size_t clicks() const { return waiting_times.size(); }
    void validate() const;  // throws InvalidRecord on broken invariants

    // Copy with every click assigned one label; used to strip dark-count
    // marks before a record reaches any estimator.
    PhotoclickRecord relabeled(const std::string& label) const;
};

struct JumpEvent {
    double time = 0.0;
    int channel_index = -1;
    ChannelKind kind = ChannelKind::Dissipative;
};

struct DarkCountConfig {
    double rate = 0.0;  // lambda_DCR, units of kappa
};

// Deterministic no-jump propagation d psi/dt = -i H_cond psi over [0, t]
// (unnormalized); adaptive Dormand-Prince with the configured tolerances.
CVec no_jump_evolve(const CVec& psi, const ModelSpec& model, double t,
                    const Numerics& num = default_numerics());

// Applies a jump to psi: channel j selected with probability
// rate_j |O_j psi|^2 / sum_k rate_k |O_k psi|^2 given u in [0,1);
// psi becomes O_j psi / |O_j psi|. Returns j.
int jump_select(CVec& psi, const ModelSpec& model, double u);

enum class SamplerKind {
    Spectral,  // exact propagator via eigendecomposition of H_cond
    RungeKutta  // adaptive integration with dense-output jump refinement
};

struct SamplerOptions {
    SamplerKind kind = SamplerKind::Spectral;
    Numerics numerics = default_numerics();
};

// Waiting-time sampler for one model; precomputes the conditional generator
// (and its spectral factorization) once, then draws records reproducibly
// from (seed, trajectory index) streams. Immutable after construction.
class TrajectoryEngine {
  public:
    explicit TrajectoryEngine(const ModelSpec& model, SamplerOptions opts = {});

    PhotoclickRecord sample(int n_clicks, StreamKey key) const;

    // As sample(), additionally tracking the maximum population fraction in
    // the top Fock level of each subsystem (for truncation probes).
    PhotoclickRecord sample_tracked(int n_clicks, StreamKey key,
                                    std::vector<double>* top_level_pops) const;

    const ModelSpec& model() const { return model_; }
    SamplerKind kind() const { return opts_.kind; }
    // largest imaginary part of the H_cond spectrum (should be <= 0)
    double spectral_drift() const { return spectral_drift_; }

  private:
    struct Draw;
    double solve_jump_time(Draw& d, double r, double t_budget) const;

    ModelSpec model_;
    SamplerOptions opts_;
    CMat h_cond_;
    // spectral factorization H_cond = V diag(lambda) V^-1
    CMat eigvecs_, eigvecs_inv_;
    CVec eigvals_;
    double spectral_drift_ = 0.0;
    std::vector<CMat> scaled_ops_;  // sqrt(rate) * O per channel
};

PhotoclickRecord sample_trajectory(const ModelSpec& model, int n_clicks, StreamKey key,
                                   SamplerOptions opts = {});

// Poisson background at cfg.rate merged into the record; dark clicks carry
// the label "dark", total_time is preserved.
PhotoclickRecord inject_dark_counts(const PhotoclickRecord& record, DarkCountConfig cfg,
                                    StreamKey key);

struct TruncationReport {
    bool pass = false;
    double max_top_population = 0.0;      // worst top-level occupancy seen
    std::vector<double> per_subsystem;    // same, per subsystem
    double likelihood_rel_change = 0.0;   // probe likelihood vs enlarged dims
    int probe_clicks = 0;
    std::string detail;
};

// Probes Fock-truncation adequacy: runs n_probe trajectories watching the
// top level of each subsystem (threshold 1e-4), then compares the
// log-likelihood of a fixed probe record against an enlarged space
// (cavity_dim + 2, mech_dim + 4), requiring relative change < 1e-3.
TruncationReport truncation_check(const ModelSpec& model, int n_clicks, int n_probe,
                                  const Numerics& num = default_numerics());

}  // namespace pclick
