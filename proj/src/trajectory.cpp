// trajectory.cpp — full-unravelling waiting-time sampler and dark counts

#include "pclick/trajectory.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "pclick/ode.hpp"

namespace pclick {

namespace {

std::string theta_string(const ModelSpec& model) {
    std::ostringstream os;
    os << model.family << "(";
    for (std::size_t i = 0; i < model.theta.names.size(); ++i) {
        if (i) os << ", ";
        os << model.theta.names[i] << "="
           << model.theta.values[static_cast<Eigen::Index>(i)];
    }
    os << ")";
    return os.str();
}

}  // namespace

void PhotoclickRecord::validate() const {
    if (channel_labels.size() != waiting_times.size())
        fail(ErrorKind::InvalidRecord, "label/waiting-time length mismatch");
    double sum = 0.0;
    for (double w : waiting_times) {
        if (!(w > 0.0)) fail(ErrorKind::InvalidRecord, "non-positive waiting time");
        sum += w;
    }
    double scale = std::max(std::abs(total_time), 1e-300);
    if (std::abs(sum - total_time) > 1e-12 * scale)
        fail(ErrorKind::InvalidRecord, "total_time inconsistent with waiting-time sum");
}

PhotoclickRecord PhotoclickRecord::relabeled(const std::string& label) const {
    PhotoclickRecord out = *this;
    for (auto& l : out.channel_labels) l = label;
    return out;
}

CVec no_jump_evolve(const CVec& psi, const ModelSpec& model, double t, const Numerics& num) {
    if (t < 0.0) fail(ErrorKind::Usage, "no_jump_evolve needs t >= 0");
    if (psi.norm() > 1.0 + 1e-9)
        fail(ErrorKind::Usage, "no_jump_evolve expects a (sub)normalized state");
    if (t == 0.0) return psi;
    const CMat h_cond = conditional_hamiltonian(model);
    OdeOptions opt;
    opt.rel_tol = num.ode_rel_tol;
    opt.abs_tol = num.ode_abs_tol;
    opt.max_steps = num.max_steps;
    Dopri5 ode([&](const CVec& y, CVec& out) { out.noalias() = -kI * (h_cond * y); }, opt);
    ode.start(0.0, psi);
    ode.advance_to(t);
    return ode.y();
}

int jump_select(CVec& psi, const ModelSpec& model, double u) {
    const int nch = static_cast<int>(model.channels.size());
    std::vector<double> weight(nch);
    double total = 0.0;
    for (int j = 0; j < nch; ++j) {
        const auto& ch = model.channels[j];
        weight[j] = ch.rate * (ch.op * psi).squaredNorm();
        total += weight[j];
    }
    if (!(total > 0.0))
        fail(ErrorKind::NoJumpPossible, "all jump-channel weights vanish");
    double target = u * total, acc = 0.0;
    int pick = nch - 1;
    for (int j = 0; j < nch; ++j) {
        acc += weight[j];
        if (target < acc) {
            pick = j;
            break;
        }
    }
    CVec post = model.channels[pick].op * psi;
    psi = post / post.norm();
    return pick;
}

TrajectoryEngine::TrajectoryEngine(const ModelSpec& model, SamplerOptions opts)
    : model_(model), opts_(opts) {
    if (model_.detected_channel_indices().empty())
        fail(ErrorKind::Usage, "model has no detected channel");
    if (hermiticity_deviation(model_.hamiltonian) > opts_.numerics.hermiticity_tol)
        fail(ErrorKind::Numerics, "model Hamiltonian is not Hermitian");
    h_cond_ = conditional_hamiltonian(model_);
    scaled_ops_.reserve(model_.channels.size());
    for (const auto& ch : model_.channels)
        scaled_ops_.push_back(std::sqrt(ch.rate) * ch.op);

    if (opts_.kind == SamplerKind::Spectral) {
        Eigen::ComplexEigenSolver<CMat> es(h_cond_);
        if (es.info() != Eigen::Success)
            fail(ErrorKind::Numerics, "eigendecomposition of H_cond failed");
        eigvecs_ = es.eigenvectors();
        eigvals_ = es.eigenvalues();
        eigvecs_inv_ = eigvecs_.inverse();
        double resid = (h_cond_ * eigvecs_ - eigvecs_ * eigvals_.asDiagonal()).norm();
        double scale = std::max(h_cond_.norm(), 1e-300);
        if (resid > 1e-8 * scale) {
            // ill-conditioned eigenbasis: fall back to direct integration
            opts_.kind = SamplerKind::RungeKutta;
        }
        spectral_drift_ = eigvals_.imag().maxCoeff();
        if (spectral_drift_ > 1e-9)
            fail(ErrorKind::Numerics, "H_cond spectrum has a growing mode");
    }
}

struct TrajectoryEngine::Draw {
    // spectral path
    CVec coeff;    // V^-1 psi
    CVec phase;    // workspace
    CVec psi_t;    // workspace, state at queried time
    // runge-kutta path
    CVec psi0;
    double last_norm2 = 1.0;
};

namespace {

double spectral_norm2(const CMat& vecs, const CVec& vals, const CVec& coeff,
                      double t, CVec& phase, CVec& psi_t) {
    const auto n = vals.size();
    for (Eigen::Index i = 0; i < n; ++i)
        phase(i) = std::exp(-kI * vals(i) * t) * coeff(i);
    psi_t.noalias() = vecs * phase;
    return psi_t.squaredNorm();
}

}  // namespace

// Finds t* with |psi(t*)|^2 = r along the no-jump flow starting from the
// normalized state behind d. On return d.psi_t holds the unnormalized
// state at t*. Throws Timeout if the norm cannot reach r within t_budget.
double TrajectoryEngine::solve_jump_time(Draw& d, double r, double t_budget) const {
    const double log_r = std::log(r);
    const double rel = opts_.numerics.jump_time_rel_tol;

    if (opts_.kind == SamplerKind::Spectral) {
        auto g = [&](double t) {
            double n2 = spectral_norm2(eigvecs_, eigvals_, d.coeff, t, d.phase, d.psi_t);
            return std::log(std::max(n2, 1e-300)) - log_r;
        };
        // initial scale from the instantaneous jump rate
        double gamma0 = 0.0;
        {
            // psi(0) is normalized; total weight = sum rate |O psi|^2
            d.psi_t.noalias() = eigvecs_ * d.coeff;
            for (const auto& op : scaled_ops_) gamma0 += (op * d.psi_t).squaredNorm();
        }
        double lo = 0.0, f_lo = -log_r;
        double hi = gamma0 > 1e-300 ? std::min(-log_r / gamma0, t_budget) : t_budget;
        if (hi <= 0.0) hi = std::min(1.0, t_budget);
        double f_hi = g(hi);
        while (f_hi > 0.0) {
            if (hi >= t_budget) {
                if (g(t_budget) > 0.0)
                    fail(ErrorKind::Timeout,
                         "no jump within the time budget at " + theta_string(model_));
                hi = t_budget;
                f_hi = g(hi);
                break;
            }
            lo = hi;
            f_lo = f_hi;
            hi = std::min(hi * 2.0, t_budget);
            f_hi = g(hi);
        }
        // Illinois iteration on the bracket
        int side = 0;
        double t_new = hi;
        for (int it = 0; it < 200 && (hi - lo) > rel * hi; ++it) {
            t_new = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
            if (!(t_new > lo && t_new < hi)) t_new = 0.5 * (lo + hi);
            double f_new = g(t_new);
            if (f_new > 0.0) {
                lo = t_new;
                f_lo = f_new;
                if (side == 1) f_hi *= 0.5;
                side = 1;
            } else {
                hi = t_new;
                f_hi = f_new;
                if (side == -1) f_lo *= 0.5;
                side = -1;
            }
        }
        double t_star = 0.5 * (lo + hi);
        g(t_star);  // leaves psi(t*) in d.psi_t
        return t_star;
    }

    // Runge-Kutta path: integrate until |psi|^2 <= r, then bisect the
    // dense-output interpolant for the crossing time.
    OdeOptions opt;
    opt.rel_tol = opts_.numerics.ode_rel_tol;
    opt.abs_tol = opts_.numerics.ode_abs_tol;
    opt.max_steps = opts_.numerics.max_steps;
    Dopri5 ode([this](const CVec& y, CVec& out) { out.noalias() = -kI * (h_cond_ * y); }, opt);
    ode.start(0.0, d.psi0);
    double prev_norm = d.psi0.norm();
    for (;;) {
        if (ode.t() >= t_budget)
            fail(ErrorKind::Timeout,
                 "no jump within the time budget at " + theta_string(model_));
        ode.step(t_budget);
        double nn = ode.y().norm();
        if (nn > prev_norm * (1.0 + 1e-9) + 1e-12)
            fail(ErrorKind::Numerics, "no-jump norm increased along a step");
        prev_norm = nn;
        if (nn * nn <= r) break;
    }
    // crossing is inside the last step
    double th_lo = 0.0, th_hi = 1.0;
    CVec probe;
    const double h = ode.h_last();
    const double t0 = ode.t_prev();
    while ((th_hi - th_lo) * h > rel * std::max(t0 + th_hi * h, 1e-300)) {
        double mid = 0.5 * (th_lo + th_hi);
        ode.dense(mid, probe);
        if (probe.squaredNorm() > r)
            th_lo = mid;
        else
            th_hi = mid;
    }
    double theta = 0.5 * (th_lo + th_hi);
    ode.dense(theta, d.psi_t);
    return t0 + theta * h;
}

PhotoclickRecord TrajectoryEngine::sample(int n_clicks, StreamKey key) const {
    return sample_tracked(n_clicks, key, nullptr);
}

PhotoclickRecord TrajectoryEngine::sample_tracked(int n_clicks, StreamKey key,
                                                  std::vector<double>* top_level_pops) const {
    if (n_clicks < 1) fail(ErrorKind::Usage, "sample_trajectory needs n_clicks >= 1");
    CounterRng rng(key);
    const int dim = model_.dim();

    // index masks for the top Fock level of each subsystem
    std::vector<std::vector<int>> top_masks;
    if (top_level_pops) {
        const auto& dims = model_.space.subsystem_dims;
        top_level_pops->assign(dims.size(), 0.0);
        int stride = dim;
        for (std::size_t s = 0; s < dims.size(); ++s) {
            stride /= dims[s];
            std::vector<int> mask;
            for (int i = 0; i < dim; ++i)
                if ((i / stride) % dims[s] == dims[s] - 1) mask.push_back(i);
            top_masks.push_back(std::move(mask));
        }
    }
    auto track = [&](const CVec& psi) {
        if (!top_level_pops) return;
        double n2 = psi.squaredNorm();
        if (n2 <= 0.0) return;
        for (std::size_t s = 0; s < top_masks.size(); ++s) {
            double pop = 0.0;
            for (int i : top_masks[s]) pop += std::norm(psi(i));
            (*top_level_pops)[s] = std::max((*top_level_pops)[s], pop / n2);
        }
    };

    PhotoclickRecord rec;
    rec.meta = RecordMeta{key.seed, key.stream, model_id(model_)};
    rec.waiting_times.reserve(n_clicks);
    rec.channel_labels.reserve(n_clicks);

    CVec psi = model_.initial_state;
    Draw d;
    d.phase.resize(dim);
    d.psi_t.resize(dim);

    double t_total = 0.0;
    double clock = 0.0;  // time since the last detected click
    int detected = 0;
    while (detected < n_clicks) {
        double budget = opts_.numerics.max_sim_time - t_total;
        if (budget <= 0.0)
            fail(ErrorKind::Timeout,
                 "simulated-time budget exhausted at " + theta_string(model_));
        if (opts_.kind == SamplerKind::Spectral)
            d.coeff.noalias() = eigvecs_inv_ * psi;
        else
            d.psi0 = psi;

        double r = rng.u01_open_closed();
        double dt = solve_jump_time(d, r, budget);
        t_total += dt;
        clock += dt;
        if (top_level_pops && opts_.kind == SamplerKind::Spectral) {
            // a few mid-interval probes; jump-time state is tracked below
            for (double frac : {0.25, 0.5, 0.75}) {
                spectral_norm2(eigvecs_, eigvals_, d.coeff, frac * dt, d.phase, d.psi_t);
                track(d.psi_t);
            }
            spectral_norm2(eigvecs_, eigvals_, d.coeff, dt, d.phase, d.psi_t);
        }
        track(d.psi_t);

        psi = d.psi_t;
        double u = rng.u01();
        int j = jump_select(psi, model_, u);
        track(psi);
        if (model_.channels[j].kind == ChannelKind::Detected) {
            rec.waiting_times.push_back(clock);
            rec.channel_labels.push_back(model_.channels[j].label);
            rec.total_time += clock;
            clock = 0.0;
            ++detected;
        }
    }
    return rec;
}

PhotoclickRecord sample_trajectory(const ModelSpec& model, int n_clicks, StreamKey key,
                                   SamplerOptions opts) {
    TrajectoryEngine engine(model, opts);
    return engine.sample(n_clicks, key);
}

PhotoclickRecord inject_dark_counts(const PhotoclickRecord& record, DarkCountConfig cfg,
                                    StreamKey key) {
    if (cfg.rate < 0.0) fail(ErrorKind::InvalidRate, "dark-count rate must be >= 0");
    record.validate();
    if (cfg.rate == 0.0) return record;

    CounterRng rng(key);
    const double total = record.total_time;
    std::uint64_t count = rng.poisson(cfg.rate * total);

    std::vector<double> dark_times(count);
    for (auto& t : dark_times) t = rng.u01() * total;
    std::sort(dark_times.begin(), dark_times.end());

    // absolute click times of the original record
    std::vector<std::pair<double, const std::string*>> events;
    events.reserve(record.clicks() + count);
    static const std::string kDark = "dark";
    double acc = 0.0;
    for (std::size_t i = 0; i < record.clicks(); ++i) {
        acc += record.waiting_times[i];
        events.push_back({acc, &record.channel_labels[i]});
    }
    for (const double t : dark_times) events.push_back({t, &kDark});
    std::stable_sort(events.begin(), events.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    // collisions get a deterministic nudge so waiting times stay positive
    for (std::size_t i = 1; i < events.size(); ++i)
        if (events[i].first <= events[i - 1].first)
            events[i].first = events[i - 1].first + 1e-12;

    PhotoclickRecord out;
    out.meta = record.meta;
    out.total_time = record.total_time;
    out.waiting_times.reserve(events.size());
    out.channel_labels.reserve(events.size());
    double prev = 0.0;
    for (const auto& [t, label] : events) {
        out.waiting_times.push_back(t - prev);
        out.channel_labels.push_back(*label);
        prev = t;
    }
    return out;
}

}  // namespace pclick
