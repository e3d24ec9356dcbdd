// posterior.cpp — grid posteriors and conditional-propagation likelihoods

#include "pclick/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "pclick/krylov.hpp"
#include "pclick/ode.hpp"

namespace pclick {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// ---- banded operator kernels ------------------------------------------------
//
// The conditional generator is applied to n x n matrices thousands of times
// per record; the Hamiltonians and jump operators here are a handful of
// (off-)diagonals, so we extract the nonzero diagonals once and apply them
// column-wise. Dense fallbacks cover operators without band structure.

struct DiagBand {
    int offset = 0;  // M(i, i + offset) = coeff(i)
    CVec coeff;      // length n, zero-padded outside validity
};

struct BandedOp {
    std::vector<DiagBand> bands;
    CMat dense;
    bool is_banded = false;
};

BandedOp extract_bands(const CMat& m, int max_bands) {
    const int n = static_cast<int>(m.rows());
    BandedOp out;
    out.dense = m;
    for (int k = -(n - 1); k <= n - 1; ++k) {
        bool nonzero = false;
        for (int i = std::max(0, -k); i < std::min(n, n - k); ++i)
            if (m(i, i + k) != 0.0) {
                nonzero = true;
                break;
            }
        if (!nonzero) continue;
        DiagBand band;
        band.offset = k;
        band.coeff = CVec::Zero(n);
        for (int i = std::max(0, -k); i < std::min(n, n - k); ++i)
            band.coeff(i) = m(i, i + k);
        out.bands.push_back(std::move(band));
        if (static_cast<int>(out.bands.size()) > max_bands) {
            out.bands.clear();
            return out;  // dense fallback
        }
    }
    out.is_banded = true;
    return out;
}

using MatMap = Eigen::Map<CMat>;
using ConstMatMap = Eigen::Map<const CMat>;

// out += scale * M * r
void add_leftmul(const BandedOp& m, const ConstMatMap& r, MatMap& out, cplx scale) {
    const Eigen::Index n = r.rows();
    if (!m.is_banded) {
        out.noalias() += scale * (m.dense * r);
        return;
    }
    for (const auto& band : m.bands) {
        const int k = band.offset;
        const Eigen::Index i0 = std::max(0, -k);
        const Eigen::Index len = std::min(n, n - k) - i0;
        if (len <= 0) continue;
        auto c = band.coeff.segment(i0, len);
        for (Eigen::Index j = 0; j < n; ++j)
            out.col(j).segment(i0, len) +=
                scale * c.cwiseProduct(r.col(j).segment(i0 + k, len));
    }
}

// out += scale * r * M^dag
void add_rightmul_adj(const BandedOp& m, const ConstMatMap& r, MatMap& out, cplx scale) {
    const Eigen::Index n = r.rows();
    if (!m.is_banded) {
        out.noalias() += scale * (r * m.dense.adjoint());
        return;
    }
    for (const auto& band : m.bands) {
        const int k = band.offset;
        const Eigen::Index j0 = std::max(0, -k);
        const Eigen::Index jend = std::min(n, n - k);
        for (Eigen::Index j = j0; j < jend; ++j)
            out.col(j) += (scale * std::conj(band.coeff(j))) * r.col(j + k);
    }
}

// out += scale * M r M^dag for a single-diagonal M; general fallback otherwise
void add_sandwich(const BandedOp& m, const ConstMatMap& r, MatMap& out, double scale,
                  CMat& scratch) {
    const Eigen::Index n = r.rows();
    if (m.is_banded && m.bands.size() == 1) {
        const auto& band = m.bands.front();
        const int k = band.offset;
        const Eigen::Index i0 = std::max(0, -k);
        const Eigen::Index len = std::min(n, n - k) - i0;
        if (len <= 0) return;
        auto c = band.coeff.segment(i0, len);
        for (Eigen::Index j = i0; j < i0 + len; ++j) {
            const cplx cj = scale * std::conj(band.coeff(j));
            out.col(j).segment(i0, len) +=
                cj * c.cwiseProduct(r.col(j + k).segment(i0 + k, len));
        }
        return;
    }
    scratch.noalias() = m.dense * r.matrix();
    out.noalias() += scale * (scratch * m.dense.adjoint());
}

}  // namespace

// ---- PosteriorGrid ----------------------------------------------------------

Eigen::Index PosteriorGrid::cells() const {
    Eigen::Index n = 1;
    for (const auto& ax : axes) n *= ax.values.size();
    return n;
}

ParameterPoint PosteriorGrid::cell_point(Eigen::Index flat) const {
    ParameterPoint p;
    p.values.resize(static_cast<Eigen::Index>(axes.size()));
    Eigen::Index rem = flat;
    for (int a = static_cast<int>(axes.size()) - 1; a >= 0; --a) {
        const auto sz = axes[a].values.size();
        p.values[a] = axes[a].values[rem % sz];
        rem /= sz;
    }
    for (const auto& ax : axes) p.names.push_back(ax.name);
    return p;
}

void PosteriorGrid::validate() const {
    if (axes.empty()) fail(ErrorKind::GridMismatch, "posterior grid has no axes");
    for (const auto& ax : axes) {
        if (ax.values.size() < 1) fail(ErrorKind::GridMismatch, "empty grid axis " + ax.name);
        for (Eigen::Index i = 1; i < ax.values.size(); ++i)
            if (!(ax.values[i] > ax.values[i - 1]))
                fail(ErrorKind::GridMismatch, "grid axis " + ax.name + " not increasing");
    }
    if (weights.size() != cells())
        fail(ErrorKind::GridMismatch, "grid weight count does not match cells");
    if (weights.minCoeff() < 0.0)
        fail(ErrorKind::GridMismatch, "negative posterior weight");
    if (std::abs(weights.sum() - 1.0) > 1e-12)
        fail(ErrorKind::GridMismatch, "posterior weights do not sum to 1");
}

PosteriorGrid PosteriorGrid::uniform(std::vector<GridAxis> axes) {
    PosteriorGrid g;
    g.axes = std::move(axes);
    g.weights = RVec::Constant(g.cells(), 1.0 / static_cast<double>(g.cells()));
    return g;
}

ParameterPoint posterior_mean(const PosteriorGrid& grid) {
    const auto d = static_cast<Eigen::Index>(grid.axes.size());
    ParameterPoint p;
    p.values = RVec::Zero(d);
    for (Eigen::Index c = 0; c < grid.cells(); ++c) {
        ParameterPoint cp = grid.cell_point(c);
        p.values += grid.weights[c] * cp.values;
    }
    for (const auto& ax : grid.axes) p.names.push_back(ax.name);
    return p;
}

ParameterPoint posterior_mode(const PosteriorGrid& grid) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < grid.cells(); ++c)
        if (grid.weights[c] > grid.weights[best]) best = c;  // strict: keeps lowest index on ties
    return grid.cell_point(best);
}

std::string posterior_to_json(const PosteriorGrid& grid) {
    nlohmann::json j;
    for (const auto& ax : grid.axes) {
        nlohmann::json a;
        a["name"] = ax.name;
        a["values"] = std::vector<double>(ax.values.data(), ax.values.data() + ax.values.size());
        j["axes"].push_back(a);
    }
    j["weights"] = std::vector<double>(grid.weights.data(), grid.weights.data() + grid.weights.size());
    j["log_evidence"] = grid.log_evidence;
    ParameterPoint mean = posterior_mean(grid);
    ParameterPoint mode = posterior_mode(grid);
    j["mean"] = std::vector<double>(mean.values.data(), mean.values.data() + mean.values.size());
    j["mode"] = std::vector<double>(mode.values.data(), mode.values.data() + mode.values.size());
    return j.dump(2);
}

PosteriorGrid posterior_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    PosteriorGrid g;
    for (const auto& a : j.at("axes")) {
        GridAxis ax;
        ax.name = a.at("name").get<std::string>();
        auto vals = a.at("values").get<std::vector<double>>();
        ax.values = Eigen::Map<const RVec>(vals.data(), static_cast<Eigen::Index>(vals.size()));
        g.axes.push_back(std::move(ax));
    }
    auto w = j.at("weights").get<std::vector<double>>();
    g.weights = Eigen::Map<const RVec>(w.data(), static_cast<Eigen::Index>(w.size()));
    g.log_evidence = j.value("log_evidence", 0.0);
    g.validate();
    return g;
}

// ---- ConditionalPropagator --------------------------------------------------

struct NoClickKernel {
    BandedOp h_cond;
    std::vector<BandedOp> recycle_ops;  // lost + dissipative channels
    std::vector<double> recycle_rates;
    std::vector<BandedOp> channel_ops;  // all channels, for clicks
    CMat scratch;
    int n = 0;

    explicit NoClickKernel(const ModelSpec& model) {
        n = model.dim();
        h_cond = extract_bands(conditional_hamiltonian(model), 16);
        for (const auto& ch : model.channels) {
            channel_ops.push_back(extract_bands(ch.op, 3));
            if (ch.kind == ChannelKind::Detected || ch.rate == 0.0) continue;
            recycle_ops.push_back(channel_ops.back());
            recycle_rates.push_back(ch.rate);
        }
        scratch.resize(n, n);
    }

    void apply(const CVec& x, CVec& out) {
        ConstMatMap r(x.data(), n, n);
        out.setZero();
        MatMap o(out.data(), n, n);
        add_leftmul(h_cond, r, o, cplx(0.0, -1.0));
        add_rightmul_adj(h_cond, r, o, cplx(0.0, 1.0));
        for (std::size_t u = 0; u < recycle_ops.size(); ++u)
            add_sandwich(recycle_ops[u], r, o, recycle_rates[u], scratch);
    }
};

ConditionalPropagator::ConditionalPropagator(const ModelSpec& model, LikelihoodOptions opts)
    : model_(model), opts_(opts) {
    dim_ = model_.dim();
    detected_ = model_.detected_channel_indices();
    if (detected_.empty()) fail(ErrorKind::Usage, "model has no detected channel");
    route_ = opts_.route;
    if (route_ == LikelihoodRoute::Auto)
        route_ = dim_ <= 16 ? LikelihoodRoute::AdaptiveRk : LikelihoodRoute::Krylov;
    kernel_ = std::make_unique<NoClickKernel>(model_);

    double smax = 0.0;
    for (int j : detected_) {
        Eigen::JacobiSVD<CMat> svd(model_.channels[j].op);
        smax = std::max(smax, model_.channels[j].rate * svd.singularValues()(0) *
                                  svd.singularValues()(0));
    }
    max_click_log_gain_ = std::log(std::max(smax, 1e-300));
    reset();
}

ConditionalPropagator::~ConditionalPropagator() = default;
ConditionalPropagator::ConditionalPropagator(ConditionalPropagator&&) noexcept = default;
ConditionalPropagator& ConditionalPropagator::operator=(ConditionalPropagator&&) noexcept = default;

void ConditionalPropagator::reset() {
    rho_ = CVec::Zero(dim_ * dim_);
    MatMap r(rho_.data(), dim_, dim_);
    r = model_.initial_state * model_.initial_state.adjoint();
    log_weight_ = 0.0;
}

void ConditionalPropagator::no_click(double dt) {
    if (dt < 0.0) fail(ErrorKind::Usage, "no_click needs dt >= 0");
    if (dt == 0.0 || log_weight_ == kNegInf) return;
    ApplyFn apply = [this](const CVec& x, CVec& out) { kernel_->apply(x, out); };

    if (route_ == LikelihoodRoute::Krylov) {
        KrylovOptions kopt;
        CVec out;
        krylov_expmv(apply, dt, rho_, out, kopt, &log_weight_);
        rho_ = std::move(out);
    } else {
        OdeOptions opt;
        opt.rel_tol = opts_.numerics.ode_rel_tol;
        opt.abs_tol = opts_.numerics.ode_abs_tol;
        opt.max_steps = opts_.numerics.max_steps;
        double done = 0.0;
        while (done < dt) {
            double chunk = std::min(dt - done, 100.0);
            Dopri5 ode(apply, opt);
            ode.start(0.0, rho_);
            ode.advance_to(chunk);
            rho_ = ode.y();
            done += chunk;
            ConstMatMap r(rho_.data(), dim_, dim_);
            double tr = r.trace().real();
            if (tr < opts_.numerics.trace_floor && tr > 0.0) {
                log_weight_ += std::log(tr);
                rho_ /= tr;
            }
        }
    }
}

void ConditionalPropagator::click(int detected_channel_index) {
    if (log_weight_ == kNegInf) return;
    const auto& ch = model_.channels.at(detected_channel_index);
    if (ch.kind != ChannelKind::Detected)
        fail(ErrorKind::Usage, "click on a non-detected channel");
    ConstMatMap r(rho_.data(), dim_, dim_);
    CVec next = CVec::Zero(dim_ * dim_);
    MatMap o(next.data(), dim_, dim_);
    add_sandwich(kernel_->channel_ops[detected_channel_index], r, o, ch.rate,
                 kernel_->scratch);
    double tr = o.trace().real();
    if (!(tr > 0.0)) {
        log_weight_ = kNegInf;
        return;
    }
    log_weight_ += std::log(tr);
    rho_ = next / tr;
}

double record_likelihood(const ModelSpec& model, const PhotoclickRecord& record,
                         LikelihoodOptions opts) {
    record.validate();
    auto detected = model.detected_channel_indices();
    // map labels to detected channels
    std::vector<int> click_channel(record.clicks(), -1);
    for (std::size_t i = 0; i < record.clicks(); ++i) {
        const auto& label = record.channel_labels[i];
        if (label.empty() && detected.size() == 1) {
            click_channel[i] = detected[0];
            continue;
        }
        for (int j : detected)
            if (model.channels[j].label == label) {
                click_channel[i] = j;
                break;
            }
        if (click_channel[i] < 0)
            fail(ErrorKind::Compatibility,
                 "record label '" + label + "' is not a detected channel of the model");
    }

    ConditionalPropagator prop(model, opts);
    for (std::size_t i = 0; i < record.clicks(); ++i) {
        prop.no_click(record.waiting_times[i]);
        prop.click(click_channel[i]);
        if (prop.log_weight() == kNegInf) break;
    }
    return prop.log_weight();
}

// ---- grid scans -------------------------------------------------------------

PosteriorGrid grid_from_log_likelihood(const PosteriorGrid& prior, const RVec& log_like) {
    PosteriorGrid out;
    out.axes = prior.axes;
    const Eigen::Index n = prior.cells();
    RVec logw(n);
    double best = kNegInf;
    for (Eigen::Index i = 0; i < n; ++i) {
        double lp = prior.weights[i] > 0.0 ? std::log(prior.weights[i]) : kNegInf;
        logw[i] = lp + log_like[i];
        best = std::max(best, logw[i]);
    }
    if (best == kNegInf) {
        double best_ll = log_like.size() ? log_like.maxCoeff() : kNegInf;
        fail(ErrorKind::DegeneratePosterior,
             "all posterior cells underflowed; max log-likelihood = " + std::to_string(best_ll));
    }
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) sum += std::exp(logw[i] - best);
    out.weights.resize(n);
    for (Eigen::Index i = 0; i < n; ++i)
        out.weights[i] = logw[i] == kNegInf ? 0.0 : std::exp(logw[i] - best) / sum;
    out.log_evidence = best + std::log(sum);
    return out;
}

PosteriorGrid posterior_on_grid(const ModelFamily& family, const PhotoclickRecord& record,
                                const PosteriorGrid& prior, LikelihoodOptions opts,
                                int threads) {
    prior.validate();
    const Eigen::Index n = prior.cells();
    RVec log_like(n);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
        ModelSpec m = family(prior.cell_point(static_cast<Eigen::Index>(i)));
        log_like[static_cast<Eigen::Index>(i)] = record_likelihood(m, record, opts);
    }, threads);
    return grid_from_log_likelihood(prior, log_like);
}

PosteriorGrid posterior_on_grid_pruned(const ModelFamily& family,
                                       const PhotoclickRecord& record,
                                       const PosteriorGrid& prior, LikelihoodOptions opts,
                                       int threads) {
    prior.validate();
    record.validate();
    const Eigen::Index n = prior.cells();
    const int total_clicks = static_cast<int>(record.clicks());

    struct Cell {
        std::unique_ptr<ConditionalPropagator> prop;
        double bound_at_prune = kNegInf;  // upper bound on the final log-likelihood
        int pruned_at = -1;
        bool alive = true;
    };
    std::vector<Cell> cells(n);
    std::vector<ModelSpec> models;
    models.reserve(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        models.push_back(family(prior.cell_point(i)));
        cells[i].prop = std::make_unique<ConditionalPropagator>(models[i], opts);
    }
    const double margin = 60.0;

    auto run_cell = [&](Eigen::Index i, int from_click) {
        auto& c = cells[i];
        int det = models[i].detected_channel_indices().front();
        for (int k = from_click; k < total_clicks; ++k) {
            c.prop->no_click(record.waiting_times[k]);
            c.prop->click(det);
            if (c.prop->log_weight() == kNegInf) break;
        }
    };

    // advance all cells click by click, dropping provably negligible ones
    for (int k = 0; k < total_clicks; ++k) {
        double best = kNegInf;
        for (Eigen::Index i = 0; i < n; ++i) {
            auto& c = cells[i];
            if (!c.alive) continue;
            c.prop->no_click(record.waiting_times[k]);
            int det = models[i].detected_channel_indices().front();
            c.prop->click(det);
            best = std::max(best, c.prop->log_weight());
        }
        const int rem = total_clicks - (k + 1);
        for (Eigen::Index i = 0; i < n; ++i) {
            auto& c = cells[i];
            if (!c.alive) continue;
            double gain = c.prop->max_click_log_gain();
            double bound = c.prop->log_weight() + std::max(gain, 0.0) * rem;
            if (bound < best - margin) {
                c.alive = false;
                c.bound_at_prune = bound;
                c.pruned_at = k + 1;
            }
        }
    }

    double final_best = kNegInf;
    for (Eigen::Index i = 0; i < n; ++i)
        if (cells[i].alive) final_best = std::max(final_best, cells[i].prop->log_weight());

    // post-hoc validation: resurrect any pruned cell whose bound is no longer
    // clearly below the final maximum
    for (Eigen::Index i = 0; i < n; ++i) {
        auto& c = cells[i];
        if (c.alive) continue;
        if (c.bound_at_prune >= final_best - 30.0) {
            c.prop->reset();
            run_cell(i, 0);
            c.alive = true;
            final_best = std::max(final_best, c.prop->log_weight());
        }
    }

    RVec log_like(n);
    for (Eigen::Index i = 0; i < n; ++i)
        log_like[i] = cells[i].alive ? cells[i].prop->log_weight() : kNegInf;
    (void)threads;
    return grid_from_log_likelihood(prior, log_like);
}

}  // namespace pclick
