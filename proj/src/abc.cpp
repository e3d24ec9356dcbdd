// abc.cpp

#include "pclick/abc.hpp"

#include <algorithm>
#include <cmath>

namespace pclick {

namespace {

// distances from the observed summaries to every entry, one row per statistic
std::vector<RVec> distance_table(const SummaryVector& obs, const TrajectoryLibrary& library,
                                 const std::vector<SummarySpec>& specs) {
    const auto n = library.size();
    std::vector<RVec> dist(specs.size(), RVec(n));
    for (std::size_t i = 0; i < n; ++i) {
        const auto& cached = library.entries[i].summaries;
        if (cached.parts.size() != specs.size())
            fail(ErrorKind::Compatibility, "library summaries do not match the statistic list");
        for (std::size_t s = 0; s < specs.size(); ++s)
            dist[s][static_cast<Eigen::Index>(i)] =
                summary_distance(obs.parts[s], cached.parts[s], specs[s].kind);
    }
    return dist;
}

void check_compatibility(const PhotoclickRecord& observed, const TrajectoryLibrary& library) {
    observed.validate();
    if (library.size() == 0) fail(ErrorKind::Usage, "empty trajectory library");
    if (library.meta.dark_rate == 0.0 &&
        observed.clicks() != static_cast<std::size_t>(library.meta.n_clicks))
        fail(ErrorKind::Compatibility,
             "observed record length " + std::to_string(observed.clicks()) +
                 " does not match library n_clicks " + std::to_string(library.meta.n_clicks));
}

Eigen::Index nearest_cell(const GridAxis& axis, double value) {
    const auto& v = axis.values;
    auto it = std::lower_bound(v.data(), v.data() + v.size(), value);
    Eigen::Index hi = std::min<Eigen::Index>(it - v.data(), v.size() - 1);
    Eigen::Index lo = std::max<Eigen::Index>(hi - 1, 0);
    return (value - v[lo] <= v[hi] - value) ? lo : hi;
}

}  // namespace

RVec calibrate_thresholds(const PhotoclickRecord& observed, const TrajectoryLibrary& library,
                          const std::vector<SummarySpec>& specs, double target_accept) {
    if (!(target_accept > 0.0) || target_accept > 1.0)
        fail(ErrorKind::Usage, "target_accept must lie in (0, 1]");
    check_compatibility(observed, library);
    SummaryVector obs = compute_summaries(observed, specs);
    auto dist = distance_table(obs, library, specs);

    RVec eps(static_cast<Eigen::Index>(specs.size()));
    for (std::size_t s = 0; s < specs.size(); ++s) {
        std::vector<double> d(dist[s].data(), dist[s].data() + dist[s].size());
        std::sort(d.begin(), d.end());
        auto k = static_cast<std::size_t>(std::ceil(target_accept * d.size()));
        k = std::min(std::max<std::size_t>(k, 1), d.size());
        eps[static_cast<Eigen::Index>(s)] = d[k - 1];
        if (d.front() == d.back() && d.size() > 1)
            eps[static_cast<Eigen::Index>(s)] = d.back();  // degenerate distances
    }
    return eps;
}

AbcResult abc_posterior(const PhotoclickRecord& observed, const TrajectoryLibrary& library,
                        const ABCConfig& cfg, const PosteriorGrid& grid_template) {
    if (cfg.statistics.empty()) fail(ErrorKind::Usage, "ABC needs at least one statistic");
    if (cfg.thresholds.size() != static_cast<Eigen::Index>(cfg.statistics.size()))
        fail(ErrorKind::Usage, "one threshold per statistic required");
    if (cfg.thresholds.minCoeff() < 0.0) fail(ErrorKind::Usage, "thresholds must be >= 0");
    check_compatibility(observed, library);
    grid_template.validate();

    SummaryVector obs = compute_summaries(observed, cfg.statistics);
    auto dist = distance_table(obs, library, cfg.statistics);

    AbcResult result;
    for (std::size_t i = 0; i < library.size(); ++i) {
        bool ok = true;
        for (std::size_t s = 0; s < cfg.statistics.size() && ok; ++s)
            ok = dist[s][static_cast<Eigen::Index>(i)] <= cfg.thresholds[static_cast<Eigen::Index>(s)];
        if (ok) result.accepted.push_back(library.entries[i].theta);
    }
    if (result.accepted.empty())
        fail(ErrorKind::EmptyAcceptance,
             "no library entry accepted; recalibrate the thresholds (target_accept up)");

    result.joint_acceptance =
        static_cast<double>(result.accepted.size()) / static_cast<double>(library.size());

    PosteriorGrid post;
    post.axes = grid_template.axes;
    post.weights = RVec::Zero(grid_template.cells());
    std::vector<Eigen::Index> axis_of(post.axes.size());
    for (const auto& theta : result.accepted) {
        Eigen::Index flat = 0;
        for (std::size_t a = 0; a < post.axes.size(); ++a) {
            int t_idx = -1;
            for (std::size_t k = 0; k < theta.names.size(); ++k)
                if (theta.names[k] == post.axes[a].name) t_idx = static_cast<int>(k);
            if (t_idx < 0)
                fail(ErrorKind::GridMismatch,
                     "accepted theta lacks grid axis " + post.axes[a].name);
            flat = flat * post.axes[a].values.size() +
                   nearest_cell(post.axes[a], theta.values[t_idx]);
        }
        post.weights[flat] += 1.0;
    }
    post.weights /= post.weights.sum();
    post.log_evidence = std::log(result.joint_acceptance);
    result.posterior = std::move(post);
    return result;
}

AbcResult abc_posterior_calibrated(const PhotoclickRecord& observed,
                                   const TrajectoryLibrary& library,
                                   const std::vector<SummarySpec>& specs,
                                   const PosteriorGrid& grid_template, int min_accept,
                                   int max_accept) {
    if (min_accept < 1 || max_accept < min_accept)
        fail(ErrorKind::Usage, "invalid acceptance window");
    double target = 2.0 * (min_accept + max_accept) / 2.0 / static_cast<double>(library.size());
    target = std::min(target, 1.0);
    ABCConfig cfg;
    cfg.statistics = specs;
    for (int iter = 0; iter < 40; ++iter) {
        cfg.target_accept = target;
        cfg.thresholds = calibrate_thresholds(observed, library, specs, target);
        AbcResult res;
        try {
            res = abc_posterior(observed, library, cfg, grid_template);
        } catch (const Error& e) {
            if (e.kind != ErrorKind::EmptyAcceptance) throw;
            target = std::min(1.0, target * 2.0);
            continue;
        }
        const int n_acc = static_cast<int>(res.accepted.size());
        if (n_acc >= min_accept && n_acc <= max_accept) return res;
        if (n_acc < min_accept)
            target = std::min(1.0, target * std::max(1.2, 0.5 * (min_accept + max_accept) /
                                                              std::max(1, n_acc)));
        else
            target *= std::max(0.5, 0.45 * (min_accept + max_accept) / n_acc);
        if (target >= 1.0 && n_acc < min_accept) return res;  // library too small
    }
    fail(ErrorKind::EmptyAcceptance, "threshold calibration did not converge");
}

}  // namespace pclick
