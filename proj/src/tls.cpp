// tls.cpp — closed-form two-level-atom oracle

#include "pclick/tls.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace pclick {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// amplitude <e| exp(-i H_cond tau) |g> for
// H_cond = [[0, omega/2], [omega/2, -delta - i kappa/2]]
cplx emission_amplitude(double delta, double omega, double kappa, double tau) {
    if (tau == 0.0 || omega == 0.0) return 0.0;
    const cplx m11(0.0, 0.0);
    const cplx m22 = -kI * tau * cplx(-delta, -kappa / 2.0);
    const cplx m10 = -kI * tau * (omega / 2.0);
    // M = -i tau H_cond = mu I + B, B traceless, B^2 = s^2 I
    const cplx mu = 0.5 * (m11 + m22);
    const cplx b11 = m11 - mu;
    const cplx s = std::sqrt(b11 * b11 + m10 * m10);
    // entry (1,0) of e^M = e^mu * sinh(s)/s * B10, evaluated from the
    // eigen-exponents mu +/- s (both have non-positive real part)
    if (std::abs(s) < 1e-6) {
        const cplx s2 = s * s;
        return std::exp(mu) * (1.0 + s2 / 6.0 + s2 * s2 / 120.0) * m10;
    }
    return m10 * (std::exp(mu + s) - std::exp(mu - s)) / (2.0 * s);
}

std::pair<cplx, cplx> h_cond_eigenvalues(double delta, double omega, double kappa) {
    const cplx h22(-delta, -kappa / 2.0);
    const cplx disc = std::sqrt(h22 * h22 + cplx(omega * omega, 0.0));
    return {0.5 * (h22 + disc), 0.5 * (h22 - disc)};
}

}  // namespace

double waiting_time_density(double delta, double omega, double kappa, double tau) {
    if (tau < 0.0) fail(ErrorKind::Usage, "waiting_time_density needs tau >= 0");
    if (kappa <= 0.0) fail(ErrorKind::InvalidRate, "waiting_time_density needs kappa > 0");
    const cplx amp = emission_amplitude(delta, omega, kappa, tau);
    return kappa * std::norm(amp);
}

double WaitingTimeDensity::slow_decay_rate() const {
    auto [lp, lm] = h_cond_eigenvalues(delta, omega, kappa);
    double g1 = -2.0 * lp.imag();
    double g2 = -2.0 * lm.imag();
    return std::max(std::min(g1, g2), 0.0);
}

WaitingTimeDensity::Normalization WaitingTimeDensity::normalization() const {
    Normalization out;
    if (omega == 0.0) return out;  // density identically zero

    const double gamma_slow = slow_decay_rate();
    double t_end = 50.0 / kappa;
    if (gamma_slow > 0.0) t_end = std::max(t_end, 40.0 / gamma_slow);
    t_end = std::min(t_end, 1e6);

    auto f = [&](double tau) { return waiting_time_density(delta, omega, kappa, tau); };
    // split at the first Rabi periods where the integrand structure is sharpest
    boost::math::quadrature::gauss_kronrod<double, 15> gk;
    double split = std::min(50.0 / kappa, t_end);
    out.integral = gk.integrate(f, 0.0, split, 15, 1e-10);
    if (t_end > split) out.integral += gk.integrate(f, split, t_end, 15, 1e-10);

    // |amp|^2 <= (sum |c_i|)^2 e^{-gamma_slow tau} with spectral coefficients
    // c_i = (omega/2) / (lambda_+ - lambda_-)
    auto [lp, lm] = h_cond_eigenvalues(delta, omega, kappa);
    double gap = std::abs(lp - lm);
    if (gamma_slow > 0.0 && gap > 1e-12) {
        double c = omega / (2.0 * gap);
        out.tail_bound = kappa * 4.0 * c * c * std::exp(-gamma_slow * t_end) / gamma_slow;
    } else {
        out.tail_bound = std::numeric_limits<double>::infinity();
    }
    return out;
}

double exact_log_likelihood_tls(const PhotoclickRecord& record, double delta,
                                double omega, double kappa) {
    double acc = 0.0;
    for (double dt : record.waiting_times) {
        if (!(dt > 0.0)) fail(ErrorKind::InvalidRecord, "non-positive waiting time");
        double w = waiting_time_density(delta, omega, kappa, dt);
        if (w <= 0.0) return kNegInf;
        acc += std::log(w);
    }
    return acc;
}

PosteriorGrid exact_posterior_tls(const PhotoclickRecord& record, const PosteriorGrid& prior,
                                  double kappa, std::optional<double> fixed_omega) {
    prior.validate();
    int delta_axis = -1, omega_axis = -1;
    for (std::size_t a = 0; a < prior.axes.size(); ++a) {
        if (prior.axes[a].name == "Delta") delta_axis = static_cast<int>(a);
        else if (prior.axes[a].name == "Omega") omega_axis = static_cast<int>(a);
        else fail(ErrorKind::GridMismatch, "tls posterior grid axis must be Delta or Omega");
    }
    if (delta_axis < 0) fail(ErrorKind::GridMismatch, "tls posterior grid needs a Delta axis");
    if (omega_axis < 0 && !fixed_omega)
        fail(ErrorKind::Usage, "tls posterior without an Omega axis needs fixed_omega");

    const Eigen::Index n = prior.cells();
    RVec log_like(n);
    for (Eigen::Index c = 0; c < n; ++c) {
        ParameterPoint p = prior.cell_point(c);
        double delta = p.values[delta_axis];
        double omega = omega_axis >= 0 ? p.values[omega_axis] : *fixed_omega;
        log_like[c] = exact_log_likelihood_tls(record, delta, omega, kappa);
    }
    return grid_from_log_likelihood(prior, log_like);
}

RmseSurface true_rmse_map(const GridAxis& true_delta, const GridAxis& true_omega,
                          int n_clicks, int n_mc, double kappa,
                          const PosteriorGrid& estimation_prior, std::uint64_t seed,
                          int threads) {
    if (n_mc < 1) fail(ErrorKind::Usage, "true_rmse_map needs n_mc >= 1");
    RmseSurface out;
    out.delta_axis = true_delta;
    out.omega_axis = true_omega;
    out.n_clicks = n_clicks;
    out.n_mc = n_mc;
    const auto nd = true_delta.values.size();
    const auto no = true_omega.values.size();
    out.rmse = RMat::Constant(nd, no, std::numeric_limits<double>::quiet_NaN());
    out.predicted = RMat::Constant(nd, no, std::numeric_limits<double>::quiet_NaN());
    out.flagged.setZero(nd, no);

    // posterior spread = sqrt(sum of axis variances), matching the overall
    // RMSE convention
    auto posterior_spread = [](const PosteriorGrid& g) {
        ParameterPoint mean = posterior_mean(g);
        double var = 0.0;
        for (Eigen::Index c = 0; c < g.cells(); ++c) {
            ParameterPoint p = g.cell_point(c);
            var += g.weights[c] * (p.values - mean.values).squaredNorm();
        }
        return std::sqrt(var);
    };

    parallel_for(static_cast<std::size_t>(nd * no), [&](std::size_t cellflat) {
        const Eigen::Index i = static_cast<Eigen::Index>(cellflat) / no;
        const Eigen::Index j = static_cast<Eigen::Index>(cellflat) % no;
        const double dtrue = true_delta.values[i];
        const double otrue = true_omega.values[j];
        ModelSpec model = build_tls_model(dtrue, otrue, kappa);
        Numerics num = default_numerics();
        num.max_sim_time = 1e5;  // dark cells flag quickly
        SamplerOptions sopts;
        sopts.numerics = num;
        TrajectoryEngine engine(model, sopts);

        double se_sum = 0.0, spread_sum = 0.0;
        int ok = 0;
        for (int k = 0; k < n_mc; ++k) {
            StreamKey key{seed, cellflat * static_cast<std::size_t>(n_mc) + k};
            PhotoclickRecord rec;
            try {
                rec = engine.sample(n_clicks, key);
            } catch (const Error& e) {
                if (e.kind == ErrorKind::Timeout) {
                    out.flagged(i, j) = 1;
                    return;  // dark cell: no photons, no information
                }
                throw;
            }
            PosteriorGrid post = exact_posterior_tls(rec, estimation_prior, kappa,
                                                     estimation_prior.axes.size() == 1
                                                         ? std::optional<double>(otrue)
                                                         : std::nullopt);
            ParameterPoint mean = posterior_mean(post);
            double se = 0.0;
            for (std::size_t a = 0; a < mean.names.size(); ++a) {
                double truth = mean.names[a] == "Delta" ? dtrue : otrue;
                se += (mean.values[static_cast<Eigen::Index>(a)] - truth) *
                      (mean.values[static_cast<Eigen::Index>(a)] - truth);
            }
            se_sum += se;
            spread_sum += posterior_spread(post);
            ++ok;
        }
        if (ok > 0) {
            out.rmse(i, j) = std::sqrt(se_sum / ok);
            out.predicted(i, j) = spread_sum / ok;
        }
    }, threads);
    return out;
}

}  // namespace pclick
