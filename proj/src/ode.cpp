// ode.cpp — Dormand-Prince 5(4) with Shampine's dense-output coefficients

#include "pclick/ode.hpp"

#include <algorithm>
#include <cmath>

namespace pclick {

namespace {

// Butcher tableau
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                 a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                 b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// embedded 4th-order weights
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
// dense-output correction
constexpr double d1 = -12715105075.0 / 11282082432.0;
constexpr double d3 = 87487479700.0 / 32700410799.0;
constexpr double d4 = -10690763975.0 / 1880347072.0;
constexpr double d5 = 701980252875.0 / 199316789632.0;
constexpr double d6 = -1453857185.0 / 822651844.0;
constexpr double d7 = 69997945.0 / 29380423.0;

}  // namespace

Dopri5::Dopri5(ApplyFn rhs, OdeOptions opt) : rhs_(std::move(rhs)), opt_(opt) {}

void Dopri5::start(double t0, const CVec& y0) {
    t_ = t_prev_ = t0;
    y_ = y_prev_ = y0;
    h_ = opt_.h_init;
    have_k1_ = false;
    n_accepted_ = 0;
    n_rhs_ = 0;
    for (auto& k : k_) k.resize(y0.size());
    for (auto& c : cont_) c.resize(y0.size());
    scratch_.resize(y0.size());
}

double Dopri5::error_norm(const CVec& err, const CVec& y_new) const {
    double acc = 0.0;
    const auto n = err.size();
    for (Eigen::Index i = 0; i < n; ++i) {
        double sc = opt_.abs_tol +
                    opt_.rel_tol * std::max(std::abs(y_(i)), std::abs(y_new(i)));
        double r = std::abs(err(i)) / sc;
        acc += r * r;
    }
    return std::sqrt(acc / static_cast<double>(n));
}

double Dopri5::initial_step(double t_limit) const {
    // crude but safe: scale from the first derivative, then let the
    // controller adapt
    double ynorm = y_.norm();
    double fnorm = k_[0].norm();
    double h = (fnorm > 1e-300) ? 0.01 * (ynorm + opt_.abs_tol) / fnorm : 1e-6;
    h = std::min({h, opt_.h_max, std::abs(t_limit - t_)});
    return std::max(h, 1e-12);
}

double Dopri5::step(double t_limit) {
    if (!have_k1_) {
        rhs_(y_, k_[0]);
        ++n_rhs_;
        have_k1_ = true;
        if (h_ <= 0.0) h_ = initial_step(t_limit);
    }
    std::uint64_t rejected = 0;
    for (;;) {
        if (n_rhs_ > 6 * opt_.max_steps + 64)
            fail(ErrorKind::Numerics, "integrator exceeded its step budget");
        double h = std::min(h_, opt_.h_max);
        bool clipped = false;
        if (t_ + h >= t_limit) {
            h = t_limit - t_;
            clipped = true;
        }
        if (h <= std::abs(t_) * 1e-15 + 1e-300)
            fail(ErrorKind::Numerics, "integrator step size underflow at t = " + std::to_string(t_));

        scratch_ = y_ + h * (a21 * k_[0]);
        rhs_(scratch_, k_[1]);
        scratch_ = y_ + h * (a31 * k_[0] + a32 * k_[1]);
        rhs_(scratch_, k_[2]);
        scratch_ = y_ + h * (a41 * k_[0] + a42 * k_[1] + a43 * k_[2]);
        rhs_(scratch_, k_[3]);
        scratch_ = y_ + h * (a51 * k_[0] + a52 * k_[1] + a53 * k_[2] + a54 * k_[3]);
        rhs_(scratch_, k_[4]);
        scratch_ = y_ + h * (a61 * k_[0] + a62 * k_[1] + a63 * k_[2] + a64 * k_[3] + a65 * k_[4]);
        rhs_(scratch_, k_[5]);
        CVec y_new = y_ + h * (b1 * k_[0] + b3 * k_[2] + b4 * k_[3] + b5 * k_[4] + b6 * k_[5]);
        rhs_(y_new, k_[6]);
        n_rhs_ += 6;

        CVec err = h * (e1 * k_[0] + e3 * k_[2] + e4 * k_[3] + e5 * k_[4] +
                        e6 * k_[5] + e7 * k_[6]);
        double en = error_norm(err, y_new);

        if (en <= 1.0) {
            double fac = 0.9 * std::pow(std::max(en, 1e-10), -0.2);
            fac = std::min(rejected ? 1.0 : 5.0, std::max(0.2, fac));
            t_prev_ = t_;
            y_prev_.swap(y_);
            t_ = clipped ? t_limit : t_prev_ + h;
            y_ = std::move(y_new);
            build_dense();
            k_[0].swap(k_[6]);  // FSAL
            h_ = h * fac;
            ++n_accepted_;
            if (n_accepted_ > opt_.max_steps)
                fail(ErrorKind::Numerics, "integrator exceeded max accepted steps");
            return t_ - t_prev_;
        }
        ++rejected;
        h_ = h * std::min(1.0, std::max(0.2, 0.9 * std::pow(en, -0.2)));
    }
}

void Dopri5::build_dense() {
    const double h = t_ - t_prev_;
    cont_[0] = y_prev_;
    cont_[1] = y_ - y_prev_;                 // ydiff
    cont_[2] = h * k_[0] - cont_[1];         // bspl
    cont_[3] = cont_[1] - h * k_[6] - cont_[2];
    cont_[4] = h * (d1 * k_[0] + d3 * k_[2] + d4 * k_[3] + d5 * k_[4] +
                    d6 * k_[5] + d7 * k_[6]);
}

void Dopri5::dense(double theta, CVec& out) const {
    const double th = theta, th1 = 1.0 - theta;
    out = cont_[0] +
          th * (cont_[1] + th1 * (cont_[2] + th * (cont_[3] + th1 * cont_[4])));
}

void Dopri5::advance_to(double t_end) {
    if (y_.size() == 0) fail(ErrorKind::Usage, "integrator not started");
    while (t_ < t_end) step(t_end);
}

}  // namespace pclick
