// ode.hpp — Adaptive embedded Runge-Kutta pair (Dormand-Prince 5(4)) for
// complex linear systems, with the 4th-order dense-output interpolant used
// for event refinement between accepted steps.

#pragma once

#include <cstdint>
#include <functional>

#include "pclick/common.hpp"

namespace pclick {

// out = A(y); all systems here are autonomous and linear in y.
using ApplyFn = std::function<void(const CVec&, CVec&)>;

struct OdeOptions {
    double rel_tol = 1e-8;
    double abs_tol = 1e-10;
    double h_init = 0.0;  // 0 -> automatic
    double h_max = 10.0;
    std::uint64_t max_steps = 10000000;
};

class Dopri5 {
  public:
    Dopri5(ApplyFn rhs, OdeOptions opt);

    void start(double t0, const CVec& y0);

    // One accepted step, h clipped so t never passes t_limit.
    // Returns the accepted step size; dense() is valid afterwards.
    double step(double t_limit);

    // Integrate to t_end exactly.
    void advance_to(double t_end);

    double t() const { return t_; }
    double t_prev() const { return t_prev_; }
    double h_last() const { return t_ - t_prev_; }
    const CVec& y() const { return y_; }
    const CVec& y_prev() const { return y_prev_; }

    // State at t_prev + theta * h_last, theta in [0, 1].
    void dense(double theta, CVec& out) const;

    std::uint64_t steps_taken() const { return n_accepted_; }
    std::uint64_t rhs_evaluations() const { return n_rhs_; }

  private:
    double error_norm(const CVec& err, const CVec& y_new) const;
    double initial_step(double t_limit) const;
    void build_dense();

    ApplyFn rhs_;
    OdeOptions opt_;

    double t_ = 0.0, t_prev_ = 0.0, h_ = 0.0;
    CVec y_, y_prev_;
    CVec k_[7];
    CVec cont_[5];
    CVec scratch_;
    bool have_k1_ = false;
    std::uint64_t n_accepted_ = 0, n_rhs_ = 0;
};

}  // namespace pclick
