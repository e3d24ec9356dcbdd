// krylov.cpp — adaptive Arnoldi exponential propagator

#include "pclick/krylov.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace pclick {

namespace {

// y <- e^{H} e_1 for a small (m x m) Hessenberg H, by sub-stepped Taylor
// series; also fills the full result vector (all components needed by the
// error estimate).
void small_expm_e1(const CMat& h, CVec& y) {
    const Eigen::Index m = h.rows();
    y = CVec::Zero(m);
    y(0) = 1.0;
    double nrm = h.cwiseAbs().rowwise().sum().maxCoeff();  // inf-norm
    int s = std::max(1, static_cast<int>(std::ceil(nrm / 2.0)));
    CMat hs = h / static_cast<double>(s);
    CVec term(m), next(m);
    for (int step = 0; step < s; ++step) {
        term = y;
        for (int k = 1; k <= 60; ++k) {
            next.noalias() = hs * term;
            term = next / static_cast<double>(k);
            y += term;
            if (term.norm() <= 1e-18 * y.norm()) break;
        }
    }
}

}  // namespace

std::uint64_t krylov_expmv(const ApplyFn& apply, double t, const CVec& v, CVec& out,
                           const KrylovOptions& opt, double* renorm_log,
                           KrylovStats* stats) {
    const Eigen::Index n = v.size();
    const int m = std::min<Eigen::Index>(opt.basis_size, n);
    out = v;
    if (t == 0.0 || out.norm() == 0.0) return 0;

    std::vector<CVec> basis(m + 1, CVec(n));
    CMat hess = CMat::Zero(m + 1, m);
    CVec f, w(n);

    double remaining = t;
    double tau = std::min(opt.tau_init, t);
    std::uint64_t substeps = 0;

    while (remaining > 0.0) {
        if (++substeps > opt.max_substeps)
            fail(ErrorKind::Numerics, "krylov_expmv exceeded its substep budget");
        double beta = out.norm();
        if (beta < 1e-300) return substeps;  // fully decayed
        if (renorm_log && beta < 1e-150) {
            *renorm_log += std::log(beta);
            out /= beta;
            beta = 1.0;
        }

        // Arnoldi factorization A V_m = V_m H_m + h_{m+1,m} v_{m+1} e_m^T
        basis[0] = out / beta;
        hess.setZero();
        int m_eff = m;
        bool breakdown = false;
        for (int j = 0; j < m; ++j) {
            apply(basis[j], w);
            if (stats) ++stats->matvecs;
            for (int i = 0; i <= j; ++i) {
                cplx hij = basis[i].dot(w);
                hess(i, j) = hij;
                w -= hij * basis[i];
            }
            double hnext = w.norm();
            hess(j + 1, j) = hnext;
            if (hnext < 1e-14 * std::max(1.0, hess.cwiseAbs().maxCoeff())) {
                m_eff = j + 1;
                breakdown = true;
                break;
            }
            basis[j + 1] = w / hnext;
        }

        const double h_last = breakdown ? 0.0 : std::abs(hess(m_eff, m_eff - 1));
        tau = std::min(tau, remaining);
        if (breakdown) tau = remaining;  // exact in the invariant subspace

        for (;;) {
            small_expm_e1(tau * hess.topLeftCorner(m_eff, m_eff), f);
            double err = beta * h_last * std::abs(f(m_eff - 1)) * tau;
            double tol_step = opt.rel_tol * std::max(beta, 1e-300) *
                              std::max(tau / t, 1e-6);
            if (stats) {
                stats->min_tau = stats->substeps ? std::min(stats->min_tau, tau) : tau;
                stats->max_tau = std::max(stats->max_tau, tau);
            }
            if (err <= tol_step || breakdown || tau <= 1e-14 * t) {
                out.setZero();
                for (int i = 0; i < m_eff; ++i) out += (beta * f(i)) * basis[i];
                remaining -= tau;
                if (stats) ++stats->substeps;
                if (err > 0.0)
                    tau *= std::min(2.0, std::max(
                        0.3, 0.9 * std::pow(tol_step / err, 2.0 / m_eff)));
                else
                    tau *= 2.0;
                break;
            }
            if (stats) ++stats->rejects;
            tau *= 0.5;  // same basis, smaller substep
        }
    }
    return substeps;
}

}  // namespace pclick
