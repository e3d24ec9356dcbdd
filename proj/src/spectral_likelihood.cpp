// spectral_likelihood.cpp

#include "pclick/spectral_likelihood.hpp"

#include <cmath>
#include <complex>
#include <limits>

#include <cblas.h>
#include <lapacke.h>

extern "C" void openblas_set_num_threads(int) __attribute__((weak));

namespace pclick {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// dense no-click generator: -i(Hc X - X Hc^dag) + sum_recycle r O X O^dag
CMat build_generator(const ModelSpec& model) {
    const int n = model.dim();
    const CMat hc = conditional_hamiltonian(model);
    const CMat id = CMat::Identity(n, n);
    auto kron = [&](const CMat& a, const CMat& b) {
        CMat out(a.rows() * b.rows(), a.cols() * b.cols());
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            for (Eigen::Index j = 0; j < a.cols(); ++j)
                out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        return out;
    };
    // column-major vec: vec(A X B) = (B^T kron A) vec(X)
    CMat gen = -kI * kron(id, hc) + kI * kron(hc.conjugate(), id);
    for (const auto& ch : model.channels) {
        if (ch.kind == ChannelKind::Detected || ch.rate == 0.0) continue;
        gen += ch.rate * kron(ch.op.conjugate(), ch.op);
    }
    return gen;
}

}  // namespace

SpectralLikelihoodEngine::SpectralLikelihoodEngine(const ModelSpec& model,
                                                   SpectralEngineOptions opts)
    : model_(model), opts_(opts) {
    if (openblas_set_num_threads) openblas_set_num_threads(1);
    n_ = model_.dim();
    n2_ = n_ * n_;
    auto detected = model_.detected_channel_indices();
    if (detected.size() != 1)
        fail(ErrorKind::Usage, "spectral likelihood engine needs exactly one detected channel");
    const auto& det = model_.channels[detected[0]];

    CMat gen = build_generator(model_);
    const double gen_norm = gen.norm();

    // eigendecomposition of the non-normal generator
    CMat vr(n2_, n2_);
    eigvals_.resize(n2_);
    CMat work = gen;
    lapack_int info = LAPACKE_zgeev(
        LAPACK_COL_MAJOR, 'N', 'V', n2_,
        reinterpret_cast<lapack_complex_double*>(work.data()), n2_,
        reinterpret_cast<lapack_complex_double*>(eigvals_.data()),
        nullptr, 1,
        reinterpret_cast<lapack_complex_double*>(vr.data()), n2_);
    if (info != 0) fail(ErrorKind::Numerics, "zgeev failed on the no-click generator");

    residual_ = (gen * vr - vr * eigvals_.asDiagonal()).norm() / std::max(gen_norm, 1e-300);

    Eigen::PartialPivLU<CMat> lu(vr);
    CMat vinv = lu.inverse();
    cond_ = vr.norm() * vinv.norm() / std::sqrt(static_cast<double>(n2_));

    usable_ = residual_ < opts_.residual_limit && cond_ < opts_.cond_limit &&
              eigvals_.real().maxCoeff() < 1e-6;
    if (!usable_) return;

    // click superoperator rate * (conj(c) kron c) rotated into the eigenbasis
    CMat clicked(n2_, n2_);
    for (int j = 0; j < n2_; ++j) {
        Eigen::Map<const CMat> col(vr.col(j).data(), n_, n_);
        Eigen::Map<CMat> out(clicked.col(j).data(), n_, n_);
        out.noalias() = det.rate * (det.op * col * det.op.adjoint());
    }
    click_eig_.noalias() = vinv * clicked;

    // initial state and trace functional in the eigenbasis
    CVec rho0 = CVec::Zero(n2_);
    Eigen::Map<CMat>(rho0.data(), n_, n_) =
        model_.initial_state * model_.initial_state.adjoint();
    init_coeff_.noalias() = vinv * rho0;

    trace_row_.setZero(n2_);
    for (int i = 0; i < n_; ++i) trace_row_ += vr.row(i * n_ + i);
}

RVec SpectralLikelihoodEngine::batch_log_likelihood(
    const std::vector<const PhotoclickRecord*>& records) const {
    if (!usable_)
        fail(ErrorKind::Numerics, "spectral likelihood engine unusable (ill-conditioned basis)");
    const auto nrec = static_cast<Eigen::Index>(records.size());
    if (nrec == 0) return RVec();
    const auto clicks = records[0]->clicks();
    for (const auto* r : records) {
        r->validate();
        if (r->clicks() != clicks)
            fail(ErrorKind::Compatibility, "batched records must share the click count");
    }

    CMat w(n2_, nrec), next(n2_, nrec);
    for (Eigen::Index c = 0; c < nrec; ++c) w.col(c) = init_coeff_;
    RVec log_acc = RVec::Zero(nrec);
    constexpr double kNeg = -std::numeric_limits<double>::infinity();

    for (std::size_t k = 0; k < clicks; ++k) {
        for (Eigen::Index c = 0; c < nrec; ++c) {
            const double dt = records[c]->waiting_times[k];
            for (int i = 0; i < n2_; ++i) w(i, c) *= std::exp(eigvals_(i) * dt);
        }
        {
            const cplx one(1.0, 0.0), zero(0.0, 0.0);
            cblas_zgemm(CblasColMajor, CblasNoTrans, CblasNoTrans, n2_,
                        static_cast<int>(nrec), n2_, &one, click_eig_.data(), n2_,
                        w.data(), n2_, &zero, next.data(), n2_);
        }
        for (Eigen::Index c = 0; c < nrec; ++c) {
            cplx tr = trace_row_ * next.col(c);
            double tr_real = tr.real();
            if (!(tr_real > 0.0) || !std::isfinite(tr_real)) {
                log_acc[c] = kNeg;
                w.col(c).setZero();
                continue;
            }
            if (log_acc[c] != kNeg) log_acc[c] += std::log(tr_real);
            w.col(c) = next.col(c) / tr_real;
        }
    }
    return log_acc;
}

double SpectralLikelihoodEngine::record_log_likelihood(const PhotoclickRecord& record) const {
    if (!usable_)
        fail(ErrorKind::Numerics, "spectral likelihood engine unusable (ill-conditioned basis)");
    record.validate();

    CVec w = init_coeff_;
    CVec next(n2_);
    double log_acc = 0.0;
    for (double dt : record.waiting_times) {
        for (int i = 0; i < n2_; ++i) w(i) *= std::exp(eigvals_(i) * dt);
        next.noalias() = click_eig_ * w;
        cplx tr = trace_row_ * next;
        double tr_real = tr.real();
        if (!(tr_real > 0.0) || !std::isfinite(tr_real)) return kNegInf;
        log_acc += std::log(tr_real);
        w = next / tr_real;
    }
    return log_acc;
}

}  // namespace pclick
