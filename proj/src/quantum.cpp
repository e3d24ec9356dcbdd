// quantum.cpp

#include "pclick/quantum.hpp"

#include <Eigen/SVD>
#include <cmath>

namespace pclick {

std::string to_string(ChannelKind k) {
    switch (k) {
        case ChannelKind::Detected: return "detected";
        case ChannelKind::Lost: return "lost";
        case ChannelKind::Dissipative: return "dissipative";
    }
    return "?";
}

double ParameterPoint::get(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return values[static_cast<Eigen::Index>(i)];
    fail(ErrorKind::Usage, "unknown parameter: " + name);
}

std::vector<int> ModelSpec::detected_channel_indices() const {
    std::vector<int> idx;
    for (std::size_t i = 0; i < channels.size(); ++i)
        if (channels[i].kind == ChannelKind::Detected) idx.push_back(static_cast<int>(i));
    return idx;
}

double hermiticity_deviation(const CMat& a) {
    return (a - a.adjoint()).cwiseAbs().maxCoeff();
}

CMat ladder_operator(int dim) {
    if (dim < 2) fail(ErrorKind::InvalidDimension, "ladder operator needs dim >= 2");
    CMat a = CMat::Zero(dim, dim);
    for (int n = 1; n < dim; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
    return a;
}

CMat kron(const CMat& a, const CMat& b) {
    CMat out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

ModelSpec build_tls_model(double delta, double omega, double kappa) {
    if (kappa <= 0.0) fail(ErrorKind::InvalidRate, "tls model needs kappa > 0");
    if (omega < 0.0) fail(ErrorKind::InvalidRate, "tls model needs omega >= 0");

    ModelSpec m;
    m.family = "tls";
    m.space.subsystem_dims = {2};
    m.hamiltonian = CMat::Zero(2, 2);
    m.hamiltonian(1, 1) = -delta;
    m.hamiltonian(0, 1) = omega / 2.0;
    m.hamiltonian(1, 0) = omega / 2.0;

    JumpChannel emission;
    emission.rate = kappa;
    emission.op = ladder_operator(2);  // sigma_minus
    emission.kind = ChannelKind::Detected;
    emission.label = "emission";
    m.channels = {emission};

    m.initial_state = CVec::Zero(2);
    m.initial_state(0) = 1.0;  // ground state

    m.theta.names = {"Delta", "Omega"};
    m.theta.values = RVec(2);
    m.theta.values << delta, omega;
    m.control = {{"kappa", kappa}};
    return m;
}

ModelSpec build_optomech_model(const std::map<std::string, double>& params,
                               int cavity_dim, int mech_dim) {
    auto need = [&](const std::string& k) {
        auto it = params.find(k);
        if (it == params.end()) fail(ErrorKind::Usage, "optomech model missing parameter " + k);
        return it->second;
    };
    double delta = need("Delta");
    double omega_m = need("omega_M");
    double drive = need("Omega");
    double g = need("g");
    double kappa = need("kappa");
    double kappa_d = need("kappa_d");
    double gamma = need("gamma");
    double m_bar = need("m_bar");

    if (cavity_dim < 2 || mech_dim < 2)
        fail(ErrorKind::InvalidDimension, "optomech model needs dims >= 2");
    if (kappa_d > kappa)
        fail(ErrorKind::InconsistentEfficiency, "kappa_d exceeds kappa");
    if (kappa <= 0.0 || kappa_d < 0.0 || gamma < 0.0 || m_bar < 0.0)
        fail(ErrorKind::InvalidRate, "optomech rates must be non-negative, kappa > 0");

    const CMat a = ladder_operator(cavity_dim);
    const CMat b = ladder_operator(mech_dim);
    const CMat ic = CMat::Identity(cavity_dim, cavity_dim);
    const CMat im = CMat::Identity(mech_dim, mech_dim);

    const CMat a_full = kron(a, im);
    const CMat b_full = kron(ic, b);
    const CMat n_cav = a_full.adjoint() * a_full;
    const CMat n_mech = b_full.adjoint() * b_full;

    ModelSpec m;
    m.family = "optomech";
    m.space.subsystem_dims = {cavity_dim, mech_dim};
    m.hamiltonian = -delta * n_cav + omega_m * n_mech
                  + (drive / 2.0) * (a_full + a_full.adjoint())
                  + g * n_cav * (b_full + b_full.adjoint());

    JumpChannel det{kappa_d, a_full, ChannelKind::Detected, "cavity_detected"};
    JumpChannel lost{kappa - kappa_d, a_full, ChannelKind::Lost, "cavity_lost"};
    JumpChannel mech_down{gamma * (m_bar + 1.0), b_full, ChannelKind::Dissipative, "mech_down"};
    JumpChannel mech_up{gamma * m_bar, b_full.adjoint(), ChannelKind::Dissipative, "mech_up"};
    m.channels = {det, lost, mech_down, mech_up};

    m.initial_state = CVec::Zero(m.dim());
    m.initial_state(0) = 1.0;  // |0,0>

    m.theta.names = {"Delta"};
    m.theta.values = RVec(1);
    m.theta.values << delta;
    m.control = {{"omega_M", omega_m}, {"Omega", drive}, {"g", g},
                 {"kappa", kappa},     {"kappa_d", kappa_d},
                 {"gamma", gamma},     {"m_bar", m_bar}};
    return m;
}

CMat conditional_hamiltonian(const ModelSpec& model) {
    CMat h = model.hamiltonian;
    for (const auto& ch : model.channels)
        h -= cplx(0.0, 0.5) * ch.rate * (ch.op.adjoint() * ch.op);
    return h;
}

double manifold_energy(const ModelSpec& model, int n_cav, int n_mech) {
    if (model.family != "optomech")
        fail(ErrorKind::UnsupportedModel, "manifold_energy needs an optomech model");
    double delta = model.theta.get("Delta");
    double omega_m = model.control.at("omega_M");
    double g = model.control.at("g");
    return -delta * n_cav + omega_m * n_mech - (g * g / omega_m) * n_cav * n_cav;
}

std::vector<double> resonance_detunings(const ModelSpec& model, int n_max) {
    if (model.family != "optomech")
        fail(ErrorKind::UnsupportedModel, "resonance_detunings needs an optomech model");
    double omega_m = model.control.at("omega_M");
    double g = model.control.at("g");
    std::vector<double> out;
    out.reserve(n_max);
    for (int n = 1; n <= n_max; ++n) out.push_back(-n * g * g / omega_m);
    return out;
}

CMat gksl_rhs(const ModelSpec& model, const CMat& rho) {
    CMat out = -kI * (model.hamiltonian * rho - rho * model.hamiltonian);
    for (const auto& ch : model.channels) {
        if (ch.rate == 0.0) continue;
        CMat odo = ch.op.adjoint() * ch.op;
        out += ch.rate * (ch.op * rho * ch.op.adjoint() - 0.5 * (odo * rho + rho * odo));
    }
    return out;
}

std::string model_id(const ModelSpec& model) {
    std::string blob = model.family;
    for (int d : model.space.subsystem_dims) blob += ":" + std::to_string(d);
    for (std::size_t i = 0; i < model.theta.names.size(); ++i)
        blob += ";" + model.theta.names[i] + "=" +
                std::to_string(model.theta.values[static_cast<Eigen::Index>(i)]);
    for (const auto& [k, v] : model.control) blob += ";" + k + "=" + std::to_string(v);
    return model.family + "-" + hex64(fnv1a(blob));
}

CMat steady_state(const ModelSpec& model, const Numerics& num) {
    const int n = model.dim();
    const int n2 = n * n;

    // Column-major vectorization: vec(A rho B) = (B^T kron A) vec(rho).
    CMat liou = CMat::Zero(n2, n2);
    const CMat id = CMat::Identity(n, n);
    auto left = [&](const CMat& a) { return kron(id, a); };
    auto right = [&](const CMat& b) { return kron(b.transpose(), id); };

    liou += -kI * (left(model.hamiltonian) - right(model.hamiltonian));
    for (const auto& ch : model.channels) {
        if (ch.rate == 0.0) continue;
        CMat odo = ch.op.adjoint() * ch.op;
        liou += ch.rate * (kron(ch.op.conjugate(), ch.op)
                           - 0.5 * (left(odo) + right(odo)));
    }

    Eigen::JacobiSVD<CMat> svd(liou, Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    double scale = sv(0) > 0 ? sv(0) : 1.0;
    if (n2 >= 2 && sv(n2 - 2) < 1e-10 * scale)
        fail(ErrorKind::NonUniqueSteadyState, "GKSL generator has a degenerate null space");
    if (sv(n2 - 1) > 1e-8 * scale)
        fail(ErrorKind::Numerics, "GKSL generator has no numerical null vector");

    CVec v = svd.matrixV().col(n2 - 1);
    CMat rho = Eigen::Map<const CMat>(v.data(), n, n);
    rho = 0.5 * (rho + rho.adjoint()).eval();
    cplx tr = rho.trace();
    if (std::abs(tr) < 1e-14)
        fail(ErrorKind::Numerics, "steady-state candidate has vanishing trace");
    rho /= tr;

    Eigen::SelfAdjointEigenSolver<CMat> es(rho);
    if (es.eigenvalues().minCoeff() < -num.positivity_tol)
        fail(ErrorKind::Numerics, "steady state not positive within tolerance");
    return rho;
}

}  // namespace pclick
