// quantum.hpp — Truncated-Hilbert-space models: operators, jump channels,
// the two reference systems (driven two-level atom, driven nonlinear
// optomechanical cavity) and their conditional generators.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "pclick/common.hpp"

namespace pclick {

struct HilbertSpace {
    std::vector<int> subsystem_dims;  // e.g. {2} for the atom, {cavity, mech}

    int total_dim() const {
        int d = 1;
        for (int s : subsystem_dims) d *= s;
        return d;
    }
};

enum class ChannelKind { Detected, Lost, Dissipative };

std::string to_string(ChannelKind k);

struct JumpChannel {
    double rate = 0.0;  // units of kappa
    CMat op;
    ChannelKind kind = ChannelKind::Dissipative;
    std::string label;
};

struct ParameterPoint {
    std::vector<std::string> names;
    RVec values;

    int dim() const { return static_cast<int>(names.size()); }
    double get(const std::string& name) const;
};

struct ModelSpec {
    std::string family;  // "tls" or "optomech"
    HilbertSpace space;
    CMat hamiltonian;  // Hermitian, hbar = 1
    std::vector<JumpChannel> channels;
    CVec initial_state;  // unit norm
    ParameterPoint theta;                  // estimated parameters
    std::map<std::string, double> control;  // known control parameters

    int dim() const { return space.total_dim(); }
    std::vector<int> detected_channel_indices() const;
};

// Maximum elementwise deviation from Hermiticity, max |A - A^dag|.
double hermiticity_deviation(const CMat& a);

// Bosonic annihilation operator on a truncated Fock space:
// a[n-1, n] = sqrt(n). dim = 2 gives sigma_minus.
CMat ladder_operator(int dim);

CMat kron(const CMat& a, const CMat& b);

// Laser-driven two-level atom, basis (|g>, |e>):
// H = -delta |e><e| + (omega/2)(|g><e| + |e><g|),
// one unit-efficiency detected channel (rate kappa, sigma_minus), start in |g>.
ModelSpec build_tls_model(double delta, double omega, double kappa);

// Driven optomechanical cavity on the tensor space (cavity x mech):
// H = -Delta a^dag a + omega_M b^dag b + (Omega/2)(a + a^dag)
//     + g a^dag a (b + b^dag).
// Channels: detected (kappa_d, a), lost (kappa - kappa_d, a),
// dissipative (gamma (m_bar + 1), b) and (gamma m_bar, b^dag). Start in |0,0>.
// params must supply Delta, omega_M, Omega, g, kappa, kappa_d, gamma, m_bar.
ModelSpec build_optomech_model(const std::map<std::string, double>& params,
                               int cavity_dim, int mech_dim);

// H_cond = H - (i/2) sum_channels rate * O^dag O, all kinds included.
CMat conditional_hamiltonian(const ModelSpec& model);

// Energy of the |n_cav, n_mech> manifold including the radiation-pressure
// shift: -Delta n_cav + omega_M n_mech - (g^2/omega_M) n_cav^2.
double manifold_energy(const ModelSpec& model, int n_cav, int n_mech);

// Delta_n = -n g^2 / omega_M for n = 1..n_max; detunings that restore the
// n-photon resonance.
std::vector<double> resonance_detunings(const ModelSpec& model, int n_max);

// Right-hand side of the GKSL master equation for this model.
CMat gksl_rhs(const ModelSpec& model, const CMat& rho);

// Stable identifier (family + parameter hash) embedded in record and
// library metadata.
std::string model_id(const ModelSpec& model);

// Unique fixed point of the GKSL generator (dense null-space solve).
// Intended for small spaces; throws NonUniqueSteadyState on a degenerate
// null space.
CMat steady_state(const ModelSpec& model, const Numerics& num = default_numerics());

}  // namespace pclick
