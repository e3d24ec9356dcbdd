// common.hpp — Shared aliases, error taxonomy, numerics configuration, small utilities

#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pclick {

using cplx = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;
using RMat = Eigen::MatrixXd;

inline constexpr cplx kI{0.0, 1.0};

// Error kinds map to CLI exit codes: usage/compatibility errors exit 2,
// numerical failures exit 1.
enum class ErrorKind {
    InvalidDimension,
    InvalidRate,
    InconsistentEfficiency,
    UnsupportedModel,
    NonUniqueSteadyState,
    InvalidRecord,
    NoJumpPossible,
    Timeout,
    TruncationInsufficient,
    Numerics,
    DegeneratePosterior,
    EmptyAcceptance,
    GridMismatch,
    ShapeMismatch,
    Compatibility,
    Usage,
    Io,
};

struct Error : std::runtime_error {
    ErrorKind kind;
    Error(ErrorKind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

[[noreturn]] inline void fail(ErrorKind k, const std::string& msg) { throw Error(k, msg); }

// Global numerical tolerances. Operations take these by reference so tests
// can tighten or relax without touching call sites.
struct Numerics {
    double hermiticity_tol = 1e-12;   // max |A - A^dag| entry
    double positivity_tol = 1e-9;     // density-matrix eigenvalue floor
    double ode_rel_tol = 1e-8;
    double ode_abs_tol = 1e-10;
    double jump_time_rel_tol = 1e-9;  // bisection on the dense-output interpolant
    double trace_floor = 1e-50;       // log-space rescale threshold
    double max_sim_time = 1e6;        // per-trajectory simulated-time budget (units 1/kappa)
    std::uint64_t max_steps = 10000000;  // per-trajectory integrator step budget
};

inline const Numerics& default_numerics() {
    static const Numerics n{};
    return n;
}

// FNV-1a, used for config hashes embedded in output manifests.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

std::string hex64(std::uint64_t v);

// Maps [0, n) over a fixed-size worker pool. Results must not depend on the
// execution order; worker count comes from --threads / PCLICK_THREADS.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, int threads = 0);

int default_thread_count();
void set_default_thread_count(int threads);

}  // namespace pclick
