// Cross-oracle agreement at scale: generic conditional-propagation
// likelihood vs the analytic renewal oracle, and the two likelihood routes
// on the optomech model.

#include <doctest.h>

#include <cmath>

#include "pclick/posterior.hpp"
#include "pclick/rng.hpp"
#include "pclick/tls.hpp"

using namespace pclick;

TEST_CASE("generic likelihood vs analytic oracle over the verification range") {
    CounterRng rng(2024, 0);
    for (int trial = 0; trial < 100; ++trial) {
        double delta = 2.0 * rng.u01();
        double omega = 0.1 + 1.9 * rng.u01();
        ModelSpec m = build_tls_model(delta, omega, 1.0);
        TrajectoryEngine engine(m);
        PhotoclickRecord rec = engine.sample(20, {2024, static_cast<std::uint64_t>(trial)});
        double analytic = exact_log_likelihood_tls(rec, delta, omega, 1.0);
        double generic = record_likelihood(m, rec);
        CHECK(std::abs(generic - analytic) <= 1e-6 * std::abs(analytic));
    }
}

TEST_CASE("krylov and adaptive-rk likelihood routes agree on the optomech model") {
    const double wm = 4.0 * std::sqrt(2.0);
    for (double delta : {-2.8284271247461903, -4.242640687119285}) {
        ModelSpec m = build_optomech_model({{"Delta", delta}, {"omega_M", wm},
                                            {"Omega", 0.3 * wm}, {"g", 4.0}, {"kappa", 1.0},
                                            {"kappa_d", 0.9}, {"gamma", 1e-3 * wm},
                                            {"m_bar", 1.0}},
                                           6, 12);
        TrajectoryEngine engine(m);
        PhotoclickRecord rec = engine.sample(5, {31, delta < -3.0 ? 1u : 0u});

        LikelihoodOptions kr;
        kr.route = LikelihoodRoute::Krylov;
        LikelihoodOptions rk;
        rk.route = LikelihoodRoute::AdaptiveRk;
        double fast = record_likelihood(m, rec, kr);
        double slow = record_likelihood(m, rec, rk);
        CHECK(fast == doctest::Approx(slow).epsilon(1e-7));
    }
}
