// rng.hpp — Counter-based RNG (Philox2x64-10) with per-trajectory streams
//
// Draws are keyed by (global seed, stream index, draw counter), so any
// trajectory can be regenerated bit-identically regardless of how work is
// split across workers.

#pragma once

#include <cmath>
#include <cstdint>

#include "pclick/common.hpp"

namespace pclick {

struct StreamKey {
    std::uint64_t seed = 0;    // global seed
    std::uint64_t stream = 0;  // trajectory / task index
};

class CounterRng {
  public:
    CounterRng() = default;
    CounterRng(std::uint64_t seed, std::uint64_t stream) : key_{seed, stream} {}
    explicit CounterRng(StreamKey k) : key_{k} {}

    StreamKey key() const { return key_; }
    std::uint64_t counter() const { return counter_; }

    std::uint64_t next_u64() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        std::uint64_t x0 = counter_++;
        std::uint64_t x1 = key_.stream;
        std::uint64_t k = key_.seed;
        for (int round = 0; round < 10; ++round) {
            std::uint64_t hi, lo;
            mulhilo(kMult, x0, hi, lo);
            std::uint64_t y0 = hi ^ k ^ x1;
            x1 = lo;
            x0 = y0;
            k += kWeyl;
        }
        spare_ = x1;
        have_spare_ = true;
        return x0;
    }

    // uniform on [0, 1), 53-bit resolution
    double u01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform on (0, 1]; suitable for log() draws
    double u01_open_closed() { return 1.0 - u01(); }

    double exponential(double rate) { return -std::log(u01_open_closed()) / rate; }

    double normal() {
        // Box-Muller; one value per call keeps the draw counter layout simple
        double u1 = u01_open_closed();
        double u2 = u01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    // Exact Poisson sampling by counting unit-exponential arrivals in [0, mean]
    std::uint64_t poisson(double mean) {
        if (mean <= 0.0) return 0;
        std::uint64_t count = 0;
        double acc = 0.0;
        for (;;) {
            acc += -std::log(u01_open_closed());
            if (acc > mean) return count;
            ++count;
        }
    }

  private:
    static constexpr std::uint64_t kMult = 0xD2B74407B1CE6E93ull;
    static constexpr std::uint64_t kWeyl = 0x9E3779B97F4A7C15ull;

    static void mulhilo(std::uint64_t a, std::uint64_t b, std::uint64_t& hi, std::uint64_t& lo) {
        unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
        hi = static_cast<std::uint64_t>(p >> 64);
        lo = static_cast<std::uint64_t>(p);
    }

    StreamKey key_{};
    std::uint64_t counter_ = 0;
    std::uint64_t spare_ = 0;
    bool have_spare_ = false;
};

}  // namespace pclick
