// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

namespace pucknet {

// Deterministic random stream. Wraps std::mt19937_64 (whose output sequence
// is fixed by the standard) and supplies its own distributions, since the
// standard library distribution algorithms are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Rejection-free modulo is fine here: n is
    // always tiny relative to 2^64 so the bias is far below anything observable.
    std::uint64_t uniform_index(std::uint64_t n) { return n ? engine_() % n : 0; }

    int uniform_int(int lo, int hi) { // inclusive bounds
        return lo + static_cast<int>(uniform_index(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Derive an independent child stream; used to give each worker its own seed.
    Rng fork() { return Rng(next_u64() ^ 0x9e3779b97f4a7c15ULL); }

private:
    std::mt19937_64 engine_;
};

} // namespace pucknet
