// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace ctlab {

// Mixes a 64-bit value into a well-distributed seed (splitmix64 finalizer).
std::uint64_t mix64(std::uint64_t x);

// Deterministic random stream. The scalar recipes are spelled out here
// instead of using <random> distributions so that a given seed produces the
// same sequence on every platform and standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // 53-bit uniform in [0, 1)
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // standard normal via Box-Muller, spare value cached
    double normal();

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n);

    void fill_normal(std::span<double> out);

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Independent stream `stream_id` derived from one master seed.
Rng derive_stream(std::uint64_t master_seed, std::uint64_t stream_id);

}  // namespace ctlab
