// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <stdexcept>

#include <algorithm>
#include <cmath>
#include <vector>

#include "ctlab/eval.hpp"

using namespace ctlab;

namespace {

Batch normal_batch(int n, int dim, double mean, double stddev, std::uint64_t seed) {
    Rng rng(seed);
    Batch b(n, dim);
    for (double& v : b.values) {
        v = mean + stddev * rng.normal();
    }
    return b;
}

Batch shuffled(const Batch& a, std::uint64_t seed) {
    Batch out = a;
    Rng rng(seed);
    for (int i = out.count - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i + 1)));
        for (int k = 0; k < out.dim; ++k) {
            std::swap(out.row(i)[static_cast<std::size_t>(k)], out.row(j)[static_cast<std::size_t>(k)]);
        }
    }
    return out;
}

}  // namespace

TEST_CASE("sliced wasserstein on matched and separated point sets") {
    const Batch a = normal_batch(500, 3, 0.0, 1.0, 1);
    Rng rng(2);
    CHECK(sliced_wasserstein(a, a, 16, rng) == 0.0);

    Batch p0(1, 1), p1(1, 1);
    p0.row(0)[0] = 0.0;
    p1.row(0)[0] = 1.0;
    Rng rng2(3);
    CHECK(sliced_wasserstein(p0, p1, 4, rng2) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sliced wasserstein recovers the distance between shifted normals") {
    const Batch a = normal_batch(100000, 1, 0.0, 1.0, 11);
    const Batch b = normal_batch(100000, 1, 2.0, 1.0, 12);
    Rng rng(13);
    CHECK(sliced_wasserstein(a, b, 8, rng) == doctest::Approx(2.0).epsilon(0.025));
}

TEST_CASE("sliced wasserstein is permutation invariant and seed deterministic") {
    const Batch a = normal_batch(400, 2, 0.0, 1.0, 21);
    const Batch b = normal_batch(300, 2, 0.5, 1.3, 22);

    Rng r1(5), r2(5), r3(5);
    const double base = sliced_wasserstein(a, b, 32, r1);
    CHECK(sliced_wasserstein(shuffled(a, 7), b, 32, r2) == base);
    CHECK(sliced_wasserstein(a, shuffled(b, 9), 32, r3) == base);

    Rng r4(6);
    const double other_seed = sliced_wasserstein(a, b, 32, r4);
    Rng r5(6);
    CHECK(sliced_wasserstein(a, b, 32, r5) == other_seed);
}

TEST_CASE("sliced wasserstein validates inputs") {
    const Batch a = normal_batch(10, 2, 0.0, 1.0, 31);
    const Batch b = normal_batch(10, 3, 0.0, 1.0, 32);
    Rng rng(1);
    CHECK_THROWS_AS(sliced_wasserstein(a, b, 8, rng), std::invalid_argument);
    CHECK_THROWS_AS(sliced_wasserstein(a, a, 0, rng), std::invalid_argument);
    Batch empty;
    CHECK_THROWS_AS(sliced_wasserstein(empty, a, 8, rng), std::invalid_argument);
}

TEST_CASE("energy distance is zero on identical multisets and positive otherwise") {
    const Batch a = normal_batch(200, 2, 0.0, 1.0, 41);
    CHECK(energy_distance(a, a) == 0.0);

    Rng seeder(43);
    for (int t = 0; t < 100; ++t) {
        const Batch u = normal_batch(30, 2, 0.0, 1.0, seeder.next_u64());
        const Batch v = normal_batch(25, 2, 0.3, 1.1, seeder.next_u64());
        CHECK(energy_distance(u, v) >= 0.0);
    }
}

TEST_CASE("energy distance shrinks with the shift between normals") {
    const Batch base = normal_batch(800, 1, 0.0, 1.0, 51);
    Batch far = base, mid = base, near = base;
    for (double& v : far.values) {
        v += 2.0;
    }
    for (double& v : mid.values) {
        v += 1.0;
    }
    for (double& v : near.values) {
        v += 0.5;
    }
    const Batch other = normal_batch(800, 1, 0.0, 1.0, 52);
    const double d_far = energy_distance(other, far);
    const double d_mid = energy_distance(other, mid);
    const double d_near = energy_distance(other, near);
    CHECK(d_far > d_mid);
    CHECK(d_mid > d_near);
    CHECK(d_near > 0.0);
}

TEST_CASE("energy distance is permutation invariant up to rounding") {
    const Batch a = normal_batch(128, 2, 0.0, 1.0, 61);
    const Batch b = normal_batch(96, 2, 0.7, 0.9, 62);
    const double base = energy_distance(a, b);
    const double shuf = energy_distance(shuffled(a, 3), shuffled(b, 4));
    CHECK(shuf == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("per-axis moments") {
    const Batch a = normal_batch(200000, 2, 1.5, 0.5, 71);
    const auto m = per_axis_moments(a);
    REQUIRE(m.size() == 2);
    for (const auto& axis : m) {
        CHECK(axis.mean == doctest::Approx(1.5).epsilon(0.01));
        CHECK(axis.stddev == doctest::Approx(0.5).epsilon(0.01));
    }
}
