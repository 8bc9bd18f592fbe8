// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctlab/batch.hpp"
#include "ctlab/rng.hpp"

namespace ctlab {

// Mean over random unit projections of the exact 1-D 2-Wasserstein distance
// between the projected empirical distributions (sorted-quantile form; batch
// sizes may differ).
double sliced_wasserstein(const Batch& a, const Batch& b, int projections, Rng& rng);

// 2 E|a-b| - E|a-a'| - E|b-b'| over all empirical pairs. The all-pairs
// normalization keeps the value exactly zero for identical multisets and
// nonnegative in general.
double energy_distance(const Batch& a, const Batch& b);

struct AxisMoments {
    double mean = 0.0;
    double stddev = 0.0;
};

std::vector<AxisMoments> per_axis_moments(const Batch& a);

// Sample-quality summary comparing a sample batch against reference draws.
struct EvalReport {
    double sliced_wasserstein_distance = -1.0;  // -1 when not computed
    double energy = -1.0;
    std::vector<AxisMoments> sample_moments;
    std::vector<AxisMoments> reference_moments;
    int sample_count = 0;
    std::uint64_t seed = 0;
    std::string note;
};

}  // namespace ctlab
