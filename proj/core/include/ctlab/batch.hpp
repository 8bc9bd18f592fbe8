// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ctlab {

// Row-major sample matrix: `count` rows of dimension `dim`.
struct Batch {
    int count = 0;
    int dim = 0;
    std::vector<double> values;

    Batch() = default;
    Batch(int count_, int dim_)
        : count(count_), dim(dim_), values(static_cast<std::size_t>(count_) * dim_, 0.0) {}

    std::span<double> row(int i) {
        return {values.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)};
    }
    std::span<const double> row(int i) const {
        return {values.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)};
    }
};

}  // namespace ctlab
