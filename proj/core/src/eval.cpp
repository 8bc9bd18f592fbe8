// SPDX-License-Identifier: Apache-2.0
#include "ctlab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ctlab {

namespace {

void check_pair(const Batch& a, const Batch& b) {
    if (a.count < 1 || b.count < 1) {
        throw std::invalid_argument("eval: batches must be nonempty");
    }
    if (a.dim != b.dim) {
        throw std::invalid_argument("eval: dimension mismatch");
    }
}

// exact squared W2 between two sorted 1-D empirical distributions with
// uniform weights 1/n and 1/m, by merging the quantile breakpoints
double w2_sorted(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    const std::size_t m = b.size();
    std::size_t ia = 0, ib = 0;
    double cum = 0.0;
    double acc = 0.0;
    while (ia < n && ib < m) {
        const double next_a = static_cast<double>(ia + 1) / n;
        const double next_b = static_cast<double>(ib + 1) / m;
        const double next = std::min(next_a, next_b);
        const double seg = next - cum;
        const double d = a[ia] - b[ib];
        acc += seg * d * d;
        cum = next;
        if (next_a <= next) {
            ++ia;
        }
        if (next_b <= next) {
            ++ib;
        }
    }
    return acc;
}

}  // namespace

double sliced_wasserstein(const Batch& a, const Batch& b, int projections, Rng& rng) {
    check_pair(a, b);
    if (projections < 1) {
        throw std::invalid_argument("sliced_wasserstein: need at least one projection");
    }

    std::vector<double> dir(static_cast<std::size_t>(a.dim));
    std::vector<double> pa(static_cast<std::size_t>(a.count));
    std::vector<double> pb(static_cast<std::size_t>(b.count));
    double total = 0.0;
    for (int p = 0; p < projections; ++p) {
        double norm = 0.0;
        do {
            rng.fill_normal(dir);
            norm = 0.0;
            for (double v : dir) {
                norm += v * v;
            }
        } while (norm == 0.0);
        norm = std::sqrt(norm);
        for (double& v : dir) {
            v /= norm;
        }

        for (int s = 0; s < a.count; ++s) {
            const auto row = a.row(s);
            double acc = 0.0;
            for (int j = 0; j < a.dim; ++j) {
                acc += row[static_cast<std::size_t>(j)] * dir[static_cast<std::size_t>(j)];
            }
            pa[static_cast<std::size_t>(s)] = acc;
        }
        for (int s = 0; s < b.count; ++s) {
            const auto row = b.row(s);
            double acc = 0.0;
            for (int j = 0; j < b.dim; ++j) {
                acc += row[static_cast<std::size_t>(j)] * dir[static_cast<std::size_t>(j)];
            }
            pb[static_cast<std::size_t>(s)] = acc;
        }
        std::sort(pa.begin(), pa.end());
        std::sort(pb.begin(), pb.end());
        total += std::sqrt(w2_sorted(pa, pb));
    }
    return total / projections;
}

double energy_distance(const Batch& a, const Batch& b) {
    check_pair(a, b);
    const int dim = a.dim;

    auto pair_mean = [dim](const Batch& u, const Batch& v) {
        double acc = 0.0;
        for (int i = 0; i < u.count; ++i) {
            const auto ri = u.row(i);
            double row_acc = 0.0;
            for (int j = 0; j < v.count; ++j) {
                const auto rj = v.row(j);
                double sq = 0.0;
                for (int k = 0; k < dim; ++k) {
                    const double d = ri[static_cast<std::size_t>(k)] - rj[static_cast<std::size_t>(k)];
                    sq += d * d;
                }
                row_acc += std::sqrt(sq);
            }
            acc += row_acc;
        }
        return acc / (static_cast<double>(u.count) * static_cast<double>(v.count));
    };

    const double cross = pair_mean(a, b);
    const double within_a = pair_mean(a, a);
    const double within_b = pair_mean(b, b);
    return 2.0 * cross - within_a - within_b;
}

std::vector<AxisMoments> per_axis_moments(const Batch& a) {
    std::vector<AxisMoments> out(static_cast<std::size_t>(a.dim));
    if (a.count < 1) {
        return out;
    }
    for (int j = 0; j < a.dim; ++j) {
        double mean = 0.0;
        for (int s = 0; s < a.count; ++s) {
            mean += a.row(s)[static_cast<std::size_t>(j)];
        }
        mean /= a.count;
        double var = 0.0;
        for (int s = 0; s < a.count; ++s) {
            const double d = a.row(s)[static_cast<std::size_t>(j)] - mean;
            var += d * d;
        }
        var = a.count > 1 ? var / (a.count - 1) : 0.0;
        out[static_cast<std::size_t>(j)] = {mean, std::sqrt(var)};
    }
    return out;
}

}  // namespace ctlab
