// SPDX-License-Identifier: Apache-2.0
#include "ctlab/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ctlab {

double metric_value_grad(const Metric& m, std::span<const double> x, std::span<const double> y,
                         std::span<double> grad_x) {
    const std::size_t d = x.size();
    if (y.size() != d || grad_x.size() != d) {
        throw std::invalid_argument("metric_value_grad: dimension mismatch");
    }
    if (d == 0) {
        throw std::invalid_argument("metric_value_grad: empty vectors");
    }

    switch (m.kind) {
        case MetricKind::squared_l2: {
            double value = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double r = x[j] - y[j];
                value += r * r;
                grad_x[j] = 2.0 * r;
            }
            return value;
        }
        case MetricKind::l1: {
            double value = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double r = x[j] - y[j];
                value += std::abs(r);
                grad_x[j] = (r > 0.0) ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
            }
            return value;
        }
        case MetricKind::pseudo_huber: {
            if (!(m.c > 0.0)) {
                throw std::invalid_argument("metric_value_grad: pseudo_huber needs c > 0");
            }
            double sq = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double r = x[j] - y[j];
                sq += r * r;
            }
            const double root = std::sqrt(sq + m.c * m.c);
            for (std::size_t j = 0; j < d; ++j) {
                grad_x[j] = (x[j] - y[j]) / root;
            }
            return root - m.c;
        }
    }
    throw std::logic_error("metric_value_grad: unknown kind");
}

double huber_c(int dim) {
    if (dim < 1) {
        throw std::invalid_argument("huber_c: dimensionality must be >= 1, got " + std::to_string(dim));
    }
    return 0.00054 * std::sqrt(static_cast<double>(dim));
}

}  // namespace ctlab
