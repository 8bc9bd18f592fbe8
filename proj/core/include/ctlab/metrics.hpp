// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

namespace ctlab {

enum class MetricKind { squared_l2, l1, pseudo_huber };

// Distance d(x, y) used by the consistency loss. `c` is the pseudo-Huber
// breadth parameter and is ignored by the other kinds.
struct Metric {
    MetricKind kind = MetricKind::pseudo_huber;
    double c = 0.0;

    friend bool operator==(const Metric&, const Metric&) = default;
};

// Returns d(x, y) and writes the gradient with respect to x into grad_x.
//   squared_l2:   |x-y|^2,                  grad 2(x-y)
//   l1:           sum |x_j - y_j|,          grad sign(x_j - y_j), 0 at ties
//   pseudo_huber: sqrt(|x-y|^2 + c^2) - c,  grad (x-y)/sqrt(|x-y|^2 + c^2)
double metric_value_grad(const Metric& m, std::span<const double> x, std::span<const double> y,
                         std::span<double> grad_x);

// Breadth heuristic c = 0.00054 * sqrt(d) for data dimensionality d.
double huber_c(int dim);

}  // namespace ctlab
