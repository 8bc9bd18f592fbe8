// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <vector>

#include "ctlab/metrics.hpp"
#include "ctlab/rng.hpp"

using namespace ctlab;

namespace {

double metric_value(const Metric& m, const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> scratch(x.size());
    return metric_value_grad(m, x, y, scratch);
}

}  // namespace

TEST_CASE("pseudo-huber values and gradients") {
    const Metric m{MetricKind::pseudo_huber, 0.03};
    std::vector<double> grad(2);
    const std::vector<double> a{0.4, -1.2};

    CHECK(metric_value_grad(m, a, a, grad) == 0.0);
    CHECK(grad[0] == 0.0);
    CHECK(grad[1] == 0.0);

    // |x - y| = 1 via the (0.6, 0.8) direction
    const std::vector<double> x{0.6, 0.8};
    const std::vector<double> zero{0.0, 0.0};
    const double v = metric_value_grad(m, x, zero, grad);
    CHECK(v == doctest::Approx(std::sqrt(1.0009) - 0.03).epsilon(1e-14));
    CHECK(v == doctest::Approx(0.97045).epsilon(1e-4));
}

TEST_CASE("squared l2 and l1") {
    std::vector<double> grad(2);
    const std::vector<double> x{3.0, 4.0};
    const std::vector<double> zero{0.0, 0.0};
    const double v = metric_value_grad(Metric{MetricKind::squared_l2, 0.0}, x, zero, grad);
    CHECK(v == 25.0);
    CHECK(grad[0] == 6.0);
    CHECK(grad[1] == 8.0);

    std::vector<double> grad3(3);
    const std::vector<double> x3{3.0, -4.0, 1.0};
    const std::vector<double> y3{0.0, 0.0, 1.0};
    const double l1 = metric_value_grad(Metric{MetricKind::l1, 0.0}, x3, y3, grad3);
    CHECK(l1 == 7.0);
    CHECK(grad3[0] == 1.0);
    CHECK(grad3[1] == -1.0);
    CHECK(grad3[2] == 0.0);  // exact tie stays at zero
}

TEST_CASE("metric rejects shape errors and bad c") {
    std::vector<double> grad(2);
    const std::vector<double> x{1.0, 2.0};
    const std::vector<double> y1{1.0};
    const std::vector<double> y2{0.0, 0.0};
    CHECK_THROWS_AS(metric_value_grad(Metric{MetricKind::squared_l2, 0.0}, x, y1, grad),
                    std::invalid_argument);
    CHECK_THROWS_AS(metric_value_grad(Metric{MetricKind::pseudo_huber, 0.0}, x, y2, grad),
                    std::invalid_argument);
}

TEST_CASE("huber_c heuristic") {
    CHECK(huber_c(3072) >= 0.0299);
    CHECK(huber_c(3072) <= 0.0300);
    CHECK(huber_c(1) == 0.00054);
    for (int d : {1, 2, 37, 1024}) {
        CHECK(huber_c(4 * d) == doctest::Approx(2.0 * huber_c(d)).epsilon(1e-15));
    }
    CHECK_THROWS_AS(huber_c(0), std::invalid_argument);
}

TEST_CASE("gradients match central finite differences") {
    Rng rng(11);
    std::vector<double> x(4), y(4), grad(4);
    int checked = 0;
    for (int t = 0; t < 200; ++t) {
        rng.fill_normal(x);
        rng.fill_normal(y);
        Metric m;
        switch (t % 3) {
            case 0:
                m = {MetricKind::squared_l2, 0.0};
                break;
            case 1:
                m = {MetricKind::pseudo_huber, std::exp(rng.uniform(std::log(1e-3), std::log(1.0)))};
                break;
            default:
                m = {MetricKind::l1, 0.0};
                // keep every coordinate away from the kink
                for (std::size_t j = 0; j < x.size(); ++j) {
                    if (std::abs(x[j] - y[j]) < 0.1) {
                        x[j] += 0.2;
                    }
                }
                break;
        }
        metric_value_grad(m, x, y, grad);
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double h = 1e-6;
            std::vector<double> xp = x, xm = x;
            xp[j] += h;
            xm[j] -= h;
            const double fd = (metric_value(m, xp, y) - metric_value(m, xm, y)) / (2.0 * h);
            const double rel = std::abs(grad[j] - fd) / std::max({std::abs(grad[j]), std::abs(fd), 1e-8});
            CHECK(rel < 1e-6);
            ++checked;
        }
    }
    CHECK(checked == 800);
}

TEST_CASE("pseudo-huber interpolates between l2 norm and scaled squared l2") {
    Rng rng(3);
    std::vector<double> x(5), y(5), grad(5);
    for (int t = 0; t < 20; ++t) {
        rng.fill_normal(x);
        rng.fill_normal(y);
        double r2 = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double d = x[j] - y[j];
            r2 += d * d;
        }
        const double r = std::sqrt(r2);

        const double small_c = metric_value_grad(Metric{MetricKind::pseudo_huber, 1e-6}, x, y, grad);
        CHECK(std::abs(small_c - r) / r < 1e-3);

        const double large_c = metric_value_grad(Metric{MetricKind::pseudo_huber, 1e6}, x, y, grad);
        CHECK(std::abs(large_c * 2.0 * 1e6 / r2 - 1.0) < 1e-3);
    }
}

TEST_CASE("pseudo-huber never exceeds squared l2 for unit-or-larger errors") {
    Rng rng(5);
    std::vector<double> x(3), y(3), grad(3);
    for (int t = 0; t < 100; ++t) {
        rng.fill_normal(x);
        rng.fill_normal(y);
        // push the pair apart so |x - y| >= 1
        for (std::size_t j = 0; j < x.size(); ++j) {
            x[j] += (x[j] >= y[j]) ? 1.0 : -1.0;
        }
        const double c = rng.uniform(1e-4, 1.0);
        const double ph = metric_value_grad(Metric{MetricKind::pseudo_huber, c}, x, y, grad);
        const double l2 = metric_value_grad(Metric{MetricKind::squared_l2, 0.0}, x, y, grad);
        CHECK(ph <= l2);
    }
}

TEST_CASE("pseudo-huber second derivative is finite and continuous across zero") {
    const double c = 0.05;
    const Metric m{MetricKind::pseudo_huber, c};
    const std::vector<double> base{0.3, -0.7};
    const std::vector<double> dir{0.6, 0.8};  // unit ray

    auto along = [&](double r) {
        std::vector<double> x(base.size());
        for (std::size_t j = 0; j < x.size(); ++j) {
            x[j] = base[j] + r * dir[j];
        }
        return metric_value(m, x, base);
    };
    auto second = [&](double r) {
        const double h = 1e-4;
        return (along(r + h) - 2.0 * along(r) + along(r - h)) / (h * h);
    };

    const double at_zero = second(0.0);
    CHECK(std::isfinite(at_zero));
    CHECK(at_zero == doctest::Approx(1.0 / c).epsilon(1e-4));
    CHECK(second(1e-3) == doctest::Approx(at_zero).epsilon(2e-3));
    CHECK(second(-1e-3) == doctest::Approx(at_zero).epsilon(2e-3));
}
