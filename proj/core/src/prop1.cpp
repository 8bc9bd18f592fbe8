// SPDX-License-Identifier: Apache-2.0
#include "ctlab/prop1.hpp"

#include <cmath>
#include <stdexcept>

namespace ctlab {

namespace {

double simpson(double lo, double hi, long intervals, const auto& f) {
    if (intervals < 2) {
        throw std::invalid_argument("simpson: need at least 2 intervals");
    }
    if (intervals % 2 != 0) {
        ++intervals;
    }
    const double h = (hi - lo) / intervals;
    double acc = f(lo) + f(hi);
    for (long j = 1; j < intervals; ++j) {
        acc += f(lo + j * h) * ((j % 2 == 0) ? 2.0 : 4.0);
    }
    return acc * h / 3.0;
}

// student/teacher residual at grid pair (sigma_i, sigma_{i+1})
inline double residual(const ToySpec& s, double si, double sj) {
    return s.sigma_min / sj * s.xi + (1.0 - s.sigma_min / sj) * s.theta -
           s.sigma_min / si * s.xi - (1.0 - s.sigma_min / si) * s.theta_minus;
}

}  // namespace

void ToySpec::validate() const {
    if (!(sigma_min > 0.0) || !(sigma_max > sigma_min) || n < 2) {
        throw std::invalid_argument("ToySpec: need 0 < sigma_min < sigma_max and n >= 2");
    }
}

double toy_loss(const ToySpec& spec) {
    spec.validate();
    const double step = (spec.sigma_max - spec.sigma_min) / static_cast<double>(spec.n - 1);
    double acc = 0.0;
    for (long i = 1; i < spec.n; ++i) {
        const double si = spec.sigma_min + (i - 1) * step;
        const double sj = spec.sigma_min + i * step;
        const double r = residual(spec, si, sj);
        acc += r * r;
    }
    return acc / static_cast<double>(spec.n - 1);
}

double toy_loss_mc(const ToySpec& spec, const std::vector<double>& z_draws) {
    spec.validate();
    if (z_draws.empty()) {
        throw std::invalid_argument("toy_loss_mc: need at least one z draw");
    }
    const double step = (spec.sigma_max - spec.sigma_min) / static_cast<double>(spec.n - 1);
    double acc = 0.0;
    for (long i = 1; i < spec.n; ++i) {
        const double si = spec.sigma_min + (i - 1) * step;
        const double sj = spec.sigma_min + i * step;
        for (double z : z_draws) {
            // student at x = xi + sigma_{i+1} z, teacher at x = xi + sigma_i z
            const double fs = spec.sigma_min / sj * (spec.xi + sj * z) +
                              (1.0 - spec.sigma_min / sj) * spec.theta;
            const double ft = spec.sigma_min / si * (spec.xi + si * z) +
                              (1.0 - spec.sigma_min / si) * spec.theta_minus;
            const double r = fs - ft;
            acc += r * r;
        }
    }
    return acc / static_cast<double>(spec.n - 1) / static_cast<double>(z_draws.size());
}

double toy_loss_limit(double theta, double theta_minus, double sigma_min, double sigma_max,
                      long quadrature_points) {
    if (theta == theta_minus) {
        throw std::invalid_argument("toy_loss_limit: the limit statement needs theta != theta_minus");
    }
    const double gap = theta - theta_minus;
    const double integral = simpson(sigma_min, sigma_max, quadrature_points, [&](double s) {
        const double a = 1.0 - sigma_min / s;
        return a * a;
    });
    return integral / (sigma_max - sigma_min) * gap * gap;
}

double toy_scaled_grad(const ToySpec& spec) {
    spec.validate();
    const double step = (spec.sigma_max - spec.sigma_min) / static_cast<double>(spec.n - 1);
    double acc = 0.0;
    for (long i = 1; i < spec.n; ++i) {
        const double si = spec.sigma_min + (i - 1) * step;
        const double sj = spec.sigma_min + i * step;
        acc += 2.0 * residual(spec, si, sj) * (1.0 - spec.sigma_min / sj);
    }
    return acc / static_cast<double>(spec.n - 1) / step;
}

double toy_scaled_grad_limit(double theta, double xi, double sigma_min, double sigma_max,
                             long quadrature_points) {
    const double integral = simpson(sigma_min, sigma_max, quadrature_points, [&](double s) {
        return sigma_min / (s * s) * (1.0 - sigma_min / s);
    });
    return 2.0 * (theta - xi) * integral / (sigma_max - sigma_min);
}

namespace {

double run_descent(double xi, double theta0, long n, long steps, double lr, double mu,
                   bool ema_teacher, double sigma_min, double sigma_max) {
    const double step = (sigma_max - sigma_min) / static_cast<double>(n - 1);
    double theta = theta0;
    double teacher = theta0;
    ToySpec spec;
    spec.xi = xi;
    spec.sigma_min = sigma_min;
    spec.sigma_max = sigma_max;
    spec.n = n;
    for (long t = 0; t < steps; ++t) {
        spec.theta = theta;
        spec.theta_minus = ema_teacher ? teacher : theta;
        double acc = 0.0;
        for (long i = 1; i < n; ++i) {
            const double si = sigma_min + (i - 1) * step;
            const double sj = sigma_min + i * step;
            acc += 2.0 * residual(spec, si, sj) * (1.0 - sigma_min / sj);
        }
        theta -= lr * acc / static_cast<double>(n - 1);
        if (ema_teacher) {
            teacher = mu * teacher + (1.0 - mu) * theta;
        }
    }
    return theta;
}

}  // namespace

double toy_descent(double xi, double theta0, long n, long steps, double lr, double sigma_min,
                   double sigma_max) {
    return run_descent(xi, theta0, n, steps, lr, 0.0, false, sigma_min, sigma_max);
}

double toy_descent_ema(double xi, double theta0, long n, long steps, double lr, double mu,
                       double sigma_min, double sigma_max) {
    if (!(mu >= 0.0 && mu < 1.0)) {
        throw std::invalid_argument("toy_descent_ema: mu must be in [0, 1)");
    }
    return run_descent(xi, theta0, n, steps, lr, mu, true, sigma_min, sigma_max);
}

double fit_order(const std::vector<long>& grid_sizes, const std::vector<double>& errors,
                 double sigma_min, double sigma_max) {
    if (grid_sizes.size() != errors.size() || grid_sizes.size() < 2) {
        throw std::invalid_argument("fit_order: need matching lists with at least 2 points");
    }
    const std::size_t m = grid_sizes.size();
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        const double x = std::log((sigma_max - sigma_min) / static_cast<double>(grid_sizes[j] - 1));
        const double y = std::log(errors[j]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

}  // namespace ctlab
