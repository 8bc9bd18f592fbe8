// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

namespace ctlab {

// Scalar toy: data is a point mass at xi, the model family is
// f(x, sigma) = (sigma_min/sigma) x + (1 - sigma_min/sigma) theta, and the
// noise levels are linearly spaced. The gaussian draw cancels from the
// objective, so every quantity below is an exact finite sum.
struct ToySpec {
    double xi = 1.0;
    double theta = 0.5;
    double theta_minus = 0.3;
    double sigma_min = 0.002;
    double sigma_max = 80.0;
    long n = 1281;  // grid size

    void validate() const;
};

// Exact objective: mean over i in [1, n-1] of the squared teacher/student gap
// under the squared l2 metric and uniform weighting.
double toy_loss(const ToySpec& spec);

// Same objective with the gaussian draw left in, averaged over the given z
// values. Its value is independent of z; exposed so the cancellation can be
// demonstrated rather than assumed.
double toy_loss_mc(const ToySpec& spec, const std::vector<double>& z_draws);

// n -> infinity limit for theta_minus != theta, via composite Simpson on
// (1 - sigma_min/sigma)^2 (theta - theta_minus)^2 under sigma ~ U[min, max].
double toy_loss_limit(double theta, double theta_minus, double sigma_min, double sigma_max,
                      long quadrature_points);

// (1/delta_sigma) dL/dtheta, with theta_minus held fixed (the training
// gradient flows through the student branch only).
double toy_scaled_grad(const ToySpec& spec);

// Limit of the scaled gradient at theta_minus = theta:
// 2 (theta - xi) E[sigma_min/sigma^2 (1 - sigma_min/sigma)], Simpson form.
double toy_scaled_grad_limit(double theta, double xi, double sigma_min, double sigma_max,
                             long quadrature_points);

// Gradient descent on the toy loss with the teacher pinned to the student
// each step. Returns the final theta; the unique fixed point is xi.
double toy_descent(double xi, double theta0, long n, long steps, double lr,
                   double sigma_min = 0.002, double sigma_max = 80.0);

// Same descent with a lagging EMA teacher of decay mu; with mu near 1 the
// objective loses its pull toward xi.
double toy_descent_ema(double xi, double theta0, long n, long steps, double lr, double mu,
                       double sigma_min = 0.002, double sigma_max = 80.0);

// Least-squares slope of log|err| against log(delta_sigma); the empirical
// convergence order of a sequence of (n, err) measurements.
double fit_order(const std::vector<long>& grid_sizes, const std::vector<double>& errors,
                 double sigma_min, double sigma_max);

}  // namespace ctlab
