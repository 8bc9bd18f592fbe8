// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>
#include <vector>

#include "ctlab/batch.hpp"
#include "ctlab/rng.hpp"

namespace ctlab {

enum class DistKind { delta, gaussian, gaussian_mixture };

// Isotropic mixture component N(mean, stddev^2 I); stddev 0 encodes a point mass.
struct MixtureComponent {
    double weight = 1.0;
    std::vector<double> mean;
    double stddev = 0.0;

    friend bool operator==(const MixtureComponent&, const MixtureComponent&) = default;
};

// Data distribution with exact sampler, exact perturbed score, and (for delta
// and gaussian) a closed-form consistency function.
struct SyntheticDistribution {
    DistKind kind = DistKind::delta;
    int dim = 1;
    std::vector<MixtureComponent> components;

    static SyntheticDistribution delta(std::vector<double> location);
    static SyntheticDistribution gaussian(std::vector<double> mean, double stddev);
    static SyntheticDistribution mixture(std::vector<MixtureComponent> components);

    // throws std::invalid_argument when the invariants do not hold
    void validate() const;

    friend bool operator==(const SyntheticDistribution&, const SyntheticDistribution&) = default;
};

// n i.i.d. draws from the data distribution.
Batch sample_data(const SyntheticDistribution& d, int n, Rng& rng);

// Exact score of the sigma-perturbed distribution, grad_x log p_sigma(x).
void perturbed_score(const SyntheticDistribution& d, std::span<const double> x, double sigma,
                     std::span<double> out);

// log p_sigma(x); responsibilities are formed in log space so large sigma
// does not underflow.
double log_perturbed_density(const SyntheticDistribution& d, std::span<const double> x, double sigma);

// Closed-form consistency map to sigma_min. Defined for delta and gaussian
// only; mixtures must go through pf_ode_solve.
void true_consistency(const SyntheticDistribution& d, std::span<const double> x, double sigma,
                      double sigma_min, std::span<double> out);

// score callback: out = grad_x log p_sigma(x)
using ScoreFn = std::function<void(std::span<const double> x, double sigma, std::span<double> out)>;

ScoreFn exact_score(const SyntheticDistribution& d);

// Integrates dx/dsigma = -sigma * score(x, sigma) from sigma_from to sigma_to
// with Heun steps on a rho-interpolated sub-grid. Both directions allowed.
std::vector<double> pf_ode_solve(const ScoreFn& score, std::span<const double> x, double sigma_from,
                                 double sigma_to, int steps, double rho = 7.0);

}  // namespace ctlab
