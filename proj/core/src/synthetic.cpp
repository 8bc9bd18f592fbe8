// SPDX-License-Identifier: Apache-2.0
#include "ctlab/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace ctlab {

SyntheticDistribution SyntheticDistribution::delta(std::vector<double> location) {
    SyntheticDistribution d;
    d.kind = DistKind::delta;
    d.dim = static_cast<int>(location.size());
    d.components = {MixtureComponent{1.0, std::move(location), 0.0}};
    d.validate();
    return d;
}

SyntheticDistribution SyntheticDistribution::gaussian(std::vector<double> mean, double stddev) {
    SyntheticDistribution d;
    d.kind = DistKind::gaussian;
    d.dim = static_cast<int>(mean.size());
    d.components = {MixtureComponent{1.0, std::move(mean), stddev}};
    d.validate();
    return d;
}

SyntheticDistribution SyntheticDistribution::mixture(std::vector<MixtureComponent> components) {
    SyntheticDistribution d;
    d.kind = DistKind::gaussian_mixture;
    d.dim = components.empty() ? 0 : static_cast<int>(components.front().mean.size());
    d.components = std::move(components);
    d.validate();
    return d;
}

void SyntheticDistribution::validate() const {
    if (dim < 1 || components.empty()) {
        throw std::invalid_argument("SyntheticDistribution: need dim >= 1 and at least one component");
    }
    double total = 0.0;
    for (const auto& c : components) {
        if (static_cast<int>(c.mean.size()) != dim) {
            throw std::invalid_argument("SyntheticDistribution: component mean dimension mismatch");
        }
        if (c.weight < 0.0) {
            throw std::invalid_argument("SyntheticDistribution: negative component weight");
        }
        total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) {
        throw std::invalid_argument("SyntheticDistribution: component weights must sum to 1");
    }
    if (kind == DistKind::delta) {
        if (components.size() != 1 || components.front().stddev != 0.0) {
            throw std::invalid_argument("SyntheticDistribution: delta needs one component with stddev 0");
        }
    } else {
        for (const auto& c : components) {
            if (!(c.stddev > 0.0)) {
                throw std::invalid_argument("SyntheticDistribution: gaussian stddev must be > 0");
            }
        }
    }
}

Batch sample_data(const SyntheticDistribution& d, int n, Rng& rng) {
    if (n < 1) {
        throw std::invalid_argument("sample_data: need n >= 1");
    }
    Batch out(n, d.dim);
    for (int s = 0; s < n; ++s) {
        std::size_t comp = 0;
        if (d.components.size() > 1) {
            const double u = rng.uniform01();
            double cum = 0.0;
            comp = d.components.size() - 1;
            for (std::size_t j = 0; j < d.components.size(); ++j) {
                cum += d.components[j].weight;
                if (u < cum) {
                    comp = j;
                    break;
                }
            }
        }
        const auto& c = d.components[comp];
        auto row = out.row(s);
        if (c.stddev == 0.0) {
            for (int j = 0; j < d.dim; ++j) {
                row[static_cast<std::size_t>(j)] = c.mean[static_cast<std::size_t>(j)];
            }
        } else {
            for (int j = 0; j < d.dim; ++j) {
                row[static_cast<std::size_t>(j)] =
                    c.mean[static_cast<std::size_t>(j)] + c.stddev * rng.normal();
            }
        }
    }
    return out;
}

namespace {

void check_point(const SyntheticDistribution& d, std::span<const double> x) {
    if (static_cast<int>(x.size()) != d.dim) {
        throw std::invalid_argument("synthetic: point dimension mismatch");
    }
}

}  // namespace

void perturbed_score(const SyntheticDistribution& d, std::span<const double> x, double sigma,
                     std::span<double> out) {
    check_point(d, x);
    if (!(sigma > 0.0)) {
        throw std::invalid_argument("perturbed_score: sigma must be > 0");
    }
    const std::size_t dim = x.size();

    if (d.kind == DistKind::delta) {
        const auto& mean = d.components.front().mean;
        const double inv = 1.0 / (sigma * sigma);
        for (std::size_t j = 0; j < dim; ++j) {
            out[j] = -(x[j] - mean[j]) * inv;
        }
        return;
    }
    if (d.kind == DistKind::gaussian) {
        const auto& c = d.components.front();
        const double inv = 1.0 / (c.stddev * c.stddev + sigma * sigma);
        for (std::size_t j = 0; j < dim; ++j) {
            out[j] = -(x[j] - c.mean[j]) * inv;
        }
        return;
    }

    // mixture: responsibility-weighted sum of per-component gaussian scores,
    // responsibilities formed in log space
    const std::size_t m = d.components.size();
    std::vector<double> logp(m);
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < m; ++c) {
        const auto& comp = d.components[c];
        const double var = comp.stddev * comp.stddev + sigma * sigma;
        double sq = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            const double r = x[j] - comp.mean[j];
            sq += r * r;
        }
        logp[c] = std::log(comp.weight) - 0.5 * static_cast<double>(dim) * std::log(2.0 * std::numbers::pi * var) -
                  0.5 * sq / var;
        top = std::max(top, logp[c]);
    }
    double norm = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
        norm += std::exp(logp[c] - top);
    }
    for (std::size_t j = 0; j < dim; ++j) {
        out[j] = 0.0;
    }
    for (std::size_t c = 0; c < m; ++c) {
        const auto& comp = d.components[c];
        const double resp = std::exp(logp[c] - top) / norm;
        const double inv = 1.0 / (comp.stddev * comp.stddev + sigma * sigma);
        for (std::size_t j = 0; j < dim; ++j) {
            out[j] -= resp * (x[j] - comp.mean[j]) * inv;
        }
    }
}

double log_perturbed_density(const SyntheticDistribution& d, std::span<const double> x, double sigma) {
    check_point(d, x);
    if (!(sigma > 0.0)) {
        throw std::invalid_argument("log_perturbed_density: sigma must be > 0");
    }
    const std::size_t dim = x.size();
    double top = -std::numeric_limits<double>::infinity();
    std::vector<double> logp(d.components.size());
    for (std::size_t c = 0; c < d.components.size(); ++c) {
        const auto& comp = d.components[c];
        const double var = comp.stddev * comp.stddev + sigma * sigma;
        double sq = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            const double r = x[j] - comp.mean[j];
            sq += r * r;
        }
        logp[c] = std::log(comp.weight) - 0.5 * static_cast<double>(dim) * std::log(2.0 * std::numbers::pi * var) -
                  0.5 * sq / var;
        top = std::max(top, logp[c]);
    }
    double acc = 0.0;
    for (double v : logp) {
        acc += std::exp(v - top);
    }
    return top + std::log(acc);
}

void true_consistency(const SyntheticDistribution& d, std::span<const double> x, double sigma,
                      double sigma_min, std::span<double> out) {
    check_point(d, x);
    if (!(sigma_min > 0.0) || sigma < sigma_min) {
        throw std::invalid_argument("true_consistency: need sigma >= sigma_min > 0");
    }
    if (d.kind == DistKind::gaussian_mixture) {
        throw std::invalid_argument("true_consistency: no closed form for mixtures, use pf_ode_solve");
    }
    const auto& c = d.components.front();
    if (d.kind == DistKind::delta) {
        const double a = sigma_min / sigma;
        for (std::size_t j = 0; j < x.size(); ++j) {
            out[j] = a * x[j] + (1.0 - a) * c.mean[j];
        }
    } else {
        const double s2 = c.stddev * c.stddev;
        const double shrink = std::sqrt((s2 + sigma_min * sigma_min) / (s2 + sigma * sigma));
        // written as a convex blend so sigma == sigma_min returns x bit for bit
        for (std::size_t j = 0; j < x.size(); ++j) {
            out[j] = x[j] * shrink + c.mean[j] * (1.0 - shrink);
        }
    }
}

ScoreFn exact_score(const SyntheticDistribution& d) {
    return [d](std::span<const double> x, double sigma, std::span<double> out) {
        perturbed_score(d, x, sigma, out);
    };
}

std::vector<double> pf_ode_solve(const ScoreFn& score, std::span<const double> x, double sigma_from,
                                 double sigma_to, int steps, double rho) {
    if (!(sigma_from > 0.0) || !(sigma_to > 0.0)) {
        throw std::invalid_argument("pf_ode_solve: endpoints must be positive");
    }
    if (steps < 1) {
        throw std::invalid_argument("pf_ode_solve: need steps >= 1");
    }
    std::vector<double> state(x.begin(), x.end());
    if (sigma_from == sigma_to) {
        return state;
    }

    const std::size_t dim = x.size();
    std::vector<double> d1(dim), d2(dim), pred(dim);
    const double ua = std::pow(sigma_from, 1.0 / rho);
    const double ub = std::pow(sigma_to, 1.0 / rho);
    double s_cur = sigma_from;
    for (int j = 0; j < steps; ++j) {
        const double t_next = static_cast<double>(j + 1) / steps;
        const double s_next = (j + 1 == steps) ? sigma_to : std::pow(ua + t_next * (ub - ua), rho);
        const double h = s_next - s_cur;

        score(state, s_cur, d1);
        for (std::size_t i = 0; i < dim; ++i) {
            d1[i] *= -s_cur;
            pred[i] = state[i] + h * d1[i];
        }
        score(pred, s_next, d2);
        for (std::size_t i = 0; i < dim; ++i) {
            d2[i] *= -s_next;
            state[i] += 0.5 * h * (d1[i] + d2[i]);
        }
        s_cur = s_next;
    }
    return state;
}

}  // namespace ctlab
