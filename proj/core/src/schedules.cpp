// SPDX-License-Identifier: Apache-2.0
#include "ctlab/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace ctlab {

NoiseGrid build_grid(int n, double sigma_min, double sigma_max, double rho, GridSpacing spacing) {
    if (n < 2) {
        throw std::invalid_argument("build_grid: need at least 2 levels, got " + std::to_string(n));
    }
    if (!(sigma_min > 0.0) || !(sigma_max > sigma_min)) {
        throw std::invalid_argument("build_grid: need 0 < sigma_min < sigma_max");
    }
    if (!(rho >= 1.0)) {
        throw std::invalid_argument("build_grid: need rho >= 1");
    }

    NoiseGrid g;
    g.sigma_min = sigma_min;
    g.sigma_max = sigma_max;
    g.rho = rho;
    g.n = n;
    g.spacing = spacing;
    g.levels.resize(static_cast<std::size_t>(n));

    if (spacing == GridSpacing::rho_interpolated) {
        const double lo = std::pow(sigma_min, 1.0 / rho);
        const double hi = std::pow(sigma_max, 1.0 / rho);
        for (int i = 0; i < n; ++i) {
            const double t = static_cast<double>(i) / (n - 1);
            g.levels[static_cast<std::size_t>(i)] = std::pow(lo + t * (hi - lo), rho);
        }
    } else {
        const double step = (sigma_max - sigma_min) / (n - 1);
        for (int i = 0; i < n; ++i) {
            g.levels[static_cast<std::size_t>(i)] = sigma_min + i * step;
        }
    }
    // endpoints must equal the inputs exactly, not just to rounding
    g.levels.front() = sigma_min;
    g.levels.back() = sigma_max;
    return g;
}

namespace {

// strict ceiling: smallest integer strictly greater than x
long strict_ceil(double x) {
    return static_cast<long>(std::floor(x)) + 1;
}

}  // namespace

int curriculum_n(const Curriculum& c, long k) {
    if (c.s0 < 1 || c.s1 < c.s0 || c.total_steps < 1) {
        throw std::invalid_argument("curriculum_n: invalid curriculum parameters");
    }
    if (k < 0 || k >= c.total_steps) {
        throw std::invalid_argument("curriculum_n: step " + std::to_string(k) + " outside [0, K)");
    }

    const double t = static_cast<double>(k) / static_cast<double>(c.total_steps);
    const double span = static_cast<double>(c.s1 + 1 - c.s0);

    switch (c.shape) {
        case CurriculumShape::constant:
            return c.s1 + 1;
        case CurriculumShape::exponential: {
            const long doublings = static_cast<long>(std::log2(static_cast<double>(c.s1 / c.s0))) + 1;
            const long period = std::max<long>(1, c.total_steps / doublings);
            long n = c.s0;
            for (long j = 0; j < k / period && n < c.s1; ++j) {
                n *= 2;
            }
            return static_cast<int>(std::min<long>(n, c.s1)) + 1;
        }
        case CurriculumShape::sqrt_original: {
            const double a = static_cast<double>(c.s1 + 1) * (c.s1 + 1) - static_cast<double>(c.s0) * c.s0;
            const double v = std::sqrt(t * a + static_cast<double>(c.s0) * c.s0) - 1.0;
            return static_cast<int>(strict_ceil(v)) + 1;
        }
        case CurriculumShape::linear:
            return static_cast<int>(strict_ceil(t * span + c.s0 - 1.0)) + 1;
        case CurriculumShape::square:
            return static_cast<int>(strict_ceil(t * t * span + c.s0 - 1.0)) + 1;
        case CurriculumShape::cosine: {
            const double interp = 0.5 * (1.0 - std::cos(std::numbers::pi * t));
            return static_cast<int>(strict_ceil(interp * span + c.s0 - 1.0)) + 1;
        }
    }
    throw std::logic_error("curriculum_n: unknown shape");
}

std::vector<double> index_pmf(const NoiseIndexSampler& s, const NoiseGrid& g) {
    const int bins = g.n - 1;
    std::vector<double> pmf(static_cast<std::size_t>(bins));
    if (s.kind == IndexSamplerKind::uniform) {
        const double p = 1.0 / bins;
        for (double& v : pmf) {
            v = p;
        }
        return pmf;
    }
    if (!(s.p_std > 0.0)) {
        throw std::invalid_argument("index_pmf: lognormal sampler needs p_std > 0");
    }
    const double inv = 1.0 / (std::sqrt(2.0) * s.p_std);
    double total = 0.0;
    for (int i = 0; i < bins; ++i) {
        const double lo = std::log(g.levels[static_cast<std::size_t>(i)]);
        const double hi = std::log(g.levels[static_cast<std::size_t>(i) + 1]);
        const double w = std::erf((hi - s.p_mean) * inv) - std::erf((lo - s.p_mean) * inv);
        pmf[static_cast<std::size_t>(i)] = w;
        total += w;
    }
    for (double& v : pmf) {
        v /= total;
    }
    return pmf;
}

int sample_from_pmf(std::span<const double> pmf, double u) {
    double cum = 0.0;
    const int bins = static_cast<int>(pmf.size());
    for (int i = 0; i < bins; ++i) {
        cum += pmf[static_cast<std::size_t>(i)];
        if (u < cum) {
            return i + 1;
        }
    }
    return bins;  // u landed in the rounding slack at the top
}

int sample_index(const NoiseIndexSampler& s, const NoiseGrid& g, Rng& rng) {
    return sample_from_pmf(index_pmf(s, g), rng.uniform01());
}

double weight(WeightingKind w, const NoiseGrid& g, int i) {
    if (i < 1 || i >= g.n) {
        throw std::invalid_argument("weight: index " + std::to_string(i) + " outside [1, n-1]");
    }
    if (w == WeightingKind::uniform) {
        return 1.0;
    }
    return 1.0 / (g.sigma(i + 1) - g.sigma(i));
}

}  // namespace ctlab
