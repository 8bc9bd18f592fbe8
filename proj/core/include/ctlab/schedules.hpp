// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "ctlab/rng.hpp"

namespace ctlab {

enum class GridSpacing { rho_interpolated, linear };

// Discretized noise levels sigma_1 < ... < sigma_n. Levels carry the domain's
// 1-based index convention: sigma(1) == sigma_min, sigma(n) == sigma_max.
struct NoiseGrid {
    double sigma_min = 0.0;
    double sigma_max = 0.0;
    double rho = 7.0;
    int n = 0;
    GridSpacing spacing = GridSpacing::rho_interpolated;
    std::vector<double> levels;  // levels[0] holds sigma_1

    double sigma(int index1) const { return levels[static_cast<std::size_t>(index1) - 1]; }
};

// rho-interpolated spacing: sigma_i = (smin^(1/rho) + (i-1)/(n-1) * (smax^(1/rho) - smin^(1/rho)))^rho.
// Endpoints are pinned to the inputs bit for bit.
NoiseGrid build_grid(int n, double sigma_min, double sigma_max, double rho,
                     GridSpacing spacing = GridSpacing::rho_interpolated);

enum class CurriculumShape { constant, sqrt_original, linear, square, cosine, exponential };

// Map from training step k to the number of discretization levels N(k),
// interpolating from s0 + 1 up to s1 + 1 over K total iterations.
struct Curriculum {
    CurriculumShape shape = CurriculumShape::exponential;
    int s0 = 10;
    int s1 = 1280;
    long total_steps = 400000;  // K

    friend bool operator==(const Curriculum&, const Curriculum&) = default;
};

// N(k) for 0 <= k < K. The exponential shape doubles s0 every
// K' = floor(K / (log2(floor(s1/s0)) + 1)) steps and caps at s1, then adds 1.
// Ceilings in the other shapes are taken strictly (floor + 1) so that every
// non-constant shape starts at exactly s0 + 1.
int curriculum_n(const Curriculum& c, long k);

enum class IndexSamplerKind { uniform, lognormal };

// Distribution over the noise-level index i in [1, n-1].
struct NoiseIndexSampler {
    IndexSamplerKind kind = IndexSamplerKind::lognormal;
    double p_mean = -1.1;
    double p_std = 2.0;

    friend bool operator==(const NoiseIndexSampler&, const NoiseIndexSampler&) = default;
};

// PMF over i in [1, n-1]; entry [0] corresponds to i = 1.
// lognormal kind: p(i) proportional to
//   erf((log sigma_{i+1} - p_mean) / (sqrt(2) p_std)) - erf((log sigma_i - p_mean) / (sqrt(2) p_std)),
// normalized to sum to 1.
std::vector<double> index_pmf(const NoiseIndexSampler& s, const NoiseGrid& g);

// Inverse-CDF draw from `pmf` given a uniform u in [0, 1); returns a 1-based index.
int sample_from_pmf(std::span<const double> pmf, double u);

// Draws i in [1, n-1] distributed according to index_pmf.
int sample_index(const NoiseIndexSampler& s, const NoiseGrid& g, Rng& rng);

enum class WeightingKind { uniform, inverse_gap };

// Loss weight for index i in [1, n-1]: 1 for uniform, 1/(sigma_{i+1} - sigma_i) for inverse_gap.
double weight(WeightingKind w, const NoiseGrid& g, int i);

}  // namespace ctlab
