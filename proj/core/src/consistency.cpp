// SPDX-License-Identifier: Apache-2.0
#include "ctlab/consistency.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ctlab {

SkipScales skip_scales(double sigma, double sigma_min, double sigma_data) {
    if (sigma < sigma_min) {
        throw std::invalid_argument("skip_scales: sigma below sigma_min");
    }
    const double shifted = sigma - sigma_min;
    SkipScales s;
    s.c_skip = sigma_data * sigma_data / (shifted * shifted + sigma_data * sigma_data);
    s.c_out = sigma_data * shifted / std::sqrt(sigma_data * sigma_data + sigma * sigma);
    return s;
}

ConsistencyModel::ConsistencyModel(Network network, double sigma_min, double sigma_data)
    : net_(std::move(network)), sigma_min_(sigma_min), sigma_data_(sigma_data) {
    if (!(sigma_min_ > 0.0) || !(sigma_data_ > 0.0)) {
        throw std::invalid_argument("ConsistencyModel: sigma_min and sigma_data must be > 0");
    }
}

void ConsistencyModel::forward(std::span<const double> x, double sigma, RunMode mode,
                               const DropoutState& drop, Tape& tape, std::span<double> out) const {
    if (sigma < sigma_min_) {
        throw std::invalid_argument("ConsistencyModel: sigma below sigma_min");
    }
    const SkipScales s = skip_scales(sigma, sigma_min_, sigma_data_);
    net_.forward(x, sigma, mode, drop, tape);
    for (std::size_t j = 0; j < x.size(); ++j) {
        out[j] = s.c_skip * x[j] + s.c_out * tape.output[j];
    }
}

std::vector<double> ConsistencyModel::forward(std::span<const double> x, double sigma, RunMode mode,
                                              const DropoutState& drop) const {
    std::vector<double> out(x.size());
    Tape tape;
    forward(x, sigma, mode, drop, tape, out);
    return out;
}

void ConsistencyModel::backward(const Tape& tape, std::span<const double> upstream,
                                std::span<double> grad_accum) const {
    const SkipScales s = skip_scales(tape.sigma, sigma_min_, sigma_data_);
    std::vector<double> scaled(upstream.size());
    for (std::size_t j = 0; j < upstream.size(); ++j) {
        scaled[j] = s.c_out * upstream[j];
    }
    net_.backward(tape, scaled, grad_accum);
}

ConsistencyFn ConsistencyModel::eval_fn() const {
    return [this](std::span<const double> x, double sigma, std::span<double> out) {
        Tape tape;
        forward(x, sigma, RunMode::eval, DropoutState{}, tape, out);
    };
}

Batch ConsistencyModel::one_step_sample(int n, double sigma_max, Rng& rng) const {
    return sample_one_step(eval_fn(), n, net_.x_dim(), sigma_max, rng);
}

Batch ConsistencyModel::multistep_sample(const NoiseGrid& grid, const std::vector<int>& indices,
                                         int n, Rng& rng) const {
    return sample_multistep(eval_fn(), grid, indices, n, net_.x_dim(), rng);
}

Batch sample_one_step(const ConsistencyFn& f, int n, int dim, double sigma_max, Rng& rng) {
    Batch out(n, dim);
    std::vector<double> z(static_cast<std::size_t>(dim));
    for (int s = 0; s < n; ++s) {
        for (double& v : z) {
            v = sigma_max * rng.normal();
        }
        f(z, sigma_max, out.row(s));
    }
    return out;
}

Batch sample_multistep(const ConsistencyFn& f, const NoiseGrid& grid, const std::vector<int>& indices,
                       int n, int dim, Rng& rng) {
    const int k = static_cast<int>(indices.size());
    if (k < 2 || indices.front() != 1 || indices.back() != grid.n) {
        throw std::invalid_argument("sample_multistep: indices must run from 1 to n");
    }
    for (int j = 0; j + 1 < k; ++j) {
        if (indices[static_cast<std::size_t>(j)] >= indices[static_cast<std::size_t>(j) + 1]) {
            throw std::invalid_argument("sample_multistep: indices must increase strictly");
        }
    }

    Batch out(n, dim);
    std::vector<double> x(static_cast<std::size_t>(dim));
    std::vector<double> y(static_cast<std::size_t>(dim));
    const double smin = grid.sigma(1);
    for (int s = 0; s < n; ++s) {
        for (double& v : x) {
            v = grid.sigma_max * rng.normal();
        }
        for (int step = k - 1; step >= 1; --step) {
            const double sigma_hi = grid.sigma(indices[static_cast<std::size_t>(step)]);
            const double sigma_lo = grid.sigma(indices[static_cast<std::size_t>(step) - 1]);
            f(x, sigma_hi, y);
            const double extra = sigma_lo * sigma_lo - smin * smin;
            if (extra > 0.0) {
                const double coeff = std::sqrt(extra);
                for (std::size_t j = 0; j < x.size(); ++j) {
                    x[j] = y[j] + coeff * rng.normal();
                }
            } else {
                // sigma_lo == sigma_min: no fresh noise, keep the draw discipline
                // identical to one_step_sample
                x = y;
            }
        }
        auto row = out.row(s);
        std::copy(x.begin(), x.end(), row.begin());
    }
    return out;
}

ScoreFn model_score(const ConsistencyModel& m) {
    return [&m](std::span<const double> x, double sigma, std::span<double> out) {
        Tape tape;
        std::vector<double> fx(x.size());
        m.forward(x, sigma, RunMode::eval, DropoutState{}, tape, fx);
        const double inv = 1.0 / (sigma * sigma);
        for (std::size_t j = 0; j < x.size(); ++j) {
            out[j] = (fx[j] - x[j]) * inv;
        }
    };
}

}  // namespace ctlab
