// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "ctlab/batch.hpp"
#include "ctlab/net.hpp"
#include "ctlab/schedules.hpp"
#include "ctlab/synthetic.hpp"

namespace ctlab {

struct SkipScales {
    double c_skip = 1.0;
    double c_out = 0.0;
};

// Boundary-preserving mixing weights:
//   c_skip = sigma_data^2 / ((sigma - sigma_min)^2 + sigma_data^2)
//   c_out  = sigma_data * (sigma - sigma_min) / sqrt(sigma_data^2 + sigma^2)
// so that c_skip(sigma_min) = 1 and c_out(sigma_min) = 0 exactly.
SkipScales skip_scales(double sigma, double sigma_min, double sigma_data);

// A consistency map evaluated batch-free: out = f(x, sigma).
using ConsistencyFn = std::function<void(std::span<const double> x, double sigma, std::span<double> out)>;

// f(x, sigma) = c_skip(sigma) x + c_out(sigma) F(x, sigma). The wrapper pins
// the boundary f(x, sigma_min) = x for any parameters.
class ConsistencyModel {
public:
    ConsistencyModel(Network network, double sigma_min, double sigma_data);

    Network& network() { return net_; }
    const Network& network() const { return net_; }
    double sigma_min() const { return sigma_min_; }
    double sigma_data() const { return sigma_data_; }

    void forward(std::span<const double> x, double sigma, RunMode mode, const DropoutState& drop,
                 Tape& tape, std::span<double> out) const;
    std::vector<double> forward(std::span<const double> x, double sigma, RunMode mode,
                                const DropoutState& drop) const;

    // Parameter gradient of (f . upstream) through the wrapper; the tape must
    // come from the matching forward call.
    void backward(const Tape& tape, std::span<const double> upstream,
                  std::span<double> grad_accum) const;

    // eval-mode closure for the samplers and the induced score
    ConsistencyFn eval_fn() const;

    Batch one_step_sample(int n, double sigma_max, Rng& rng) const;
    Batch multistep_sample(const NoiseGrid& grid, const std::vector<int>& indices, int n,
                           Rng& rng) const;

private:
    Network net_;
    double sigma_min_;
    double sigma_data_;
};

// Samplers over an arbitrary consistency map (lets the closed-form oracles
// stand in for a trained network).
Batch sample_one_step(const ConsistencyFn& f, int n, int dim, double sigma_max, Rng& rng);

// indices must start at 1, end at grid.n, and increase strictly. Walks the
// recursion x <- f(x, sigma_{i_{k+1}}) + sqrt(sigma_{i_k}^2 - sigma_min^2) z.
Batch sample_multistep(const ConsistencyFn& f, const NoiseGrid& grid, const std::vector<int>& indices,
                       int n, int dim, Rng& rng);

// Score a consistency map induces when its output is read as a denoised
// estimate: (f(x, sigma) - x) / sigma^2.
ScoreFn model_score(const ConsistencyModel& m);

}  // namespace ctlab
