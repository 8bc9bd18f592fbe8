// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ctlab/rng.hpp"

namespace ctlab {

enum class EmbeddingKind { fourier, positional };

// Maps a noise level to a fixed-width feature vector through u = log(sigma)/4.
// Fourier frequencies are drawn once at construction and never trained.
struct NoiseEmbedding {
    EmbeddingKind kind = EmbeddingKind::fourier;
    double scale = 0.02;
    int dim = 32;                    // even: one (cos, sin) pair per frequency
    std::vector<double> frequencies; // fourier only, dim/2 standard normal draws

    static NoiseEmbedding fourier(int dim, double scale, Rng& rng);
    static NoiseEmbedding positional(int dim);

    void embed(double sigma, std::span<double> out) const;
    std::vector<double> embed(double sigma) const;
};

enum class Activation { tanh_act, silu };

enum class RunMode { train, eval };

// Identifies one draw of dropout masks. The same (seed, step) always yields
// the same masks for the same layer shapes, which is what lets the student
// and teacher passes of one training step share their dropout randomness.
struct DropoutState {
    std::uint64_t seed = 0;
    std::uint64_t step = 0;
};

// Activation record from one forward pass, consumed by backward().
struct Tape {
    std::uint64_t net_uid = 0;
    std::uint64_t revision = 0;
    bool train_mode = false;
    double sigma = 0.0;
    std::vector<double> input;                  // scaled x concatenated with the noise embedding
    std::vector<std::vector<double>> pre;       // per hidden layer, pre-activation
    std::vector<std::vector<double>> hidden;    // per hidden layer, activation before dropout
    std::vector<std::vector<double>> masked;    // per hidden layer, activation after dropout
    std::vector<std::vector<double>> mask;      // per hidden layer; empty when no dropout applied
    std::vector<double> output;
};

// Fully connected network F(x, sigma) with a flat parameter vector.
// The data input is rescaled by 1/sqrt(1 + sigma^2) before the first layer so
// hidden units stay in range across the whole noise span; conditioning on
// sigma enters only through the embedding.
class Network {
public:
    Network(int x_dim, std::vector<int> hidden_widths, Activation activation, double dropout_rate,
            NoiseEmbedding embedding);

    int x_dim() const { return x_dim_; }
    int output_dim() const { return x_dim_; }
    int param_count() const { return static_cast<int>(params_.size()); }
    const std::vector<int>& hidden_widths() const { return hidden_widths_; }
    Activation activation() const { return activation_; }
    double dropout_rate() const { return dropout_rate_; }
    const NoiseEmbedding& embedding() const { return embedding_; }

    std::span<const double> params() const { return params_; }
    void set_params(std::span<const double> p);
    void add_to_params(std::span<const double> delta);
    // fresh initialization: weights N(0, 1/fan_in), biases 0
    void init_params(Rng& rng);

    std::uint64_t revision() const { return revision_; }

    void forward(std::span<const double> x, double sigma, RunMode mode, const DropoutState& drop,
                 Tape& tape) const;
    std::vector<double> forward(std::span<const double> x, double sigma, RunMode mode,
                                const DropoutState& drop) const;

    // Accumulates d(output . upstream)/d(params) into grad_accum.
    // Rejects tapes from another network object or an older parameter state.
    void backward(const Tape& tape, std::span<const double> upstream,
                  std::span<double> grad_accum) const;

private:
    int x_dim_;
    std::vector<int> hidden_widths_;
    Activation activation_;
    double dropout_rate_;
    NoiseEmbedding embedding_;

    std::vector<int> widths_;        // full chain: input, hidden..., output
    std::vector<int> weight_offset_; // per layer, into params_
    std::vector<int> bias_offset_;
    std::vector<double> params_;

    std::uint64_t uid_;
    std::uint64_t revision_ = 0;
};

// Worst relative error between backward() and central finite differences over
// randomized inputs and parameter coordinates. Dropout masks are pinned
// through the DropoutState during differencing.
double grad_check(const Network& net, int trials, Rng& rng, double dropout_probe = -1.0);

}  // namespace ctlab
