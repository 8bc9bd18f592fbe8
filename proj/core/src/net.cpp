// SPDX-License-Identifier: Apache-2.0
#include "ctlab/net.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace ctlab {

namespace {

std::atomic<std::uint64_t> g_net_uid{1};

double act_value(Activation a, double z) {
    if (a == Activation::tanh_act) {
        return std::tanh(z);
    }
    return z / (1.0 + std::exp(-z));  // silu
}

// derivative from (pre-activation, activation value)
double act_deriv(Activation a, double z, double h) {
    if (a == Activation::tanh_act) {
        return 1.0 - h * h;
    }
    const double s = 1.0 / (1.0 + std::exp(-z));
    return s * (1.0 + z * (1.0 - s));
}

}  // namespace

NoiseEmbedding NoiseEmbedding::fourier(int dim, double scale, Rng& rng) {
    if (dim < 2 || dim % 2 != 0) {
        throw std::invalid_argument("NoiseEmbedding: dim must be even and >= 2");
    }
    if (!(scale > 0.0)) {
        throw std::invalid_argument("NoiseEmbedding: scale must be > 0");
    }
    NoiseEmbedding e;
    e.kind = EmbeddingKind::fourier;
    e.scale = scale;
    e.dim = dim;
    e.frequencies.resize(static_cast<std::size_t>(dim) / 2);
    rng.fill_normal(e.frequencies);
    return e;
}

NoiseEmbedding NoiseEmbedding::positional(int dim) {
    if (dim < 2 || dim % 2 != 0) {
        throw std::invalid_argument("NoiseEmbedding: dim must be even and >= 2");
    }
    NoiseEmbedding e;
    e.kind = EmbeddingKind::positional;
    e.scale = 1.0;
    e.dim = dim;
    return e;
}

void NoiseEmbedding::embed(double sigma, std::span<double> out) const {
    if (!(sigma > 0.0)) {
        throw std::invalid_argument("NoiseEmbedding: sigma must be > 0");
    }
    if (static_cast<int>(out.size()) != dim) {
        throw std::invalid_argument("NoiseEmbedding: output size mismatch");
    }
    const double u = std::log(sigma) / 4.0;
    const int half = dim / 2;
    if (kind == EmbeddingKind::fourier) {
        for (int j = 0; j < half; ++j) {
            const double angle = 2.0 * std::numbers::pi * scale * frequencies[static_cast<std::size_t>(j)] * u;
            out[static_cast<std::size_t>(2 * j)] = std::cos(angle);
            out[static_cast<std::size_t>(2 * j) + 1] = std::sin(angle);
        }
    } else {
        // geometrically spaced wavelengths, transformer style
        for (int j = 0; j < half; ++j) {
            const double freq = std::pow(10000.0, -static_cast<double>(j) / half);
            const double angle = u * freq;
            out[static_cast<std::size_t>(2 * j)] = std::cos(angle);
            out[static_cast<std::size_t>(2 * j) + 1] = std::sin(angle);
        }
    }
}

std::vector<double> NoiseEmbedding::embed(double sigma) const {
    std::vector<double> out(static_cast<std::size_t>(dim));
    embed(sigma, out);
    return out;
}

Network::Network(int x_dim, std::vector<int> hidden_widths, Activation activation,
                 double dropout_rate, NoiseEmbedding embedding)
    : x_dim_(x_dim),
      hidden_widths_(std::move(hidden_widths)),
      activation_(activation),
      dropout_rate_(dropout_rate),
      embedding_(std::move(embedding)),
      uid_(g_net_uid.fetch_add(1)) {
    if (x_dim_ < 1) {
        throw std::invalid_argument("Network: x_dim must be >= 1");
    }
    if (!(dropout_rate_ >= 0.0 && dropout_rate_ < 1.0)) {
        throw std::invalid_argument("Network: dropout_rate must be in [0, 1)");
    }
    for (int w : hidden_widths_) {
        if (w < 1) {
            throw std::invalid_argument("Network: hidden width must be >= 1");
        }
    }

    widths_.push_back(x_dim_ + embedding_.dim);
    for (int w : hidden_widths_) {
        widths_.push_back(w);
    }
    widths_.push_back(x_dim_);

    int offset = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
        weight_offset_.push_back(offset);
        offset += widths_[l] * widths_[l + 1];
        bias_offset_.push_back(offset);
        offset += widths_[l + 1];
    }
    params_.assign(static_cast<std::size_t>(offset), 0.0);
}

void Network::set_params(std::span<const double> p) {
    if (p.size() != params_.size()) {
        throw std::invalid_argument("Network::set_params: expected " + std::to_string(params_.size()) +
                                    " parameters, got " + std::to_string(p.size()));
    }
    std::copy(p.begin(), p.end(), params_.begin());
    ++revision_;
}

void Network::add_to_params(std::span<const double> delta) {
    if (delta.size() != params_.size()) {
        throw std::invalid_argument("Network::add_to_params: size mismatch");
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
        params_[i] += delta[i];
    }
    ++revision_;
}

void Network::init_params(Rng& rng) {
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
        const int fan_in = widths_[l];
        const int fan_out = widths_[l + 1];
        const double std_w = 1.0 / std::sqrt(static_cast<double>(fan_in));
        double* w = params_.data() + weight_offset_[l];
        for (int i = 0; i < fan_in * fan_out; ++i) {
            w[i] = std_w * rng.normal();
        }
        double* b = params_.data() + bias_offset_[l];
        for (int i = 0; i < fan_out; ++i) {
            b[i] = 0.0;
        }
    }
    ++revision_;
}

void Network::forward(std::span<const double> x, double sigma, RunMode mode,
                      const DropoutState& drop, Tape& tape) const {
    if (static_cast<int>(x.size()) != x_dim_) {
        throw std::invalid_argument("Network::forward: input dimension mismatch");
    }
    const int layers = static_cast<int>(widths_.size()) - 1;
    const bool use_dropout = (mode == RunMode::train) && dropout_rate_ > 0.0;

    tape.net_uid = uid_;
    tape.revision = revision_;
    tape.train_mode = (mode == RunMode::train);
    tape.sigma = sigma;
    tape.pre.resize(static_cast<std::size_t>(layers) - 1);
    tape.hidden.resize(static_cast<std::size_t>(layers) - 1);
    tape.masked.resize(static_cast<std::size_t>(layers) - 1);
    tape.mask.resize(use_dropout ? static_cast<std::size_t>(layers) - 1 : 0);

    // input row: x / sqrt(1 + sigma^2), then the embedding
    tape.input.resize(static_cast<std::size_t>(widths_[0]));
    const double inv_scale = 1.0 / std::sqrt(1.0 + sigma * sigma);
    for (int j = 0; j < x_dim_; ++j) {
        tape.input[static_cast<std::size_t>(j)] = x[static_cast<std::size_t>(j)] * inv_scale;
    }
    embedding_.embed(sigma, std::span<double>(tape.input).subspan(static_cast<std::size_t>(x_dim_)));

    // one generator per (seed, step); masks depend only on that pair and the widths
    Rng mask_rng(mix64(drop.seed ^ mix64(drop.step)));
    const double keep_scale = use_dropout ? 1.0 / (1.0 - dropout_rate_) : 1.0;

    const std::vector<double>* cur = &tape.input;
    for (int l = 0; l < layers; ++l) {
        const int in = widths_[static_cast<std::size_t>(l)];
        const int out = widths_[static_cast<std::size_t>(l) + 1];
        const double* w = params_.data() + weight_offset_[static_cast<std::size_t>(l)];
        const double* b = params_.data() + bias_offset_[static_cast<std::size_t>(l)];

        if (l == layers - 1) {
            tape.output.resize(static_cast<std::size_t>(out));
            for (int i = 0; i < out; ++i) {
                double acc = b[i];
                const double* wrow = w + static_cast<std::size_t>(i) * in;
                for (int j = 0; j < in; ++j) {
                    acc += wrow[j] * (*cur)[static_cast<std::size_t>(j)];
                }
                tape.output[static_cast<std::size_t>(i)] = acc;
            }
            break;
        }

        auto& pre = tape.pre[static_cast<std::size_t>(l)];
        auto& hid = tape.hidden[static_cast<std::size_t>(l)];
        auto& msk = tape.masked[static_cast<std::size_t>(l)];
        pre.resize(static_cast<std::size_t>(out));
        hid.resize(static_cast<std::size_t>(out));
        msk.resize(static_cast<std::size_t>(out));
        for (int i = 0; i < out; ++i) {
            double acc = b[i];
            const double* wrow = w + static_cast<std::size_t>(i) * in;
            for (int j = 0; j < in; ++j) {
                acc += wrow[j] * (*cur)[static_cast<std::size_t>(j)];
            }
            pre[static_cast<std::size_t>(i)] = acc;
            hid[static_cast<std::size_t>(i)] = act_value(activation_, acc);
        }
        if (use_dropout) {
            auto& mask = tape.mask[static_cast<std::size_t>(l)];
            mask.resize(static_cast<std::size_t>(out));
            for (int i = 0; i < out; ++i) {
                mask[static_cast<std::size_t>(i)] =
                    (mask_rng.uniform01() >= dropout_rate_) ? keep_scale : 0.0;
                msk[static_cast<std::size_t>(i)] =
                    hid[static_cast<std::size_t>(i)] * mask[static_cast<std::size_t>(i)];
            }
        } else {
            msk = hid;
        }
        cur = &msk;
    }
}

std::vector<double> Network::forward(std::span<const double> x, double sigma, RunMode mode,
                                     const DropoutState& drop) const {
    Tape tape;
    forward(x, sigma, mode, drop, tape);
    return tape.output;
}

void Network::backward(const Tape& tape, std::span<const double> upstream,
                       std::span<double> grad_accum) const {
    if (tape.net_uid != uid_ || tape.revision != revision_) {
        throw std::logic_error("Network::backward: stale tape");
    }
    if (static_cast<int>(upstream.size()) != x_dim_ ||
        grad_accum.size() != params_.size()) {
        throw std::invalid_argument("Network::backward: size mismatch");
    }

    const int layers = static_cast<int>(widths_.size()) - 1;
    std::vector<double> delta(upstream.begin(), upstream.end());
    std::vector<double> next;

    for (int l = layers - 1; l >= 0; --l) {
        const int in = widths_[static_cast<std::size_t>(l)];
        const int out = widths_[static_cast<std::size_t>(l) + 1];
        const double* w = params_.data() + weight_offset_[static_cast<std::size_t>(l)];
        double* gw = grad_accum.data() + weight_offset_[static_cast<std::size_t>(l)];
        double* gb = grad_accum.data() + bias_offset_[static_cast<std::size_t>(l)];
        const std::vector<double>& in_vec =
            (l == 0) ? tape.input : tape.masked[static_cast<std::size_t>(l) - 1];

        for (int i = 0; i < out; ++i) {
            const double d = delta[static_cast<std::size_t>(i)];
            gb[i] += d;
            double* grow = gw + static_cast<std::size_t>(i) * in;
            for (int j = 0; j < in; ++j) {
                grow[j] += d * in_vec[static_cast<std::size_t>(j)];
            }
        }
        if (l == 0) {
            break;
        }

        next.assign(static_cast<std::size_t>(in), 0.0);
        for (int i = 0; i < out; ++i) {
            const double d = delta[static_cast<std::size_t>(i)];
            const double* wrow = w + static_cast<std::size_t>(i) * in;
            for (int j = 0; j < in; ++j) {
                next[static_cast<std::size_t>(j)] += wrow[j] * d;
            }
        }
        const auto& pre = tape.pre[static_cast<std::size_t>(l) - 1];
        const auto& hid = tape.hidden[static_cast<std::size_t>(l) - 1];
        const bool has_mask = !tape.mask.empty();
        for (int j = 0; j < in; ++j) {
            double g = act_deriv(activation_, pre[static_cast<std::size_t>(j)],
                                 hid[static_cast<std::size_t>(j)]);
            if (has_mask) {
                g *= tape.mask[static_cast<std::size_t>(l) - 1][static_cast<std::size_t>(j)];
            }
            next[static_cast<std::size_t>(j)] *= g;
        }
        delta.swap(next);
    }
}

double grad_check(const Network& net, int trials, Rng& rng, double dropout_probe) {
    if (trials < 1) {
        throw std::invalid_argument("grad_check: need trials >= 1");
    }
    Network probe = net;
    if (dropout_probe >= 0.0) {
        probe = Network(net.x_dim(), net.hidden_widths(), net.activation(), dropout_probe,
                        net.embedding());
        std::vector<double> p(net.params().begin(), net.params().end());
        probe.set_params(p);
    }

    const int pcount = probe.param_count();
    std::vector<double> x(static_cast<std::size_t>(probe.x_dim()));
    std::vector<double> upstream(static_cast<std::size_t>(probe.output_dim()));
    std::vector<double> grad(static_cast<std::size_t>(pcount));
    std::vector<double> params(probe.params().begin(), probe.params().end());
    Tape tape;

    const RunMode mode = probe.dropout_rate() > 0.0 ? RunMode::train : RunMode::eval;
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
        rng.fill_normal(x);
        rng.fill_normal(upstream);
        const double sigma = std::exp(rng.uniform(std::log(0.002), std::log(80.0)));
        const DropoutState drop{rng.next_u64(), static_cast<std::uint64_t>(t)};

        std::fill(grad.begin(), grad.end(), 0.0);
        probe.forward(x, sigma, mode, drop, tape);
        probe.backward(tape, upstream, grad);

        auto objective = [&]() {
            const auto out = probe.forward(x, sigma, mode, drop);
            double acc = 0.0;
            for (std::size_t i = 0; i < out.size(); ++i) {
                acc += out[i] * upstream[i];
            }
            return acc;
        };

        for (int probe_idx = 0; probe_idx < 5; ++probe_idx) {
            const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(pcount)));
            const double saved = params[static_cast<std::size_t>(j)];
            const double h = 1e-4 * (1.0 + std::abs(saved));

            params[static_cast<std::size_t>(j)] = saved + h;
            probe.set_params(params);
            const double up = objective();
            params[static_cast<std::size_t>(j)] = saved - h;
            probe.set_params(params);
            const double down = objective();
            params[static_cast<std::size_t>(j)] = saved;
            probe.set_params(params);

            const double fd = (up - down) / (2.0 * h);
            const double a = grad[static_cast<std::size_t>(j)];
            const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-8});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace ctlab
