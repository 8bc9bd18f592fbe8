// SPDX-License-Identifier: Apache-2.0
#include "ctlab/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <thread>

namespace ctlab {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;
constexpr int kChunk = 32;  // fixed batch chunking keeps reductions worker-count independent

NoiseEmbedding build_embedding(const TrainConfig& cfg) {
    if (cfg.embedding_kind == EmbeddingKind::fourier) {
        Rng freq_rng = derive_stream(cfg.seed, 5);
        return NoiseEmbedding::fourier(cfg.embedding_dim, cfg.fourier_scale, freq_rng);
    }
    return NoiseEmbedding::positional(cfg.embedding_dim);
}

Network build_network(const TrainConfig& cfg) {
    Network net(cfg.distribution.dim, cfg.hidden_widths, cfg.activation, cfg.dropout_rate,
                build_embedding(cfg));
    Rng init_rng = derive_stream(cfg.seed, 0);
    net.init_params(init_rng);
    return net;
}

void format_g17(std::string& line, double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    line += buf;
}

}  // namespace

void TrainConfig::validate() const {
    distribution.validate();
    if (!(sigma_min > 0.0) || !(sigma_max > sigma_min) || !(rho >= 1.0) || !(sigma_data > 0.0)) {
        throw std::invalid_argument("TrainConfig: bad sigma ladder parameters");
    }
    if (batch_size < 1 || curriculum.total_steps < 0) {
        throw std::invalid_argument("TrainConfig: bad batch size or step budget");
    }
    if (!(lr > 0.0)) {
        throw std::invalid_argument("TrainConfig: learning rate must be > 0");
    }
    if (!(student_ema >= 0.0 && student_ema < 1.0)) {
        throw std::invalid_argument("TrainConfig: student EMA rate must be in [0, 1)");
    }
    if (metric.kind == MetricKind::pseudo_huber && !(metric.c > 0.0)) {
        throw std::invalid_argument("TrainConfig: pseudo_huber metric needs c > 0");
    }
    if (objective == Objective::cm_exact_score) {
        // every synthetic kind carries an analytic score; reject anything else
        if (distribution.components.empty()) {
            throw std::invalid_argument("TrainConfig: cm_exact_score needs an analytic-score distribution");
        }
    }
}

void ema_update(std::span<double> ema, std::span<const double> params, double rate) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw std::invalid_argument("ema_update: rate must satisfy 0 <= rate < 1");
    }
    if (ema.size() != params.size()) {
        throw std::invalid_argument("ema_update: size mismatch");
    }
    for (std::size_t i = 0; i < ema.size(); ++i) {
        ema[i] = rate * ema[i] + (1.0 - rate) * params[i];
    }
}

void optimizer_step(AdamMoments& moments, std::span<const double> grad, double lr,
                    std::span<double> update) {
    const std::size_t n = grad.size();
    if (moments.m.empty()) {
        moments.m.assign(n, 0.0);
        moments.v.assign(n, 0.0);
    }
    if (moments.m.size() != n || update.size() != n) {
        throw std::invalid_argument("optimizer_step: size mismatch");
    }

    moments.steps += 1;
    const double t = static_cast<double>(moments.steps);
    const double bias1 = 1.0 - std::pow(kBeta1, t);
    const double bias2 = 1.0 - std::pow(kBeta2, t);
    const double rho_inf = 2.0 / (1.0 - kBeta2) - 1.0;
    const double rho_t = rho_inf - 2.0 * t * std::pow(kBeta2, t) / bias2;

    double rect = 0.0;
    const bool rectified = rho_t > 4.0;
    if (rectified) {
        rect = std::sqrt(((rho_t - 4.0) * (rho_t - 2.0) * rho_inf) /
                         ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t));
    }

    for (std::size_t i = 0; i < n; ++i) {
        moments.m[i] = kBeta1 * moments.m[i] + (1.0 - kBeta1) * grad[i];
        moments.v[i] = kBeta2 * moments.v[i] + (1.0 - kBeta2) * grad[i] * grad[i];
        const double m_hat = moments.m[i] / bias1;
        if (rectified) {
            const double v_hat = std::sqrt(moments.v[i] / bias2);
            update[i] = -lr * rect * m_hat / (v_hat + kEps);
        } else {
            update[i] = -lr * m_hat;
        }
    }
}

double legacy_teacher_mu(int s0, double mu0, int n_levels) {
    return std::exp(s0 * std::log(mu0) / n_levels);
}

TrainState::TrainState(const TrainConfig& cfg)
    : student(build_network(cfg), cfg.sigma_min, cfg.sigma_data),
      teacher(student.network(), cfg.sigma_min, cfg.sigma_data),
      data_rng(derive_stream(cfg.seed, 1)),
      noise_rng(derive_stream(cfg.seed, 2)),
      index_rng(derive_stream(cfg.seed, 3)),
      dropout_seed(mix64(cfg.seed ^ mix64(4))) {
    ema_params.assign(student.network().params().begin(), student.network().params().end());
    refresh_schedule(*this, cfg);
}

void refresh_schedule(TrainState& state, const TrainConfig& cfg) {
    const long step = std::min<long>(state.k, std::max<long>(cfg.curriculum.total_steps - 1, 0));
    const int levels = cfg.curriculum.total_steps == 0
                           ? cfg.curriculum.s0 + 1
                           : curriculum_n(cfg.curriculum, step);
    if (levels == state.cached_levels) {
        return;
    }
    state.grid = build_grid(levels, cfg.sigma_min, cfg.sigma_max, cfg.rho,
                            GridSpacing::rho_interpolated);
    state.pmf = index_pmf(cfg.sampler, state.grid);
    state.cached_levels = levels;
}

void ct_pair_inputs(std::span<const double> x, std::span<const double> z, double sigma_lo,
                    double sigma_hi, std::span<double> x_lo, std::span<double> x_hi) {
    for (std::size_t j = 0; j < x.size(); ++j) {
        x_lo[j] = x[j] + sigma_lo * z[j];
        x_hi[j] = x[j] + sigma_hi * z[j];
    }
}

namespace {

// One batch pass shared by the ct and cm objectives; `make_teacher_input`
// fills the teacher's input for one element.
template <typename TeacherInput>
StepEval batched_loss_grad(const TrainState& state, const TrainConfig& cfg, const Batch& x,
                           const Batch& z, const std::vector<int>& idx,
                           TeacherInput&& make_teacher_input) {
    const int batch = x.count;
    const int dim = x.dim;
    if (z.count != batch || z.dim != dim || static_cast<int>(idx.size()) != batch) {
        throw std::invalid_argument("loss_and_grad: batch shape mismatch");
    }
    if (dim != state.student.network().x_dim()) {
        throw std::invalid_argument("loss_and_grad: data dimension does not match the network");
    }
    for (int i : idx) {
        if (i < 1 || i >= state.grid.n) {
            throw std::invalid_argument("loss_and_grad: noise index outside [1, n-1]");
        }
    }

    const int pcount = state.student.network().param_count();
    const int nchunks = (batch + kChunk - 1) / kChunk;
    std::vector<double> partial_loss(static_cast<std::size_t>(nchunks), 0.0);
    std::vector<std::vector<double>> partial_grad(static_cast<std::size_t>(nchunks));

    std::atomic<int> next_chunk{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;

    auto worker = [&]() {
        std::vector<double> x_lo(static_cast<std::size_t>(dim));
        std::vector<double> x_hi(static_cast<std::size_t>(dim));
        std::vector<double> f_s(static_cast<std::size_t>(dim));
        std::vector<double> f_t(static_cast<std::size_t>(dim));
        std::vector<double> g_metric(static_cast<std::size_t>(dim));
        std::vector<double> upstream(static_cast<std::size_t>(dim));
        Tape tape_s, tape_t;

        try {
            for (;;) {
                const int c = next_chunk.fetch_add(1);
                if (c >= nchunks || failed.load()) {
                    break;
                }
                auto& grad = partial_grad[static_cast<std::size_t>(c)];
                grad.assign(static_cast<std::size_t>(pcount), 0.0);
                double loss = 0.0;

                const int lo = c * kChunk;
                const int hi = std::min(batch, lo + kChunk);
                for (int e = lo; e < hi; ++e) {
                    const int i = idx[static_cast<std::size_t>(e)];
                    const double sigma_lo = state.grid.sigma(i);
                    const double sigma_hi = state.grid.sigma(i + 1);
                    const double lambda = weight(cfg.weighting, state.grid, i);
                    const DropoutState drop{state.dropout_seed,
                                            static_cast<std::uint64_t>(state.k) *
                                                    static_cast<std::uint64_t>(batch) +
                                                static_cast<std::uint64_t>(e)};

                    const auto xe = x.row(e);
                    const auto ze = z.row(e);
                    for (int j = 0; j < dim; ++j) {
                        x_hi[static_cast<std::size_t>(j)] = xe[static_cast<std::size_t>(j)] +
                                                            sigma_hi * ze[static_cast<std::size_t>(j)];
                    }
                    make_teacher_input(xe, ze, x_hi, sigma_lo, sigma_hi, x_lo);

                    state.student.forward(x_hi, sigma_hi, RunMode::train, drop, tape_s, f_s);
                    // teacher under stop-gradient, sharing the dropout state
                    state.teacher.forward(x_lo, sigma_lo, RunMode::train, drop, tape_t, f_t);

                    const double d = metric_value_grad(cfg.metric, f_s, f_t, g_metric);
                    loss += lambda * d;
                    const double scale = lambda / batch;
                    for (int j = 0; j < dim; ++j) {
                        upstream[static_cast<std::size_t>(j)] = scale * g_metric[static_cast<std::size_t>(j)];
                    }
                    state.student.backward(tape_s, upstream, grad);
                }
                partial_loss[static_cast<std::size_t>(c)] = loss;
            }
        } catch (...) {
            failed.store(true);
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!error) {
                error = std::current_exception();
            }
        }
    };

    int threads = cfg.threads > 0 ? cfg.threads
                                  : static_cast<int>(std::thread::hardware_concurrency());
    threads = std::clamp(threads, 1, nchunks);
    std::vector<std::thread> pool;
    for (int t = 1; t < threads; ++t) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& th : pool) {
        th.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }

    StepEval eval;
    eval.grad.assign(static_cast<std::size_t>(pcount), 0.0);
    double loss = 0.0;
    for (int c = 0; c < nchunks; ++c) {
        loss += partial_loss[static_cast<std::size_t>(c)];
        const auto& g = partial_grad[static_cast<std::size_t>(c)];
        for (int p = 0; p < pcount; ++p) {
            eval.grad[static_cast<std::size_t>(p)] += g[static_cast<std::size_t>(p)];
        }
    }
    eval.loss = loss / batch;
    return eval;
}

}  // namespace

StepEval ct_loss_and_grad(const TrainState& state, const TrainConfig& cfg, const Batch& x,
                          const Batch& z, const std::vector<int>& idx) {
    return batched_loss_grad(state, cfg, x, z, idx,
                             [](std::span<const double> xe, std::span<const double> ze,
                                std::span<const double> /*x_hi*/, double sigma_lo,
                                double /*sigma_hi*/, std::vector<double>& x_lo) {
                                 for (std::size_t j = 0; j < xe.size(); ++j) {
                                     x_lo[j] = xe[j] + sigma_lo * ze[j];
                                 }
                             });
}

StepEval cm_loss_exact_and_grad(const TrainState& state, const TrainConfig& cfg, const Batch& x,
                                const Batch& z, const std::vector<int>& idx) {
    const SyntheticDistribution& dist = cfg.distribution;
    return batched_loss_grad(
        state, cfg, x, z, idx,
        [&dist](std::span<const double> xe, std::span<const double> /*ze*/,
                std::span<const double> x_hi, double sigma_lo, double sigma_hi,
                std::vector<double>& x_lo) {
            // one reverse Euler step along the probability flow
            perturbed_score(dist, x_hi, sigma_hi, x_lo);
            const double coeff = (sigma_lo - sigma_hi) * sigma_hi;
            for (std::size_t j = 0; j < xe.size(); ++j) {
                x_lo[j] = x_hi[j] - coeff * x_lo[j];
            }
        });
}

double ct_loss_generic(const ConsistencyFn& student, const ConsistencyFn& teacher, const Batch& x,
                       const Batch& z, const std::vector<int>& idx, const NoiseGrid& grid,
                       const Metric& metric, WeightingKind weighting) {
    const int batch = x.count;
    const int dim = x.dim;
    if (z.count != batch || z.dim != dim || static_cast<int>(idx.size()) != batch) {
        throw std::invalid_argument("ct_loss_generic: batch shape mismatch");
    }
    std::vector<double> x_lo(static_cast<std::size_t>(dim)), x_hi(static_cast<std::size_t>(dim));
    std::vector<double> f_s(static_cast<std::size_t>(dim)), f_t(static_cast<std::size_t>(dim));
    std::vector<double> scratch(static_cast<std::size_t>(dim));
    double loss = 0.0;
    for (int e = 0; e < batch; ++e) {
        const int i = idx[static_cast<std::size_t>(e)];
        const double sigma_lo = grid.sigma(i);
        const double sigma_hi = grid.sigma(i + 1);
        ct_pair_inputs(x.row(e), z.row(e), sigma_lo, sigma_hi, x_lo, x_hi);
        student(x_hi, sigma_hi, f_s);
        teacher(x_lo, sigma_lo, f_t);
        loss += weight(weighting, grid, i) * metric_value_grad(metric, f_s, f_t, scratch);
    }
    return loss / batch;
}

Checkpoint make_checkpoint(const TrainState& state, const TrainConfig& cfg) {
    const Network& net = state.student.network();
    Checkpoint c;
    c.x_dim = net.x_dim();
    c.hidden_widths = net.hidden_widths();
    c.activation = net.activation();
    c.dropout_rate = net.dropout_rate();
    c.embedding_kind = net.embedding().kind;
    c.embedding_dim = net.embedding().dim;
    c.fourier_scale = net.embedding().scale;
    c.frequencies = net.embedding().frequencies;
    c.sigma_min = cfg.sigma_min;
    c.sigma_max = cfg.sigma_max;
    c.rho = cfg.rho;
    c.sigma_data = cfg.sigma_data;
    c.master_seed = cfg.seed;
    c.steps_completed = static_cast<std::uint64_t>(state.k);
    c.params.assign(net.params().begin(), net.params().end());
    c.ema_params = state.ema_params;
    c.teacher_params.assign(state.teacher.network().params().begin(),
                            state.teacher.network().params().end());
    c.adam_m = state.moments.m;
    c.adam_v = state.moments.v;
    c.adam_steps = state.moments.steps;
    if (c.adam_m.empty()) {
        c.adam_m.assign(c.params.size(), 0.0);
        c.adam_v.assign(c.params.size(), 0.0);
    }
    return c;
}

TrainReport train(const TrainConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    std::filesystem::create_directories(out_dir);

    TrainState state(cfg);
    const long total = cfg.curriculum.total_steps;

    std::ofstream log(out_dir / "train_log.csv", std::ios::trunc);
    if (!log) {
        throw std::runtime_error("train: cannot open log file in " + out_dir.string());
    }
    log << "step,n_levels,loss,update_norm,lr\n";

    TrainReport report;
    report.loss_curve.reserve(static_cast<std::size_t>(total));
    report.update_norm_curve.reserve(static_cast<std::size_t>(total));

    const int pcount = state.student.network().param_count();
    std::vector<double> update(static_cast<std::size_t>(pcount));
    Batch z(cfg.batch_size, cfg.distribution.dim);
    std::vector<int> idx(static_cast<std::size_t>(cfg.batch_size));

    for (state.k = 0; state.k < total; ++state.k) {
        refresh_schedule(state, cfg);

        Batch x = sample_data(cfg.distribution, cfg.batch_size, state.data_rng);
        state.noise_rng.fill_normal(z.values);
        for (int e = 0; e < cfg.batch_size; ++e) {
            idx[static_cast<std::size_t>(e)] = sample_from_pmf(state.pmf, state.index_rng.uniform01());
        }

        const StepEval eval = (cfg.objective == Objective::ct)
                                  ? ct_loss_and_grad(state, cfg, x, z, idx)
                                  : cm_loss_exact_and_grad(state, cfg, x, z, idx);
        if (!std::isfinite(eval.loss)) {
            const auto snapshot = out_dir / "abort_snapshot.ckpt";
            make_checkpoint(state, cfg).save(snapshot);
            throw TrainAbort("train: non-finite loss at step " + std::to_string(state.k) +
                                 ", snapshot written to " + snapshot.string(),
                             snapshot);
        }

        optimizer_step(state.moments, eval.grad, cfg.lr, update);
        state.student.network().add_to_params(update);

        double norm_sq = 0.0;
        for (double u : update) {
            norm_sq += u * u;
        }
        const double update_norm = std::sqrt(norm_sq);

        ema_update(state.ema_params, state.student.network().params(), cfg.student_ema);
        if (cfg.teacher_rule == TeacherRule::zero_ema) {
            state.teacher.network().set_params(state.student.network().params());
        } else {
            const double mu = legacy_teacher_mu(cfg.curriculum.s0, cfg.teacher_mu0, state.cached_levels);
            std::vector<double> tp(state.teacher.network().params().begin(),
                                   state.teacher.network().params().end());
            ema_update(tp, state.student.network().params(), mu);
            state.teacher.network().set_params(tp);
        }

        std::string line;
        line += std::to_string(state.k);
        line += ',';
        line += std::to_string(state.cached_levels);
        line += ',';
        format_g17(line, eval.loss);
        line += ',';
        format_g17(line, update_norm);
        line += ',';
        format_g17(line, cfg.lr);
        line += '\n';
        log << line;

        report.loss_curve.push_back(eval.loss);
        report.update_norm_curve.push_back(update_norm);
    }

    report.checkpoint_path = out_dir / "checkpoint.ckpt";
    make_checkpoint(state, cfg).save(report.checkpoint_path);
    return report;
}

}  // namespace ctlab
