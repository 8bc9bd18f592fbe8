// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <vector>

#include "ctlab/batch.hpp"
#include "ctlab/checkpoint.hpp"
#include "ctlab/consistency.hpp"
#include "ctlab/metrics.hpp"
#include "ctlab/schedules.hpp"
#include "ctlab/synthetic.hpp"

namespace ctlab {

enum class TeacherRule { zero_ema, ema };
enum class Objective { ct, cm_exact_score };

struct TrainConfig {
    SyntheticDistribution distribution = SyntheticDistribution::delta({0.0});

    double sigma_min = 0.002;
    double sigma_max = 80.0;
    double rho = 7.0;
    double sigma_data = 0.5;

    Curriculum curriculum;        // curriculum.total_steps is the step budget K
    NoiseIndexSampler sampler;
    WeightingKind weighting = WeightingKind::inverse_gap;
    Metric metric{MetricKind::pseudo_huber, 0.0};

    std::vector<int> hidden_widths{128, 128, 128};
    Activation activation = Activation::tanh_act;
    EmbeddingKind embedding_kind = EmbeddingKind::fourier;
    int embedding_dim = 32;
    double fourier_scale = 0.02;
    double dropout_rate = 0.3;

    int batch_size = 256;
    double lr = 1e-4;
    double student_ema = 0.9999;
    TeacherRule teacher_rule = TeacherRule::zero_ema;
    double teacher_mu0 = 0.9;    // legacy ema rule only
    Objective objective = Objective::ct;
    std::uint64_t seed = 1;
    int threads = 0;             // 0 = hardware concurrency; results do not depend on it

    void validate() const;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct AdamMoments {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t steps = 0;
};

// ema <- rate * ema + (1 - rate) * params
void ema_update(std::span<double> ema, std::span<const double> params, double rate);

// Rectified Adam update (beta1 0.9, beta2 0.999, eps 1e-8). Writes the
// parameter delta into `update`; falls back to the plain momentum form while
// the rectification term is undefined in the first few steps.
void optimizer_step(AdamMoments& moments, std::span<const double> grad, double lr,
                    std::span<double> update);

// Legacy curriculum-coupled teacher decay mu(k) = exp(s0 * log(mu0) / N(k)).
double legacy_teacher_mu(int s0, double mu0, int n_levels);

// Mutable training state: student/teacher parameter sets, student EMA,
// optimizer moments, step counter, cached schedule, and the rng streams.
struct TrainState {
    explicit TrainState(const TrainConfig& cfg);

    ConsistencyModel student;
    ConsistencyModel teacher;
    std::vector<double> ema_params;
    AdamMoments moments;
    long k = 0;

    NoiseGrid grid;
    std::vector<double> pmf;    // over the current grid
    int cached_levels = -1;

    Rng data_rng;
    Rng noise_rng;
    Rng index_rng;
    std::uint64_t dropout_seed = 0;
};

// Rebuilds grid and index PMF when the curriculum has moved to a new N(k).
void refresh_schedule(TrainState& state, const TrainConfig& cfg);

struct StepEval {
    double loss = 0.0;
    std::vector<double> grad;
};

// Builds the two perturbed inputs sharing one gaussian draw:
// x_lo = x + sigma_lo z and x_hi = x + sigma_hi z.
void ct_pair_inputs(std::span<const double> x, std::span<const double> z, double sigma_lo,
                    double sigma_hi, std::span<double> x_lo, std::span<double> x_hi);

// Consistency training objective: mean over the batch of
// lambda(sigma_i) d(f_student(x + sigma_{i+1} z, sigma_{i+1}), f_teacher(x + sigma_i z, sigma_i)),
// gradient with respect to the student parameters only. The teacher pass
// reuses the student's per-element DropoutState.
StepEval ct_loss_and_grad(const TrainState& state, const TrainConfig& cfg, const Batch& x,
                          const Batch& z, const std::vector<int>& idx);

// Consistency matching with the exact synthetic score: the teacher input is
// one reverse Euler step x_hi - (sigma_i - sigma_{i+1}) sigma_{i+1} score(x_hi).
StepEval cm_loss_exact_and_grad(const TrainState& state, const TrainConfig& cfg, const Batch& x,
                                const Batch& z, const std::vector<int>& idx);

// Loss-only CT objective over arbitrary consistency maps; lets closed-form
// model families stand in for the network pair.
double ct_loss_generic(const ConsistencyFn& student, const ConsistencyFn& teacher, const Batch& x,
                       const Batch& z, const std::vector<int>& idx, const NoiseGrid& grid,
                       const Metric& metric, WeightingKind weighting);

struct TrainReport {
    std::filesystem::path checkpoint_path;
    std::vector<double> loss_curve;
    std::vector<double> update_norm_curve;
    std::map<std::string, double> eval_metrics;  // filled by evaluation drivers
};

// Thrown when the loss stops being finite; the diagnostic snapshot named in
// the message has already been written.
class TrainAbort : public std::runtime_error {
public:
    TrainAbort(const std::string& what, std::filesystem::path snapshot)
        : std::runtime_error(what), snapshot_path(std::move(snapshot)) {}
    std::filesystem::path snapshot_path;
};

Checkpoint make_checkpoint(const TrainState& state, const TrainConfig& cfg);

// Runs the full loop: draw (x, z, i), apply the objective, step the
// optimizer, update EMA and teacher, log (step, N, loss, update_norm, lr)
// to train_log.csv and write checkpoint.ckpt under out_dir.
TrainReport train(const TrainConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace ctlab
