// SPDX-License-Identifier: Apache-2.0
//
// Command line for the consistency-training lab: train / sample / eval /
// schedule-table / prop1 / gradcheck.

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ctlab/checkpoint.hpp"
#include "ctlab/config.hpp"
#include "ctlab/consistency.hpp"
#include "ctlab/eval.hpp"
#include "ctlab/metrics.hpp"
#include "ctlab/net.hpp"
#include "ctlab/prop1.hpp"
#include "ctlab/schedules.hpp"
#include "ctlab/synthetic.hpp"
#include "ctlab/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace ctlab;

namespace {

std::string g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Single-flight guard: one run per output directory at a time.
class DirLock {
public:
    explicit DirLock(const fs::path& dir) : path_(dir / ".ctlab.lock") {
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0) {
            throw std::runtime_error("output directory is locked (found " + path_.string() +
                                     "); is another run active?");
        }
    }
    ~DirLock() {
        if (fd_ >= 0) {
            ::close(fd_);
            ::unlink(path_.c_str());
        }
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    fs::path path_;
    int fd_ = -1;
};

// output.dir from the config, re-rooted by CTLAB_OUTPUT_ROOT when set
fs::path resolve_output_dir(const std::string& configured) {
    fs::path dir(configured);
    const char* root = std::getenv("CTLAB_OUTPUT_ROOT");
    if (root != nullptr && *root != '\0' && dir.is_relative()) {
        dir = fs::path(root) / dir;
    }
    return dir;
}

void write_sample_csv(const fs::path& path, const Batch& batch) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    for (int s = 0; s < batch.count; ++s) {
        const auto row = batch.row(s);
        for (int j = 0; j < batch.dim; ++j) {
            if (j > 0) {
                out << ',';
            }
            out << g17(row[static_cast<std::size_t>(j)]);
        }
        out << '\n';
    }
}

Batch read_sample_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open sample file " + path.string());
    }
    std::vector<double> values;
    int dim = -1;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::istringstream ls(line);
        std::string cell;
        int cols = 0;
        while (std::getline(ls, cell, ',')) {
            values.push_back(std::stod(cell));
            ++cols;
        }
        if (dim < 0) {
            dim = cols;
        } else if (cols != dim) {
            throw std::runtime_error("ragged sample file " + path.string());
        }
    }
    if (dim <= 0 || values.empty()) {
        throw std::runtime_error("empty sample file " + path.string());
    }
    Batch b(static_cast<int>(values.size()) / dim, dim);
    b.values = std::move(values);
    return b;
}

json moments_json(const std::vector<AxisMoments>& m) {
    json arr = json::array();
    for (const auto& a : m) {
        arr.push_back({{"mean", a.mean}, {"stddev", a.stddev}});
    }
    return arr;
}

EvalReport run_eval(const ExperimentConfig& cfg, const Batch& samples, std::uint64_t seed) {
    if (samples.dim != cfg.train.distribution.dim) {
        throw std::runtime_error("sample dimensionality does not match the configured distribution");
    }
    Rng truth_rng = derive_stream(seed, 101);
    const Batch truth = sample_data(cfg.train.distribution, cfg.eval.samples, truth_rng);

    EvalReport report;
    report.sample_count = samples.count;
    report.seed = seed;
    report.note =
        "sliced_wasserstein and energy_distance are the desk-scale sample-quality "
        "metrics of this lab; no pretrained feature network is involved";
    Rng proj_rng = derive_stream(seed, 102);
    if (cfg.eval.metric != EvalSettings::Kind::energy) {
        report.sliced_wasserstein_distance =
            sliced_wasserstein(samples, truth, cfg.eval.projections, proj_rng);
    }
    if (cfg.eval.metric != EvalSettings::Kind::sliced_wasserstein) {
        report.energy = energy_distance(samples, truth);
    }
    report.sample_moments = per_axis_moments(samples);
    report.reference_moments = per_axis_moments(truth);
    return report;
}

json eval_report_json(const EvalReport& r) {
    json j;
    j["note"] = r.note;
    j["sample_count"] = r.sample_count;
    j["seed"] = r.seed;
    if (r.sliced_wasserstein_distance >= 0.0) {
        j["sliced_wasserstein"] = r.sliced_wasserstein_distance;
    }
    if (r.energy >= -1e-300 && r.energy != -1.0) {
        j["energy_distance"] = r.energy;
    }
    j["sample_moments"] = moments_json(r.sample_moments);
    j["reference_moments"] = moments_json(r.reference_moments);
    return j;
}

// ---- subcommands -----------------------------------------------------------

int cmd_train(const std::string& config_path) {
    const ExperimentConfig cfg = ExperimentConfig::parse_file(config_path);
    const fs::path out_dir = resolve_output_dir(cfg.output_dir);
    fs::create_directories(out_dir);
    DirLock lock(out_dir);

    {
        std::ofstream rendered(out_dir / "config.cfg", std::ios::trunc);
        rendered << cfg.render();
    }

    TrainReport report = train(cfg.train, out_dir);

    // quick quality readout against fresh truth draws
    const Checkpoint ckpt = Checkpoint::load(report.checkpoint_path);
    ConsistencyModel model(ckpt.make_network(true), ckpt.sigma_min, ckpt.sigma_data);
    Rng sample_rng = derive_stream(cfg.train.seed, 100);
    const Batch samples = model.one_step_sample(cfg.eval.samples, ckpt.sigma_max, sample_rng);
    const EvalReport eval = run_eval(cfg, samples, cfg.train.seed);
    if (eval.sliced_wasserstein_distance >= 0.0) {
        report.eval_metrics["sliced_wasserstein"] = eval.sliced_wasserstein_distance;
    }
    if (eval.energy != -1.0) {
        report.eval_metrics["energy_distance"] = eval.energy;
    }

    json j;
    j["checkpoint"] = report.checkpoint_path.string();
    j["steps"] = report.loss_curve.size();
    j["final_loss"] = report.loss_curve.empty() ? 0.0 : report.loss_curve.back();
    j["eval"] = eval_report_json(eval);
    std::ofstream(out_dir / "train_report.json", std::ios::trunc) << j.dump(2) << "\n";

    std::cout << "checkpoint: " << report.checkpoint_path.string() << "\n";
    for (const auto& [k, v] : report.eval_metrics) {
        std::cout << k << ": " << g17(v) << "\n";
    }
    return 0;
}

int cmd_sample(const std::string& ckpt_path, const std::string& out_path, int count,
               std::uint64_t seed, const std::string& indices_str, const std::string& sigmas_str,
               int grid_n, bool raw) {
    const Checkpoint ckpt = Checkpoint::load(ckpt_path);
    ConsistencyModel model(ckpt.make_network(!raw), ckpt.sigma_min, ckpt.sigma_data);

    std::vector<int> indices;
    NoiseGrid grid;
    if (!indices_str.empty() || !sigmas_str.empty()) {
        grid = build_grid(grid_n, ckpt.sigma_min, ckpt.sigma_max, ckpt.rho);
    }
    if (!indices_str.empty()) {
        std::istringstream in(indices_str);
        std::string tok;
        while (std::getline(in, tok, ',')) {
            indices.push_back(std::stoi(tok));
        }
    } else if (!sigmas_str.empty()) {
        // helper: snap each requested sigma to the nearest grid index
        indices.push_back(1);
        std::istringstream in(sigmas_str);
        std::string tok;
        while (std::getline(in, tok, ',')) {
            const double target = std::stod(tok);
            int best = 1;
            double best_gap = std::abs(grid.sigma(1) - target);
            for (int i = 2; i <= grid.n; ++i) {
                const double gap = std::abs(grid.sigma(i) - target);
                if (gap < best_gap) {
                    best = i;
                    best_gap = gap;
                }
            }
            indices.push_back(best);
        }
        indices.push_back(grid.n);
        std::sort(indices.begin(), indices.end());
        indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
    }

    Rng rng(seed);
    const Batch samples = indices.empty()
                              ? model.one_step_sample(count, ckpt.sigma_max, rng)
                              : model.multistep_sample(grid, indices, count, rng);
    write_sample_csv(out_path, samples);

    json side;
    side["seed"] = seed;
    side["count"] = count;
    side["ema"] = !raw;
    side["indices"] = indices.empty() ? json::array({1, grid_n}) : json(indices);
    side["one_step"] = indices.empty();
    side["checkpoint"] = ckpt_path;
    side["checkpoint_hash"] = file_hash_hex(ckpt_path);
    std::ofstream(out_path + ".json", std::ios::trunc) << side.dump(2) << "\n";

    std::cout << "wrote " << samples.count << " samples to " << out_path << "\n";
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& samples_path,
             const std::string& out_path, std::uint64_t seed) {
    const ExperimentConfig cfg = ExperimentConfig::parse_file(config_path);
    const Batch samples = read_sample_csv(samples_path);
    const EvalReport report = run_eval(cfg, samples, seed);

    const json j = eval_report_json(report);
    const std::string out = out_path.empty() ? samples_path + ".eval.json" : out_path;
    std::ofstream(out, std::ios::trunc) << j.dump(2) << "\n";

    if (report.sliced_wasserstein_distance >= 0.0) {
        std::cout << "sliced_wasserstein: " << g17(report.sliced_wasserstein_distance) << "\n";
    }
    if (report.energy != -1.0) {
        std::cout << "energy_distance: " << g17(report.energy) << "\n";
    }
    std::cout << "report: " << out << "\n";
    return 0;
}

int cmd_schedule_table(const std::string& curriculum_shape, int s0, int s1, long k_total,
                       int grid_n, double sigma_min, double sigma_max, double rho,
                       const std::string& sampler_kind, double p_mean, double p_std,
                       const std::string& weighting_kind, const std::string& out_path) {
    std::ostringstream csv;
    if (!curriculum_shape.empty()) {
        Curriculum c;
        c.s0 = s0;
        c.s1 = s1;
        c.total_steps = k_total;
        if (curriculum_shape == "constant") {
            c.shape = CurriculumShape::constant;
        } else if (curriculum_shape == "sqrt_original") {
            c.shape = CurriculumShape::sqrt_original;
        } else if (curriculum_shape == "linear") {
            c.shape = CurriculumShape::linear;
        } else if (curriculum_shape == "square") {
            c.shape = CurriculumShape::square;
        } else if (curriculum_shape == "cosine") {
            c.shape = CurriculumShape::cosine;
        } else if (curriculum_shape == "exponential") {
            c.shape = CurriculumShape::exponential;
        } else {
            throw std::runtime_error("unknown curriculum shape: " + curriculum_shape);
        }
        csv << "k,n_levels\n";
        for (long k = 0; k < c.total_steps; ++k) {
            csv << k << ',' << curriculum_n(c, k) << '\n';
        }
    } else {
        const NoiseGrid grid = build_grid(grid_n, sigma_min, sigma_max, rho);
        NoiseIndexSampler sampler;
        sampler.kind = (sampler_kind == "uniform") ? IndexSamplerKind::uniform
                                                   : IndexSamplerKind::lognormal;
        sampler.p_mean = p_mean;
        sampler.p_std = p_std;
        const WeightingKind wk =
            (weighting_kind == "uniform") ? WeightingKind::uniform : WeightingKind::inverse_gap;
        const auto pmf = index_pmf(sampler, grid);
        csv << "i,sigma_i,pmf_i,weight_i\n";
        for (int i = 1; i <= grid.n; ++i) {
            csv << i << ',' << g17(grid.sigma(i));
            if (i < grid.n) {
                csv << ',' << g17(pmf[static_cast<std::size_t>(i) - 1]) << ','
                    << g17(weight(wk, grid, i));
            } else {
                csv << ",,";
            }
            csv << '\n';
        }
    }

    if (out_path.empty()) {
        std::cout << csv.str();
    } else {
        std::ofstream(out_path, std::ios::trunc) << csv.str();
        std::cout << "wrote " << out_path << "\n";
    }
    return 0;
}

int cmd_prop1(double xi, double theta, double theta_minus, const std::string& csv_path) {
    const double sigma_min = 0.002;
    const double sigma_max = 80.0;
    const long quad_points = 1000000;
    const std::vector<long> sizes{1000, 10000, 100000, 1000000};

    struct Row {
        std::string claim;
        double computed;
        std::string reference;
        bool pass;
    };
    std::vector<Row> rows;

    // claim 1: loss converges to its limit, first order in the grid spacing
    const double limit = toy_loss_limit(theta, theta_minus, sigma_min, sigma_max, quad_points);
    std::vector<double> loss_errors;
    std::vector<double> losses;
    for (long n : sizes) {
        ToySpec spec{xi, theta, theta_minus, sigma_min, sigma_max, n};
        const double loss = toy_loss(spec);
        losses.push_back(loss);
        loss_errors.push_back(std::abs(loss - limit));
    }
    const double loss_order = fit_order(sizes, loss_errors, sigma_min, sigma_max);
    rows.push_back({"loss_convergence_order", loss_order, ">= 0.9", loss_order >= 0.9});

    // claim 2: scaled gradient at theta_minus = theta against Simpson quadrature
    ToySpec diag{xi, theta, theta, sigma_min, sigma_max, 1000000};
    const double grad_n = toy_scaled_grad(diag);
    const double grad_ref = toy_scaled_grad_limit(theta, xi, sigma_min, sigma_max, quad_points);
    const double grad_gap = std::abs(grad_n - grad_ref);
    rows.push_back({"scaled_grad_vs_quadrature", grad_gap, "<= 1e-4", grad_gap <= 1e-4});

    // claims 3 and 4: signed divergence of the scaled gradient
    std::vector<double> pos, neg;
    for (long n : sizes) {
        ToySpec below{xi, theta, theta - 0.2, sigma_min, sigma_max, n};
        ToySpec above{xi, theta, theta + 0.2, sigma_min, sigma_max, n};
        pos.push_back(toy_scaled_grad(below));
        neg.push_back(toy_scaled_grad(above));
    }
    bool pos_ok = pos.front() > 0.0;
    bool neg_ok = neg.front() < 0.0;
    for (std::size_t j = 1; j < sizes.size(); ++j) {
        pos_ok = pos_ok && pos[j] > pos[j - 1];
        neg_ok = neg_ok && neg[j] < neg[j - 1];
    }
    pos_ok = pos_ok && pos.back() / pos.front() > 100.0;
    neg_ok = neg_ok && neg.back() / neg.front() > 100.0;
    rows.push_back({"divergence_teacher_below", pos.back(), "-> +inf", pos_ok});
    rows.push_back({"divergence_teacher_above", neg.back(), "-> -inf", neg_ok});

    std::printf("%-28s %-16s %-12s %s\n", "claim", "computed", "reference", "status");
    bool all = true;
    for (const auto& r : rows) {
        std::printf("%-28s %-16.6g %-12s %s\n", r.claim.c_str(), r.computed, r.reference.c_str(),
                    r.pass ? "PASS" : "FAIL");
        all = all && r.pass;
    }

    if (!csv_path.empty()) {
        std::ofstream csv(csv_path, std::ios::trunc);
        csv << "n,delta_sigma,loss,loss_err,scaled_grad_pos,scaled_grad_neg\n";
        for (std::size_t j = 0; j < sizes.size(); ++j) {
            csv << sizes[j] << ',' << g17((sigma_max - sigma_min) / (sizes[j] - 1)) << ','
                << g17(losses[j]) << ',' << g17(loss_errors[j]) << ',' << g17(pos[j]) << ','
                << g17(neg[j]) << '\n';
        }
        std::cout << "wrote " << csv_path << "\n";
    }
    return all ? 0 : 1;
}

int cmd_gradcheck(int trials, double dropout, std::uint64_t seed, int dim) {
    Rng freq_rng = derive_stream(seed, 5);
    const NoiseEmbedding emb = NoiseEmbedding::fourier(32, 0.02, freq_rng);
    Network net(dim, {128, 128, 128}, Activation::tanh_act, 0.0, emb);
    Rng init_rng = derive_stream(seed, 0);
    net.init_params(init_rng);

    Rng check_rng = derive_stream(seed, 7);
    const double err_plain = grad_check(net, trials, check_rng);
    const double err_dropout = grad_check(net, trials, check_rng, dropout);
    std::printf("gradcheck: max relative error %.3g (no dropout), %.3g (dropout %.2g)\n", err_plain,
                err_dropout, dropout);
    return (err_plain < 1e-4 && err_dropout < 1e-4) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"consistency-training lab"};
    app.require_subcommand(1);

    // train
    auto* train_cmd = app.add_subcommand("train", "run a training experiment from a config file");
    std::string train_config;
    train_cmd->add_option("--config", train_config, "experiment config file")->required();

    // sample
    auto* sample_cmd = app.add_subcommand("sample", "draw samples from a checkpoint");
    std::string sp_ckpt, sp_out, sp_indices, sp_sigmas;
    int sp_count = 1000;
    int sp_grid_n = 1281;
    std::uint64_t sp_seed = 1;
    bool sp_raw = false;
    sample_cmd->add_option("--checkpoint", sp_ckpt, "checkpoint file")->required();
    sample_cmd->add_option("--out", sp_out, "output CSV path")->required();
    sample_cmd->add_option("--count", sp_count, "number of samples");
    sample_cmd->add_option("--seed", sp_seed, "sampling seed");
    sample_cmd->add_option("--indices", sp_indices, "comma-separated multistep indices (1-based)");
    sample_cmd->add_option("--at-sigmas", sp_sigmas,
                           "comma-separated intermediate noise levels; snapped to the grid");
    sample_cmd->add_option("--grid-n", sp_grid_n, "grid size for multistep indices");
    sample_cmd->add_flag("--raw", sp_raw, "sample with raw weights instead of the student EMA");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "score a sample file against the configured data");
    std::string ev_config, ev_samples, ev_out;
    std::uint64_t ev_seed = 1;
    eval_cmd->add_option("--config", ev_config, "experiment config file")->required();
    eval_cmd->add_option("--samples", ev_samples, "sample CSV to score")->required();
    eval_cmd->add_option("--out", ev_out, "report JSON path");
    eval_cmd->add_option("--seed", ev_seed, "seed for truth draws and projections");

    // schedule-table
    auto* sched_cmd = app.add_subcommand("schedule-table", "emit curriculum or grid tables as CSV");
    std::string sc_curriculum, sc_sampler = "lognormal", sc_weighting = "inverse_gap", sc_out;
    int sc_s0 = 10, sc_s1 = 1280, sc_grid_n = 0;
    long sc_k = 400000;
    double sc_smin = 0.002, sc_smax = 80.0, sc_rho = 7.0, sc_pmean = -1.1, sc_pstd = 2.0;
    sched_cmd->add_option("--curriculum", sc_curriculum,
                          "curriculum shape; emits (k, N(k)) for all k");
    sched_cmd->add_option("--s0", sc_s0, "initial step count");
    sched_cmd->add_option("--s1", sc_s1, "final step count");
    sched_cmd->add_option("--K", sc_k, "total training iterations");
    sched_cmd->add_option("--grid", sc_grid_n, "grid size; emits (i, sigma_i, pmf_i, weight_i)");
    sched_cmd->add_option("--sigma-min", sc_smin, "lowest noise level");
    sched_cmd->add_option("--sigma-max", sc_smax, "highest noise level");
    sched_cmd->add_option("--rho", sc_rho, "grid curvature exponent");
    sched_cmd->add_option("--sampler", sc_sampler, "uniform or lognormal");
    sched_cmd->add_option("--p-mean", sc_pmean, "lognormal mean of log sigma");
    sched_cmd->add_option("--p-std", sc_pstd, "lognormal std of log sigma");
    sched_cmd->add_option("--weighting", sc_weighting, "uniform or inverse_gap");
    sched_cmd->add_option("--out", sc_out, "write CSV here instead of stdout");

    // prop1
    auto* prop_cmd = app.add_subcommand("prop1", "check the scalar toy objective's limit claims");
    std::string pr_preset = "paper-defaults", pr_csv;
    double pr_xi = 1.0, pr_theta = 0.5, pr_theta_minus = 0.3;
    prop_cmd->add_option("--preset", pr_preset, "parameter preset (paper-defaults)");
    prop_cmd->add_option("--xi", pr_xi, "data location");
    prop_cmd->add_option("--theta", pr_theta, "student parameter");
    prop_cmd->add_option("--theta-minus", pr_theta_minus, "teacher parameter");
    prop_cmd->add_option("--csv", pr_csv, "write convergence curves here");

    // gradcheck
    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference audit of the network gradients");
    int gc_trials = 50, gc_dim = 2;
    double gc_dropout = 0.3;
    std::uint64_t gc_seed = 1;
    grad_cmd->add_option("--trials", gc_trials, "number of randomized trials");
    grad_cmd->add_option("--dropout", gc_dropout, "dropout rate for the masked pass");
    grad_cmd->add_option("--seed", gc_seed, "seed");
    grad_cmd->add_option("--dim", gc_dim, "data dimensionality");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd) {
            return cmd_train(train_config);
        }
        if (*sample_cmd) {
            return cmd_sample(sp_ckpt, sp_out, sp_count, sp_seed, sp_indices, sp_sigmas, sp_grid_n,
                              sp_raw);
        }
        if (*eval_cmd) {
            return cmd_eval(ev_config, ev_samples, ev_out, ev_seed);
        }
        if (*sched_cmd) {
            if (sc_curriculum.empty() && sc_grid_n <= 0) {
                std::cerr << "schedule-table: pass --curriculum SHAPE or --grid N\n";
                return 2;
            }
            return cmd_schedule_table(sc_curriculum, sc_s0, sc_s1, sc_k, sc_grid_n, sc_smin, sc_smax,
                                      sc_rho, sc_sampler, sc_pmean, sc_pstd, sc_weighting, sc_out);
        }
        if (*prop_cmd) {
            if (pr_preset != "paper-defaults") {
                std::cerr << "prop1: unknown preset " << pr_preset << "\n";
                return 2;
            }
            return cmd_prop1(pr_xi, pr_theta, pr_theta_minus, pr_csv);
        }
        if (*grad_cmd) {
            return cmd_gradcheck(gc_trials, gc_dropout, gc_seed, gc_dim);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
