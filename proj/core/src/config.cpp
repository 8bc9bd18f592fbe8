// SPDX-License-Identifier: Apache-2.0
#include "ctlab/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "ctlab/metrics.hpp"

namespace ctlab {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
        return "";
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::string g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

[[noreturn]] void fail(const std::string& msg) {
    throw std::invalid_argument("config: " + msg);
}

double to_double(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const double d = std::strtod(v.c_str(), &end);
    if (end != v.c_str() + v.size() || v.empty()) {
        fail("bad number for " + key + ": '" + v + "'");
    }
    return d;
}

long to_long(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const long n = std::strtol(v.c_str(), &end, 10);
    if (end != v.c_str() + v.size() || v.empty()) {
        fail("bad integer for " + key + ": '" + v + "'");
    }
    return n;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const unsigned long long n = std::strtoull(v.c_str(), &end, 10);
    if (end != v.c_str() + v.size() || v.empty()) {
        fail("bad integer for " + key + ": '" + v + "'");
    }
    return n;
}

std::vector<double> to_doubles(const std::string& key, const std::string& v) {
    std::istringstream in(v);
    std::vector<double> out;
    std::string tok;
    while (in >> tok) {
        out.push_back(to_double(key, tok));
    }
    if (out.empty()) {
        fail("empty vector for " + key);
    }
    return out;
}

std::vector<int> to_ints(const std::string& key, const std::string& v) {
    std::istringstream in(v);
    std::vector<int> out;
    std::string tok;
    while (in >> tok) {
        out.push_back(static_cast<int>(to_long(key, tok)));
    }
    return out;
}

// enum <-> string tables
const std::map<std::string, DistKind> kDistKinds{{"delta", DistKind::delta},
                                                 {"gaussian", DistKind::gaussian},
                                                 {"gaussian_mixture", DistKind::gaussian_mixture}};
const std::map<std::string, CurriculumShape> kShapes{
    {"constant", CurriculumShape::constant},   {"sqrt_original", CurriculumShape::sqrt_original},
    {"linear", CurriculumShape::linear},       {"square", CurriculumShape::square},
    {"cosine", CurriculumShape::cosine},       {"exponential", CurriculumShape::exponential}};
const std::map<std::string, IndexSamplerKind> kSamplers{{"uniform", IndexSamplerKind::uniform},
                                                        {"lognormal", IndexSamplerKind::lognormal}};
const std::map<std::string, WeightingKind> kWeightings{{"uniform", WeightingKind::uniform},
                                                       {"inverse_gap", WeightingKind::inverse_gap}};
const std::map<std::string, MetricKind> kMetrics{{"squared_l2", MetricKind::squared_l2},
                                                 {"l1", MetricKind::l1},
                                                 {"pseudo_huber", MetricKind::pseudo_huber}};
const std::map<std::string, Activation> kActivations{{"tanh", Activation::tanh_act},
                                                     {"silu", Activation::silu}};
const std::map<std::string, EmbeddingKind> kEmbeddings{{"fourier", EmbeddingKind::fourier},
                                                       {"positional", EmbeddingKind::positional}};
const std::map<std::string, TeacherRule> kTeachers{{"zero_ema", TeacherRule::zero_ema},
                                                   {"ema", TeacherRule::ema}};
const std::map<std::string, Objective> kObjectives{{"ct", Objective::ct},
                                                   {"cm_exact_score", Objective::cm_exact_score}};
const std::map<std::string, EvalSettings::Kind> kEvalKinds{
    {"sliced_wasserstein", EvalSettings::Kind::sliced_wasserstein},
    {"energy", EvalSettings::Kind::energy},
    {"both", EvalSettings::Kind::both}};

template <typename T>
T to_enum(const std::map<std::string, T>& table, const std::string& key, const std::string& v) {
    const auto it = table.find(v);
    if (it == table.end()) {
        fail("unknown value for " + key + ": '" + v + "'");
    }
    return it->second;
}

template <typename T>
std::string enum_name(const std::map<std::string, T>& table, T v) {
    for (const auto& [name, val] : table) {
        if (val == v) {
            return name;
        }
    }
    return "?";
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(std::istream& in) {
    std::map<std::string, std::string> kv;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            fail("line " + std::to_string(line_no) + " has no '='");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            fail("line " + std::to_string(line_no) + " has an empty key");
        }
        if (!kv.emplace(key, value).second) {
            fail("duplicate key " + key);
        }
    }

    auto take = [&kv](const std::string& key) -> std::string {
        const auto it = kv.find(key);
        if (it == kv.end()) {
            return "";
        }
        std::string v = it->second;
        kv.erase(it);
        return v;
    };
    auto take_or = [&take](const std::string& key, const std::string& fallback) {
        const std::string v = take(key);
        return v.empty() ? fallback : v;
    };

    ExperimentConfig cfg;
    TrainConfig& t = cfg.train;

    // data
    const DistKind kind = to_enum(kDistKinds, "data.kind", take_or("data.kind", "delta"));
    const int dim = static_cast<int>(to_long("data.dim", take_or("data.dim", "1")));
    const int ncomp = static_cast<int>(to_long("data.components", take_or("data.components", "1")));
    if (ncomp < 1) {
        fail("data.components must be >= 1");
    }
    std::vector<MixtureComponent> comps;
    for (int c = 0; c < ncomp; ++c) {
        const std::string prefix = "data.c" + std::to_string(c) + ".";
        MixtureComponent mc;
        mc.weight = to_double(prefix + "weight", take_or(prefix + "weight", "1"));
        const std::string mean_str = take_or(prefix + "mean", "0");
        mc.mean = to_doubles(prefix + "mean", mean_str);
        if (static_cast<int>(mc.mean.size()) == 1 && dim > 1) {
            mc.mean.assign(static_cast<std::size_t>(dim), mc.mean.front());
        }
        mc.stddev = to_double(prefix + "stddev", take_or(prefix + "stddev", "0"));
        comps.push_back(std::move(mc));
    }
    t.distribution.kind = kind;
    t.distribution.dim = dim;
    t.distribution.components = std::move(comps);
    t.distribution.validate();

    // grid
    t.sigma_min = to_double("grid.sigma_min", take_or("grid.sigma_min", "0.002"));
    t.sigma_max = to_double("grid.sigma_max", take_or("grid.sigma_max", "80"));
    t.rho = to_double("grid.rho", take_or("grid.rho", "7"));

    // curriculum
    t.curriculum.shape = to_enum(kShapes, "curriculum.shape", take_or("curriculum.shape", "exponential"));
    t.curriculum.s0 = static_cast<int>(to_long("curriculum.s0", take_or("curriculum.s0", "10")));
    t.curriculum.s1 = static_cast<int>(to_long("curriculum.s1", take_or("curriculum.s1", "1280")));

    // noise index schedule
    t.sampler.kind = to_enum(kSamplers, "schedule.kind", take_or("schedule.kind", "lognormal"));
    t.sampler.p_mean = to_double("schedule.p_mean", take_or("schedule.p_mean", "-1.1"));
    t.sampler.p_std = to_double("schedule.p_std", take_or("schedule.p_std", "2.0"));

    t.weighting = to_enum(kWeightings, "weighting.kind", take_or("weighting.kind", "inverse_gap"));

    // metric; c may be 'auto' meaning the sqrt(dim) heuristic
    t.metric.kind = to_enum(kMetrics, "metric.kind", take_or("metric.kind", "pseudo_huber"));
    const std::string c_str = take_or("metric.c", "auto");
    t.metric.c = (c_str == "auto") ? huber_c(dim) : to_double("metric.c", c_str);

    // model
    t.hidden_widths = to_ints("model.hidden", take_or("model.hidden", "128 128 128"));
    t.activation = to_enum(kActivations, "model.activation", take_or("model.activation", "tanh"));
    t.embedding_kind = to_enum(kEmbeddings, "model.embedding", take_or("model.embedding", "fourier"));
    t.embedding_dim =
        static_cast<int>(to_long("model.embedding_dim", take_or("model.embedding_dim", "32")));
    t.fourier_scale = to_double("model.fourier_scale", take_or("model.fourier_scale", "0.02"));
    t.dropout_rate = to_double("model.dropout", take_or("model.dropout", "0.3"));
    t.sigma_data = to_double("model.sigma_data", take_or("model.sigma_data", "0.5"));

    // training
    t.objective = to_enum(kObjectives, "train.objective", take_or("train.objective", "ct"));
    t.batch_size = static_cast<int>(to_long("train.batch", take_or("train.batch", "256")));
    t.curriculum.total_steps = to_long("train.steps", take_or("train.steps", "20000"));
    t.lr = to_double("train.lr", take_or("train.lr", "0.0001"));
    t.student_ema = to_double("train.student_ema", take_or("train.student_ema", "0.9999"));
    t.teacher_rule = to_enum(kTeachers, "train.teacher", take_or("train.teacher", "zero_ema"));
    t.teacher_mu0 = to_double("train.mu0", take_or("train.mu0", "0.9"));
    t.seed = to_u64("train.seed", take_or("train.seed", "1"));
    t.threads = static_cast<int>(to_long("train.threads", take_or("train.threads", "0")));

    // evaluation
    cfg.eval.metric = to_enum(kEvalKinds, "eval.metric", take_or("eval.metric", "both"));
    cfg.eval.projections =
        static_cast<int>(to_long("eval.projections", take_or("eval.projections", "64")));
    cfg.eval.samples = static_cast<int>(to_long("eval.samples", take_or("eval.samples", "10000")));

    cfg.output_dir = take_or("output.dir", "runs/default");

    if (!kv.empty()) {
        fail("unknown key " + kv.begin()->first);
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("config: cannot open " + path.string());
    }
    return parse(in);
}

ExperimentConfig ExperimentConfig::parse_string(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
}

std::string ExperimentConfig::render() const {
    const TrainConfig& t = train;
    std::ostringstream out;
    out << "# ctlab experiment configuration\n";

    out << "data.kind = " << enum_name(kDistKinds, t.distribution.kind) << "\n";
    out << "data.dim = " << t.distribution.dim << "\n";
    out << "data.components = " << t.distribution.components.size() << "\n";
    for (std::size_t c = 0; c < t.distribution.components.size(); ++c) {
        const auto& mc = t.distribution.components[c];
        const std::string prefix = "data.c" + std::to_string(c) + ".";
        out << prefix << "weight = " << g17(mc.weight) << "\n";
        out << prefix << "mean =";
        for (double m : mc.mean) {
            out << " " << g17(m);
        }
        out << "\n";
        out << prefix << "stddev = " << g17(mc.stddev) << "\n";
    }

    out << "\ngrid.sigma_min = " << g17(t.sigma_min) << "\n";
    out << "grid.sigma_max = " << g17(t.sigma_max) << "\n";
    out << "grid.rho = " << g17(t.rho) << "\n";

    out << "\ncurriculum.shape = " << enum_name(kShapes, t.curriculum.shape) << "\n";
    out << "curriculum.s0 = " << t.curriculum.s0 << "\n";
    out << "curriculum.s1 = " << t.curriculum.s1 << "\n";

    out << "\nschedule.kind = " << enum_name(kSamplers, t.sampler.kind) << "\n";
    out << "schedule.p_mean = " << g17(t.sampler.p_mean) << "\n";
    out << "schedule.p_std = " << g17(t.sampler.p_std) << "\n";

    out << "\nweighting.kind = " << enum_name(kWeightings, t.weighting) << "\n";

    out << "\nmetric.kind = " << enum_name(kMetrics, t.metric.kind) << "\n";
    out << "metric.c = " << g17(t.metric.c) << "\n";

    out << "\nmodel.hidden =";
    for (int w : t.hidden_widths) {
        out << " " << w;
    }
    out << "\n";
    out << "model.activation = " << enum_name(kActivations, t.activation) << "\n";
    out << "model.embedding = " << enum_name(kEmbeddings, t.embedding_kind) << "\n";
    out << "model.embedding_dim = " << t.embedding_dim << "\n";
    out << "model.fourier_scale = " << g17(t.fourier_scale) << "\n";
    out << "model.dropout = " << g17(t.dropout_rate) << "\n";
    out << "model.sigma_data = " << g17(t.sigma_data) << "\n";

    out << "\ntrain.objective = " << enum_name(kObjectives, t.objective) << "\n";
    out << "train.batch = " << t.batch_size << "\n";
    out << "train.steps = " << t.curriculum.total_steps << "\n";
    out << "train.lr = " << g17(t.lr) << "\n";
    out << "train.student_ema = " << g17(t.student_ema) << "\n";
    out << "train.teacher = " << enum_name(kTeachers, t.teacher_rule) << "\n";
    out << "train.mu0 = " << g17(t.teacher_mu0) << "\n";
    out << "train.seed = " << t.seed << "\n";
    out << "train.threads = " << t.threads << "\n";

    out << "\neval.metric = " << enum_name(kEvalKinds, eval.metric) << "\n";
    out << "eval.projections = " << eval.projections << "\n";
    out << "eval.samples = " << eval.samples << "\n";

    out << "\noutput.dir = " << output_dir << "\n";
    return out.str();
}

}  // namespace ctlab
