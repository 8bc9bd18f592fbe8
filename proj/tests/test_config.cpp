// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "ctlab/config.hpp"
#include "ctlab/metrics.hpp"

using namespace ctlab;

TEST_CASE("default config round-trips through render and parse") {
    ExperimentConfig cfg;
    cfg.train.metric.c = huber_c(cfg.train.distribution.dim);
    const ExperimentConfig back = ExperimentConfig::parse_string(cfg.render());
    CHECK(back == cfg);
}

TEST_CASE("a fully customized config round-trips") {
    ExperimentConfig cfg;
    cfg.train.distribution = SyntheticDistribution::mixture({
        {0.25, {1.0, 1.0}, 0.15},
        {0.25, {1.0, -1.0}, 0.15},
        {0.25, {-1.0, 1.0}, 0.15},
        {0.25, {-1.0, -1.0}, 0.15},
    });
    cfg.train.curriculum = {CurriculumShape::cosine, 4, 200, 12345};
    cfg.train.sampler = {IndexSamplerKind::uniform, -0.5, 1.5};
    cfg.train.weighting = WeightingKind::uniform;
    cfg.train.metric = {MetricKind::l1, 0.0};
    cfg.train.hidden_widths = {64, 32};
    cfg.train.activation = Activation::silu;
    cfg.train.embedding_kind = EmbeddingKind::positional;
    cfg.train.embedding_dim = 16;
    cfg.train.fourier_scale = 1.5;
    cfg.train.dropout_rate = 0.05;
    cfg.train.sigma_data = 1.25;
    cfg.train.batch_size = 17;
    cfg.train.lr = 3.5e-4;
    cfg.train.student_ema = 0.95;
    cfg.train.teacher_rule = TeacherRule::ema;
    cfg.train.teacher_mu0 = 0.93;
    cfg.train.objective = Objective::cm_exact_score;
    cfg.train.seed = 987654321;
    cfg.train.threads = 3;
    cfg.eval = {EvalSettings::Kind::energy, 12, 777};
    cfg.output_dir = "runs/custom";

    const std::string text = cfg.render();
    const ExperimentConfig back = ExperimentConfig::parse_string(text);
    CHECK(back == cfg);
}

TEST_CASE("comments, blank lines, and auto metric breadth") {
    const std::string text =
        "# heading comment\n"
        "\n"
        "data.kind = delta\n"
        "data.dim = 4\n"
        "data.c0.mean = 0.5 0.5 0.5 0.5   # trailing comment\n"
        "metric.kind = pseudo_huber\n"
        "metric.c = auto\n";
    const ExperimentConfig cfg = ExperimentConfig::parse_string(text);
    CHECK(cfg.train.metric.c == huber_c(4));
    CHECK(cfg.train.distribution.dim == 4);
    CHECK(cfg.train.distribution.components.front().mean[3] == 0.5);
}

TEST_CASE("unknown and duplicate keys are rejected") {
    CHECK_THROWS_WITH_AS(ExperimentConfig::parse_string("data.kind = delta\nnot.a.key = 1\n"),
                         doctest::Contains("not.a.key"), std::invalid_argument);
    CHECK_THROWS_AS(ExperimentConfig::parse_string("data.dim = 1\ndata.dim = 2\n"),
                    std::invalid_argument);
    CHECK_THROWS_AS(ExperimentConfig::parse_string("data.dim\n"), std::invalid_argument);
    CHECK_THROWS_AS(ExperimentConfig::parse_string("train.lr = fast\n"), std::invalid_argument);
}

TEST_CASE("missing files raise a runtime error") {
    CHECK_THROWS_AS(ExperimentConfig::parse_file("/nonexistent/ctlab.cfg"), std::runtime_error);
}
