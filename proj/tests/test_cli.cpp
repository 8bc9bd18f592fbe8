// SPDX-License-Identifier: Apache-2.0
//
// End-to-end checks against the installed command line binary.
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ctlab/config.hpp"
#include "ctlab/metrics.hpp"

namespace fs = std::filesystem;
using namespace ctlab;

namespace {

const char* kCli = CTLAB_CLI_PATH;

struct RunResult {
    int exit_code = -1;
    std::string output;
};

RunResult run_cli(const std::string& args, const fs::path& workdir) {
    const fs::path out_file = workdir / "cli_output.txt";
    const std::string cmd =
        "cd " + workdir.string() + " && " + std::string(kCli) + " " + args + " > " +
        out_file.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(out_file);
    std::stringstream buf;
    buf << in.rdbuf();
    r.output = buf.str();
    return r;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("ctlab_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string last_line(const fs::path& file) {
    std::ifstream in(file);
    std::string line, last;
    while (std::getline(in, line)) {
        if (!line.empty()) {
            last = line;
        }
    }
    return last;
}

}  // namespace

TEST_CASE("schedule-table emits the exponential curriculum") {
    const fs::path dir = fresh_dir("sched");
    const RunResult r = run_cli(
        "schedule-table --curriculum exponential --s0 10 --s1 1280 --K 400000 --out table.csv", dir);
    CHECK(r.exit_code == 0);
    CHECK(last_line(dir / "table.csv") == "399999,1281");

    std::ifstream in(dir / "table.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "k,n_levels");
    fs::remove_all(dir);
}

TEST_CASE("schedule-table emits grid tables with a header") {
    const fs::path dir = fresh_dir("grid");
    const RunResult r = run_cli("schedule-table --grid 150 --out grid.csv", dir);
    CHECK(r.exit_code == 0);
    std::ifstream in(dir / "grid.csv");
    std::string header, first;
    std::getline(in, header);
    std::getline(in, first);
    CHECK(header == "i,sigma_i,pmf_i,weight_i");
    CHECK(first.substr(0, 8) == "1,0.002,");
    CHECK(last_line(dir / "grid.csv").substr(0, 6) == "150,80");
    fs::remove_all(dir);
}

TEST_CASE("prop1 preset passes and reports four claims") {
    const fs::path dir = fresh_dir("prop1");
    const RunResult r = run_cli("prop1 --preset paper-defaults", dir);
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("FAIL") == std::string::npos);
    CHECK(r.output.find("loss_convergence_order") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("train with a missing config exits nonzero and writes nothing") {
    const fs::path dir = fresh_dir("missing");
    const RunResult r = run_cli("train --config missing.cfg", dir);
    CHECK(r.exit_code != 0);
    CHECK(!fs::exists(dir / "runs"));
    fs::remove_all(dir);
}

TEST_CASE("gradcheck passes at the documented tolerance") {
    const fs::path dir = fresh_dir("gradcheck");
    const RunResult r = run_cli("gradcheck --trials 10 --dim 2", dir);
    CHECK(r.exit_code == 0);
    fs::remove_all(dir);
}

TEST_CASE("train, sample, and eval round-trip through the filesystem") {
    const fs::path dir = fresh_dir("pipeline");

    ExperimentConfig cfg;
    cfg.train.distribution = SyntheticDistribution::delta({0.7});
    cfg.train.curriculum = {CurriculumShape::exponential, 10, 1280, 60};
    cfg.train.metric = {MetricKind::pseudo_huber, huber_c(1)};
    cfg.train.hidden_widths = {16, 16};
    cfg.train.embedding_dim = 8;
    cfg.train.dropout_rate = 0.0;
    cfg.train.batch_size = 8;
    cfg.train.lr = 1e-3;
    cfg.train.seed = 3;
    cfg.eval.samples = 200;
    cfg.eval.projections = 8;
    cfg.output_dir = (dir / "run").string();
    {
        std::ofstream out(dir / "exp.cfg");
        out << cfg.render();
    }

    const RunResult trained = run_cli("train --config exp.cfg", dir);
    CHECK(trained.exit_code == 0);
    CHECK(fs::exists(dir / "run" / "checkpoint.ckpt"));
    CHECK(fs::exists(dir / "run" / "train_log.csv"));
    CHECK(fs::exists(dir / "run" / "train_report.json"));
    CHECK(!fs::exists(dir / "run" / ".ctlab.lock"));  // released on exit

    const RunResult sampled = run_cli(
        "sample --checkpoint run/checkpoint.ckpt --out samples.csv --count 64 --seed 5", dir);
    CHECK(sampled.exit_code == 0);
    CHECK(fs::exists(dir / "samples.csv"));
    CHECK(fs::exists(dir / "samples.csv.json"));
    {
        std::ifstream side(dir / "samples.csv.json");
        std::stringstream buf;
        buf << side.rdbuf();
        CHECK(buf.str().find("checkpoint_hash") != std::string::npos);
        CHECK(buf.str().find("\"seed\": 5") != std::string::npos);
    }

    const RunResult multi = run_cli(
        "sample --checkpoint run/checkpoint.ckpt --out two_step.csv --count 16 --seed 6 "
        "--at-sigmas 0.821",
        dir);
    CHECK(multi.exit_code == 0);
    CHECK(fs::exists(dir / "two_step.csv"));

    const RunResult scored = run_cli("eval --config exp.cfg --samples samples.csv --seed 9", dir);
    CHECK(scored.exit_code == 0);
    CHECK(fs::exists(dir / "samples.csv.eval.json"));
    CHECK(scored.output.find("sliced_wasserstein") != std::string::npos);

    const RunResult missing_ckpt =
        run_cli("sample --checkpoint nowhere.ckpt --out x.csv --count 4", dir);
    CHECK(missing_ckpt.exit_code != 0);

    fs::remove_all(dir);
}
