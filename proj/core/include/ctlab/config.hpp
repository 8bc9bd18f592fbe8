// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <istream>
#include <string>

#include "ctlab/train.hpp"

namespace ctlab {

struct EvalSettings {
    enum class Kind { sliced_wasserstein, energy, both };
    Kind metric = Kind::both;
    int projections = 64;
    int samples = 10000;

    friend bool operator==(const EvalSettings&, const EvalSettings&) = default;
};

// Full experiment description in a flat `section.key = value` text format.
// render() materializes every key, defaults included, so a run's config file
// is self-describing; parse(render(c)) == c and unknown keys are rejected.
struct ExperimentConfig {
    TrainConfig train;
    EvalSettings eval;
    std::string output_dir = "runs/default";

    static ExperimentConfig parse(std::istream& in);
    static ExperimentConfig parse_file(const std::filesystem::path& path);
    static ExperimentConfig parse_string(const std::string& text);
    std::string render() const;

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

}  // namespace ctlab
