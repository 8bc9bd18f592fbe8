// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ctlab/net.hpp"

namespace ctlab {

// On-disk model state. Everything is little-endian; floats are 64-bit IEEE
// payloads, so a save/load round-trip is bit exact.
struct Checkpoint {
    static constexpr std::uint32_t kMagic = 0x4254'4C43;  // "CLTB"
    static constexpr std::uint32_t kVersion = 1;

    // topology
    int x_dim = 0;
    std::vector<int> hidden_widths;
    Activation activation = Activation::tanh_act;
    double dropout_rate = 0.0;

    // noise embedding, frequencies stored verbatim
    EmbeddingKind embedding_kind = EmbeddingKind::fourier;
    int embedding_dim = 0;
    double fourier_scale = 0.0;
    std::vector<double> frequencies;

    // scales
    double sigma_min = 0.0;
    double sigma_max = 0.0;
    double rho = 7.0;
    double sigma_data = 0.5;

    std::uint64_t master_seed = 0;
    std::uint64_t steps_completed = 0;

    std::vector<double> params;
    std::vector<double> ema_params;
    std::vector<double> teacher_params;
    std::vector<double> adam_m;
    std::vector<double> adam_v;
    std::uint64_t adam_steps = 0;

    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);

    // network rebuilt from the stored topology, frequencies included
    Network make_network(bool use_ema) const;
};

// FNV-1a over the file bytes, used to stamp sample sidecars.
std::string file_hash_hex(const std::filesystem::path& path);

}  // namespace ctlab
