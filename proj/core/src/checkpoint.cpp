// SPDX-License-Identifier: Apache-2.0
#include "ctlab/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace ctlab {

namespace {

void put_u64(std::ostream& os, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) {
        buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    }
    os.write(buf, 8);
}

void put_u32(std::ostream& os, std::uint32_t v) {
    char buf[4];
    for (int i = 0; i < 4; ++i) {
        buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    }
    os.write(buf, 4);
}

void put_f64(std::ostream& os, double v) {
    put_u64(os, std::bit_cast<std::uint64_t>(v));
}

void put_f64_vec(std::ostream& os, const std::vector<double>& v) {
    put_u64(os, v.size());
    for (double d : v) {
        put_f64(os, d);
    }
}

std::uint64_t get_u64(std::istream& is) {
    unsigned char buf[8];
    is.read(reinterpret_cast<char*>(buf), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    }
    return v;
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char buf[4];
    is.read(reinterpret_cast<char*>(buf), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
    }
    return v;
}

double get_f64(std::istream& is) {
    return std::bit_cast<double>(get_u64(is));
}

std::vector<double> get_f64_vec(std::istream& is) {
    const std::uint64_t n = get_u64(is);
    std::vector<double> v(n);
    for (auto& d : v) {
        d = get_f64(is);
    }
    return v;
}

}  // namespace

void Checkpoint::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw std::runtime_error("Checkpoint: cannot open " + path.string() + " for writing");
    }
    put_u32(os, kMagic);
    put_u32(os, kVersion);

    put_u32(os, static_cast<std::uint32_t>(x_dim));
    put_u32(os, static_cast<std::uint32_t>(hidden_widths.size()));
    for (int w : hidden_widths) {
        put_u32(os, static_cast<std::uint32_t>(w));
    }
    put_u32(os, static_cast<std::uint32_t>(activation));
    put_f64(os, dropout_rate);

    put_u32(os, static_cast<std::uint32_t>(embedding_kind));
    put_u32(os, static_cast<std::uint32_t>(embedding_dim));
    put_f64(os, fourier_scale);
    put_f64_vec(os, frequencies);

    put_f64(os, sigma_min);
    put_f64(os, sigma_max);
    put_f64(os, rho);
    put_f64(os, sigma_data);

    put_u64(os, master_seed);
    put_u64(os, steps_completed);

    put_f64_vec(os, params);
    put_f64_vec(os, ema_params);
    put_f64_vec(os, teacher_params);
    put_f64_vec(os, adam_m);
    put_f64_vec(os, adam_v);
    put_u64(os, adam_steps);

    if (!os) {
        throw std::runtime_error("Checkpoint: write failed for " + path.string());
    }
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("Checkpoint: cannot open " + path.string());
    }
    if (get_u32(is) != kMagic) {
        throw std::runtime_error("Checkpoint: bad magic in " + path.string());
    }
    if (get_u32(is) != kVersion) {
        throw std::runtime_error("Checkpoint: unsupported version in " + path.string());
    }

    Checkpoint c;
    c.x_dim = static_cast<int>(get_u32(is));
    const std::uint32_t layers = get_u32(is);
    c.hidden_widths.resize(layers);
    for (auto& w : c.hidden_widths) {
        w = static_cast<int>(get_u32(is));
    }
    c.activation = static_cast<Activation>(get_u32(is));
    c.dropout_rate = get_f64(is);

    c.embedding_kind = static_cast<EmbeddingKind>(get_u32(is));
    c.embedding_dim = static_cast<int>(get_u32(is));
    c.fourier_scale = get_f64(is);
    c.frequencies = get_f64_vec(is);

    c.sigma_min = get_f64(is);
    c.sigma_max = get_f64(is);
    c.rho = get_f64(is);
    c.sigma_data = get_f64(is);

    c.master_seed = get_u64(is);
    c.steps_completed = get_u64(is);

    c.params = get_f64_vec(is);
    c.ema_params = get_f64_vec(is);
    c.teacher_params = get_f64_vec(is);
    c.adam_m = get_f64_vec(is);
    c.adam_v = get_f64_vec(is);
    c.adam_steps = get_u64(is);

    if (!is) {
        throw std::runtime_error("Checkpoint: truncated file " + path.string());
    }
    return c;
}

Network Checkpoint::make_network(bool use_ema) const {
    NoiseEmbedding emb;
    emb.kind = embedding_kind;
    emb.scale = fourier_scale;
    emb.dim = embedding_dim;
    emb.frequencies = frequencies;

    Network net(x_dim, hidden_widths, activation, dropout_rate, emb);
    net.set_params(use_ema ? ema_params : params);
    return net;
}

std::string file_hash_hex(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("file_hash_hex: cannot open " + path.string());
    }
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[4096];
    while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
        const std::streamsize got = is.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ull;
        }
        if (!is) {
            break;
        }
    }
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return std::string(out);
}

}  // namespace ctlab
