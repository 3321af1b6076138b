#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "ssvtcn/model.hpp"

namespace ssvtcn {

// Binary model snapshot, explicit little-endian layout:
//   magic "SSVT" | u32 version | u32 levels, channels, kernel, classes,
//   window, input_dim, latent_dim | f64 sigma | u32 count |
//   count * (u32 name_len | name | u32 ndim | u32 dims[] | f64 data[])
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
    }
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
    }
}

class ByteReader {
public:
    ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(data_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        }
        pos_ += 4;
        return v;
    }

    double f64() {
        need(8);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) {
            bits |= static_cast<std::uint64_t>(data_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        }
        pos_ += 8;
        double v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }

    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
        pos_ += n;
        return s;
    }

    bool exhausted() const { return pos_ == size_; }

private:
    void need(std::size_t n) {
        if (size_ - pos_ < n) {
            throw checkpoint_corrupt_error("checkpoint: truncated at byte " +
                                           std::to_string(pos_));
        }
    }

    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> save_checkpoint(const Model& model) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), {'S', 'S', 'V', 'T'});
    detail::put_u32(out, kCheckpointVersion);
    const ModelConfig& cfg = model.config();
    detail::put_u32(out, static_cast<std::uint32_t>(cfg.tcn.levels));
    detail::put_u32(out, static_cast<std::uint32_t>(cfg.tcn.channels));
    detail::put_u32(out, static_cast<std::uint32_t>(cfg.tcn.kernel));
    detail::put_u32(out, static_cast<std::uint32_t>(cfg.tcn.classes));
    detail::put_u32(out, static_cast<std::uint32_t>(cfg.window));
    detail::put_u32(out, static_cast<std::uint32_t>(cfg.tcn.input_dim));
    detail::put_u32(out, static_cast<std::uint32_t>(cfg.latent_dim));
    detail::put_f64(out, cfg.sigma);

    const auto params = model.parameters();
    detail::put_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, tensor] : params) {
        detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        detail::put_u32(out, static_cast<std::uint32_t>(tensor->shape.size()));
        for (std::size_t d : tensor->shape) {
            detail::put_u32(out, static_cast<std::uint32_t>(d));
        }
        for (double v : tensor->values) {
            detail::put_f64(out, v);
        }
    }
    return out;
}

inline Model load_checkpoint(const std::vector<std::uint8_t>& bytes) {
    detail::ByteReader in(bytes.data(), bytes.size());
    if (in.str(4) != "SSVT") {
        throw checkpoint_corrupt_error("checkpoint: bad magic header");
    }
    const std::uint32_t version = in.u32();
    if (version != kCheckpointVersion) {
        throw checkpoint_version_error("checkpoint: format version " + std::to_string(version) +
                                       " unsupported (expected " +
                                       std::to_string(kCheckpointVersion) + ")");
    }
    ModelConfig cfg;
    cfg.tcn.levels = in.u32();
    cfg.tcn.channels = in.u32();
    cfg.tcn.kernel = in.u32();
    cfg.tcn.classes = in.u32();
    cfg.window = in.u32();
    cfg.tcn.input_dim = in.u32();
    cfg.latent_dim = in.u32();
    cfg.sigma = in.f64();

    Model model(cfg, Rng(0));
    std::unordered_map<std::string, TensorPtr> by_name;
    for (auto& [name, tensor] : model.parameters()) {
        by_name.emplace(name, tensor);
    }

    const std::uint32_t count = in.u32();
    if (count != by_name.size()) {
        throw checkpoint_shape_error("checkpoint: expected " + std::to_string(by_name.size()) +
                                     " parameter arrays, found " + std::to_string(count));
    }
    for (std::uint32_t k = 0; k < count; ++k) {
        const std::string name = in.str(in.u32());
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw checkpoint_corrupt_error("checkpoint: unknown parameter '" + name + "'");
        }
        TensorPtr target = it->second;
        const std::uint32_t ndim = in.u32();
        std::vector<std::size_t> shape(ndim);
        for (auto& d : shape) {
            d = in.u32();
        }
        if (shape != target->shape) {
            throw checkpoint_shape_error("checkpoint: parameter '" + name +
                                         "' has a different shape than this configuration");
        }
        for (double& v : target->values) {
            v = in.f64();
        }
    }
    if (!in.exhausted()) {
        throw checkpoint_corrupt_error("checkpoint: trailing bytes after last parameter");
    }
    return model;
}

// Shape gate for using a checkpoint under an expected configuration.
inline void require_compatible(const Model& model, const ModelConfig& expected) {
    const ModelConfig& got = model.config();
    if (got.tcn.levels != expected.tcn.levels || got.tcn.channels != expected.tcn.channels ||
        got.tcn.kernel != expected.tcn.kernel || got.tcn.classes != expected.tcn.classes ||
        got.window != expected.window || got.tcn.input_dim != expected.tcn.input_dim ||
        got.latent_dim != expected.latent_dim) {
        throw checkpoint_shape_error(
            "checkpoint: stored model shape disagrees with the requested configuration");
    }
}

inline void write_checkpoint_file(const Model& model, const std::string& path) {
    const auto bytes = save_checkpoint(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw error("cannot open checkpoint file for writing: " + path);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw error("failed writing checkpoint: " + path);
    }
}

inline Model read_checkpoint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw error("cannot open checkpoint file: " + path);
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return load_checkpoint(bytes);
}

}  // namespace ssvtcn
