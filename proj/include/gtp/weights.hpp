// Copyright (C) 2026 The GTP Engine Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Named float32 tensors, the GTPW container format, seeded fixtures and the
// conversion to the dense 64-bit parameters the runtime consumes.
//
// GTPW layout (all integers little-endian u32):
//   "GTPW" | version=1 | tensor count |
//   per tensor: name length | UTF-8 name | ndim | dims... | float32 LE payload
// Tensors are written in ascending name order.

#include <bit>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gtp/attention.hpp"
#include "gtp/errors.hpp"
#include "gtp/linalg.hpp"
#include "gtp/model_config.hpp"
#include "gtp/rng.hpp"

namespace gtp {

struct Tensor {
    std::vector<std::uint32_t> dims;
    std::vector<float> data;

    std::size_t numel() const {
        std::size_t n = 1;
        for (auto d : dims) n *= d;
        return n;
    }
    bool operator==(const Tensor&) const = default;
};

using WeightStore = std::map<std::string, Tensor>;

inline constexpr std::uint32_t kWeightFormatVersion = 1;

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }

    std::string str(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    void need(std::size_t n, const char* what) const {
        if (remaining() < n) throw FormatError(std::string("truncated ") + what, pos_);
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize_weights(const WeightStore& store) {
    std::vector<std::uint8_t> out{'G', 'T', 'P', 'W'};
    detail::put_u32(out, kWeightFormatVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(store.size()));
    for (const auto& [name, t] : store) {
        if (t.data.size() != t.numel()) throw SchemaError("tensor '" + name + "' payload does not match its dims");
        detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        detail::put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
        for (auto d : t.dims) detail::put_u32(out, d);
        for (float f : t.data) detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
    return out;
}

inline WeightStore deserialize_weights(std::span<const std::uint8_t> bytes) {
    detail::ByteReader in(bytes);
    in.need(4, "magic");
    if (in.str(4, "magic") != "GTPW") throw FormatError("bad magic, expected GTPW", 0);
    const std::size_t version_at = in.offset();
    if (const auto v = in.u32("version"); v != kWeightFormatVersion) {
        throw FormatError("unsupported version " + std::to_string(v), version_at);
    }
    const std::uint32_t count = in.u32("tensor count");
    WeightStore store;
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::size_t name_at = in.offset();
        const std::uint32_t name_len = in.u32("name length");
        std::string name = in.str(name_len, "tensor name");
        if (store.count(name) != 0) throw FormatError("duplicate tensor '" + name + "'", name_at);
        const std::size_t dims_at = in.offset();
        const std::uint32_t ndim = in.u32("ndim");
        if (ndim > 8) throw FormatError("tensor '" + name + "' has " + std::to_string(ndim) + " dims", dims_at);
        Tensor tensor;
        std::uint64_t numel = 1;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            tensor.dims.push_back(in.u32("dims"));
            numel *= tensor.dims.back();
            if (numel > (std::uint64_t{1} << 40)) throw FormatError("dimension overflow in '" + name + "'", dims_at);
        }
        if (numel * 4 > in.remaining()) {
            throw FormatError("dimension overflow: '" + name + "' needs " + std::to_string(numel * 4) +
                                  " payload bytes, " + std::to_string(in.remaining()) + " remain",
                              in.offset());
        }
        tensor.data.resize(numel);
        for (auto& f : tensor.data) f = std::bit_cast<float>(in.u32("payload"));
        store.emplace(std::move(name), std::move(tensor));
    }
    if (in.remaining() != 0) throw FormatError("trailing bytes after last tensor", in.offset());
    return store;
}

inline void save_weights(const WeightStore& store, const std::string& path) {
    const auto bytes = serialize_weights(store);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write to '" + path + "' failed");
}

inline WeightStore load_weights(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize_weights(bytes);
}

// ---------------------------------------------------------------------------

struct TensorSpec {
    std::string name;
    std::vector<std::uint32_t> dims;
};

inline std::string block_tensor(std::size_t layer, const char* part, const char* kind) {
    return "block" + std::to_string(layer) + "." + part + "." + kind;
}

// Every tensor a model needs, in generation order.
inline std::vector<TensorSpec> expected_tensors(const ModelConfig& cfg) {
    const auto c = static_cast<std::uint32_t>(cfg.embed_dim);
    const auto hidden = static_cast<std::uint32_t>(cfg.embed_dim * cfg.mlp_ratio);
    std::vector<TensorSpec> specs;
    specs.push_back({"embed.weight", {static_cast<std::uint32_t>(cfg.patch_dim()), c}});
    specs.push_back({"embed.bias", {c}});
    if (cfg.has_cls) specs.push_back({"cls_token", {c}});
    specs.push_back({"pos_embed", {static_cast<std::uint32_t>(cfg.total_tokens()), c}});
    for (std::size_t l = 0; l < cfg.depth; ++l) {
        specs.push_back({block_tensor(l, "ln1", "weight"), {c}});
        specs.push_back({block_tensor(l, "ln1", "bias"), {c}});
        specs.push_back({block_tensor(l, "qkv", "weight"), {c, 3 * c}});
        specs.push_back({block_tensor(l, "qkv", "bias"), {3 * c}});
        specs.push_back({block_tensor(l, "out", "weight"), {c, c}});
        specs.push_back({block_tensor(l, "out", "bias"), {c}});
        specs.push_back({block_tensor(l, "ln2", "weight"), {c}});
        specs.push_back({block_tensor(l, "ln2", "bias"), {c}});
        specs.push_back({block_tensor(l, "fc1", "weight"), {c, hidden}});
        specs.push_back({block_tensor(l, "fc1", "bias"), {hidden}});
        specs.push_back({block_tensor(l, "fc2", "weight"), {hidden, c}});
        specs.push_back({block_tensor(l, "fc2", "bias"), {c}});
    }
    specs.push_back({"norm.weight", {c}});
    specs.push_back({"norm.bias", {c}});
    specs.push_back({"head.weight", {c, static_cast<std::uint32_t>(cfg.num_classes)}});
    specs.push_back({"head.bias", {static_cast<std::uint32_t>(cfg.num_classes)}});
    return specs;
}

// Row-major H x W x C pixels.
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<double> pixels;
};

struct Fixture {
    WeightStore weights;
    Image image;
};

namespace detail {
inline bool is_norm_tensor(const std::string& name) {
    return name.find("ln1.") != std::string::npos || name.find("ln2.") != std::string::npos ||
           name.rfind("norm.", 0) == 0;
}
}  // namespace detail

// Weights uniform in [-0.05, 0.05] (layer-norm scales 1, shifts 0) drawn
// from the weight stream; pixels uniform in [0, 1] from the image stream.
inline WeightStore generate_weights(std::uint64_t seed, const ModelConfig& cfg) {
    SplitMix64 rng = SplitMix64::substream(seed, streams::weights);
    WeightStore store;
    for (auto& spec : expected_tensors(cfg)) {
        Tensor t{spec.dims, {}};
        t.data.resize(t.numel());
        if (detail::is_norm_tensor(spec.name)) {
            const bool scale = spec.name.ends_with(".weight");
            std::fill(t.data.begin(), t.data.end(), scale ? 1.0f : 0.0f);
        } else {
            for (auto& v : t.data) v = static_cast<float>(rng.uniform(-0.05, 0.05));
        }
        store.emplace(std::move(spec.name), std::move(t));
    }
    return store;
}

inline Image generate_image(std::uint64_t seed, const ModelConfig& cfg) {
    SplitMix64 rng = SplitMix64::substream(seed, streams::image);
    Image img{cfg.image_size, cfg.image_size, cfg.channels, {}};
    img.pixels.resize(img.height * img.width * img.channels);
    for (auto& p : img.pixels) p = rng.uniform();
    return img;
}

inline Fixture generate_fixture(std::uint64_t seed, const ModelConfig& cfg) {
    return {generate_weights(seed, cfg), generate_image(seed, cfg)};
}

// ---------------------------------------------------------------------------

struct ModelWeights {
    Matrix embed_w;  // patch_dim x C
    std::vector<double> embed_b;
    std::vector<double> cls_token;  // empty without [CLS]
    Matrix pos_embed;               // total_tokens x C
    std::vector<BlockWeights> blocks;
    std::vector<double> norm_scale, norm_shift;
    Matrix head_w;  // C x classes
    std::vector<double> head_b;
};

namespace detail {

inline const Tensor& fetch(const WeightStore& store, const TensorSpec& spec) {
    const auto it = store.find(spec.name);
    if (it == store.end()) throw SchemaError("missing weight tensor '" + spec.name + "'");
    if (it->second.dims != spec.dims) throw SchemaError("weight tensor '" + spec.name + "' has unexpected dims");
    if (it->second.data.size() != it->second.numel()) throw SchemaError("weight tensor '" + spec.name + "' is short");
    return it->second;
}

inline std::vector<double> to_vector(const Tensor& t) { return {t.data.begin(), t.data.end()}; }

inline Matrix to_matrix(const Tensor& t) {
    return Matrix(t.dims.at(0), t.dims.at(1), std::vector<double>(t.data.begin(), t.data.end()));
}

}  // namespace detail

inline ModelWeights load_model_weights(const ModelConfig& cfg, const WeightStore& store) {
    std::map<std::string, const Tensor*> by_name;
    for (const auto& spec : expected_tensors(cfg)) by_name[spec.name] = &detail::fetch(store, spec);
    auto vec = [&](const std::string& n) { return detail::to_vector(*by_name.at(n)); };
    auto mat = [&](const std::string& n) { return detail::to_matrix(*by_name.at(n)); };

    ModelWeights w;
    w.embed_w = mat("embed.weight");
    w.embed_b = vec("embed.bias");
    if (cfg.has_cls) w.cls_token = vec("cls_token");
    w.pos_embed = mat("pos_embed");
    for (std::size_t l = 0; l < cfg.depth; ++l) {
        BlockWeights b;
        b.ln1_scale = vec(block_tensor(l, "ln1", "weight"));
        b.ln1_shift = vec(block_tensor(l, "ln1", "bias"));
        b.qkv_w = mat(block_tensor(l, "qkv", "weight"));
        b.qkv_b = vec(block_tensor(l, "qkv", "bias"));
        b.out_w = mat(block_tensor(l, "out", "weight"));
        b.out_b = vec(block_tensor(l, "out", "bias"));
        b.ln2_scale = vec(block_tensor(l, "ln2", "weight"));
        b.ln2_shift = vec(block_tensor(l, "ln2", "bias"));
        b.fc1_w = mat(block_tensor(l, "fc1", "weight"));
        b.fc1_b = vec(block_tensor(l, "fc1", "bias"));
        b.fc2_w = mat(block_tensor(l, "fc2", "weight"));
        b.fc2_b = vec(block_tensor(l, "fc2", "bias"));
        w.blocks.push_back(std::move(b));
    }
    w.norm_scale = vec("norm.weight");
    w.norm_shift = vec("norm.bias");
    w.head_w = mat("head.weight");
    w.head_b = vec("head.bias");
    return w;
}

}  // namespace gtp
