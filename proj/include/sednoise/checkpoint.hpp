#pragma once

#include <cstdint>
#include <fstream>
#include <memory>
#include <string>

#include "sednoise/binary.hpp"
#include "sednoise/errors.hpp"
#include "sednoise/nn/network.hpp"
#include "sednoise/train.hpp"

namespace sednoise {

// Checkpoint layout (little-endian):
//   "SEDNCKPT" u32 version
//   u64 seed, u32 epoch, u32 input c, h, w
//   u32 n_layers, then per layer: u8 kind, u32 n_config, u32 config[n_config]
//   u32 n_bands, f32 band_mean[n_bands], f32 band_stddev[n_bands]
//   per layer: parameters then running statistics, as f32
inline constexpr char kCheckpointMagic[] = "SEDNCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    Model model;
    std::uint64_t seed = 0;
    std::uint32_t epoch = 0;
};

inline std::string encode_checkpoint(Model& model, std::uint32_t epoch) {
    auto& net = model.network;
    std::string out(kCheckpointMagic, 8);
    binary::put(out, kCheckpointVersion);
    binary::put(out, static_cast<std::uint64_t>(net.seed()));
    binary::put(out, epoch);
    const auto in = net.input_shape();
    binary::put(out, static_cast<std::uint32_t>(in.c));
    binary::put(out, static_cast<std::uint32_t>(in.h));
    binary::put(out, static_cast<std::uint32_t>(in.w));
    binary::put(out, static_cast<std::uint32_t>(net.size()));
    for (std::size_t i = 0; i < net.size(); ++i) {
        const auto cfg = net.layer(i).config();
        binary::put(out, static_cast<std::uint8_t>(net.layer(i).kind()));
        binary::put(out, static_cast<std::uint32_t>(cfg.size()));
        for (auto v : cfg) binary::put(out, v);
    }
    const auto& st = model.standardizer;
    binary::put(out, static_cast<std::uint32_t>(st.mean.size()));
    for (float v : st.mean) binary::put_f32(out, v);
    for (float v : st.stddev) binary::put_f32(out, v);
    for (std::size_t i = 0; i < net.size(); ++i) {
        for (auto& p : net.layer(i).params())
            for (float v : p.value) binary::put_f32(out, v);
        for (auto b : net.layer(i).buffers())
            for (float v : b) binary::put_f32(out, v);
    }
    return out;
}

namespace detail {

inline std::unique_ptr<nn::Layer<float>> make_layer(nn::LayerKind kind, const std::vector<std::uint32_t>& c,
                                                    const std::string& source) {
    auto need = [&](std::size_t n) {
        if (c.size() != n) throw FormatError(source + ": bad configuration for layer " + nn::to_string(kind));
    };
    switch (kind) {
        case nn::LayerKind::Conv2d:
            need(5);
            return std::make_unique<nn::Conv2d<float>>(c[0], c[1], c[2], c[3], static_cast<nn::Padding>(c[4]));
        case nn::LayerKind::BatchNorm: need(1); return std::make_unique<nn::BatchNorm<float>>(c[0]);
        case nn::LayerKind::ReLU: need(0); return std::make_unique<nn::ReLU<float>>();
        case nn::LayerKind::MaxPool: need(2); return std::make_unique<nn::MaxPool<float>>(c[0], c[1]);
        case nn::LayerKind::Dense: need(2); return std::make_unique<nn::Dense<float>>(c[0], c[1]);
        case nn::LayerKind::Softmax: need(0); return std::make_unique<nn::Softmax<float>>();
    }
    throw FormatError(source + ": unknown layer kind");
}

}  // namespace detail

inline Checkpoint decode_checkpoint(const std::string& bytes, const std::string& source) {
    binary::Reader in(bytes, source);
    if (in.get_bytes(8) != std::string(kCheckpointMagic, 8)) throw FormatError(source + ": not a checkpoint file");
    if (in.get<std::uint32_t>() != kCheckpointVersion) throw FormatError(source + ": unsupported checkpoint version");
    Checkpoint ck;
    ck.seed = in.get<std::uint64_t>();
    ck.epoch = in.get<std::uint32_t>();
    const auto c = in.get<std::uint32_t>(), h = in.get<std::uint32_t>(), w = in.get<std::uint32_t>();
    auto& net = ck.model.network;
    net.set_input_shape(c, h, w);
    net.set_seed(ck.seed);
    const auto n_layers = in.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n_layers; ++i) {
        const auto kind = in.get<std::uint8_t>();
        if (kind > static_cast<std::uint8_t>(nn::LayerKind::Softmax)) throw FormatError(source + ": unknown layer kind");
        std::vector<std::uint32_t> cfg(in.get<std::uint32_t>());
        for (auto& v : cfg) v = in.get<std::uint32_t>();
        net.add(detail::make_layer(static_cast<nn::LayerKind>(kind), cfg, source));
    }
    net.output_shape({1, c, h, w});  // validates layer chaining
    const auto n_bands = in.get<std::uint32_t>();
    ck.model.standardizer.mean.resize(n_bands);
    ck.model.standardizer.stddev.resize(n_bands);
    for (auto& v : ck.model.standardizer.mean) v = in.get_f32();
    for (auto& v : ck.model.standardizer.stddev) v = in.get_f32();
    for (std::size_t i = 0; i < net.size(); ++i) {
        for (auto& p : net.layer(i).params())
            for (auto& v : p.value) v = in.get_f32();
        for (auto b : net.layer(i).buffers())
            for (auto& v : b) v = in.get_f32();
    }
    if (in.remaining() != 0) throw FormatError(source + ": trailing bytes in checkpoint");
    return ck;
}

inline void save_checkpoint(const std::string& path, Model& model, std::uint32_t epoch) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + path);
    const auto bytes = encode_checkpoint(model, epoch);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes, path);
}

}  // namespace sednoise
