#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "sednoise/errors.hpp"
#include "sednoise/nn/layers.hpp"

namespace sednoise::nn {

/// Ordered stack of layers applied in sequence.
template <typename T>
class Network {
  public:
    Network() = default;
    Network(const Network& other) : input_(other.input_), seed_(other.seed_) {
        layers_.reserve(other.layers_.size());
        for (const auto& l : other.layers_) layers_.push_back(l->clone());
    }
    Network& operator=(const Network& other) {
        if (this != &other) {
            Network tmp(other);
            *this = std::move(tmp);
        }
        return *this;
    }
    Network(Network&&) noexcept = default;
    Network& operator=(Network&&) noexcept = default;

    void set_input_shape(std::size_t channels, std::size_t height, std::size_t width) {
        input_ = {1, channels, height, width};
    }
    const Shape4& input_shape() const noexcept { return input_; }

    void add(std::unique_ptr<Layer<T>> layer) { layers_.push_back(std::move(layer)); }

    std::size_t size() const noexcept { return layers_.size(); }
    Layer<T>& layer(std::size_t i) { return *layers_.at(i); }
    const Layer<T>& layer(std::size_t i) const { return *layers_.at(i); }

    std::uint64_t seed() const noexcept { return seed_; }
    void set_seed(std::uint64_t s) noexcept { seed_ = s; }

    Shape4 output_shape(Shape4 in) const {
        for (const auto& l : layers_) in = l->output_shape(in);
        return in;
    }

    Tensor4<T> forward(const Tensor4<T>& x, Mode mode) {
        Tensor4<T> h = x;
        for (auto& l : layers_) h = l->forward(h, mode);
        return h;
    }

    /// Back-propagates dL/d(output) and returns dL/d(input).
    Tensor4<T> backward(const Tensor4<T>& upstream) {
        Tensor4<T> g = upstream;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
        return g;
    }

    void zero_grad() {
        for (auto& l : layers_) l->zero_grad();
    }

    std::vector<ParamRef<T>> params() {
        std::vector<ParamRef<T>> out;
        for (std::size_t i = 0; i < layers_.size(); ++i)
            for (auto& p : layers_[i]->params()) {
                p.name = "layer" + std::to_string(i) + "." + p.name;
                out.push_back(p);
            }
        return out;
    }

    std::vector<std::span<T>> buffers() {
        std::vector<std::span<T>> out;
        for (auto& l : layers_)
            for (auto b : l->buffers()) out.push_back(b);
        return out;
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& l : layers_) n += l->param_count();
        return n;
    }

    /// Copy of all parameters and buffers, in layer order.
    std::vector<T> snapshot() {
        std::vector<T> out;
        for (auto& p : params()) out.insert(out.end(), p.value.begin(), p.value.end());
        for (auto b : buffers()) out.insert(out.end(), b.begin(), b.end());
        return out;
    }

    void restore(const std::vector<T>& state) {
        std::size_t off = 0;
        auto take = [&](std::span<T> dst) {
            if (off + dst.size() > state.size()) throw StateError("network restore: snapshot too short");
            std::copy(state.begin() + static_cast<std::ptrdiff_t>(off),
                      state.begin() + static_cast<std::ptrdiff_t>(off + dst.size()), dst.begin());
            off += dst.size();
        };
        for (auto& p : params()) take(p.value);
        for (auto b : buffers()) take(b);
        if (off != state.size()) throw StateError("network restore: snapshot size mismatch");
    }

  private:
    std::vector<std::unique_ptr<Layer<T>>> layers_;
    Shape4 input_{};
    std::uint64_t seed_ = 0;
};

/// Architecture knobs for the three-stage pre-activation CNN.
struct NetworkSpec {
    std::array<std::size_t, 3> channels{32, 64, 112};
    std::size_t kernel = 5;
    std::size_t pool_h = 2;
    std::size_t pool_w = 2;

    bool operator==(const NetworkSpec&) const = default;
};

/// Three pre-activation stages (BN -> ReLU -> Conv -> MaxPool) followed by Dense -> Softmax.
/// With the default spec and a 96 x 86 input over 20 classes this has ~0.5M weights.
template <typename T>
Network<T> build_baseline(std::size_t n_mels, std::size_t patch_frames, std::size_t n_classes,
                          const NetworkSpec& spec = {}, std::uint64_t seed = 0) {
    if (n_mels == 0 || patch_frames == 0 || n_classes == 0)
        throw ConfigError("build_baseline: dimensions must be positive");
    std::size_t h = n_mels, w = patch_frames;
    for (int stage = 0; stage < 3; ++stage) {
        if (h < spec.pool_h || w < spec.pool_w)
            throw ConfigError("build_baseline: input " + std::to_string(n_mels) + "x" + std::to_string(patch_frames) +
                              " too small for the pooling pyramid at stage " + std::to_string(stage + 1));
        h /= spec.pool_h;
        w /= spec.pool_w;
    }

    std::mt19937_64 rng(seed);
    Network<T> net;
    net.set_input_shape(1, n_mels, patch_frames);
    net.set_seed(seed);
    std::size_t in_c = 1;
    for (std::size_t out_c : spec.channels) {
        net.add(std::make_unique<BatchNorm<T>>(in_c));
        net.add(std::make_unique<ReLU<T>>());
        auto conv = std::make_unique<Conv2d<T>>(in_c, out_c, spec.kernel, spec.kernel, Padding::Same);
        conv->init(rng);
        net.add(std::move(conv));
        net.add(std::make_unique<MaxPool<T>>(spec.pool_h, spec.pool_w));
        in_c = out_c;
    }
    auto dense = std::make_unique<Dense<T>>(in_c * h * w, n_classes);
    dense->init(rng);
    net.add(std::move(dense));
    net.add(std::make_unique<Softmax<T>>());
    return net;
}

}  // namespace sednoise::nn
