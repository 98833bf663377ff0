#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sednoise/errors.hpp"
#include "sednoise/nn/tensor.hpp"

namespace sednoise::nn {

enum class LayerKind : std::uint8_t { Conv2d = 0, BatchNorm = 1, ReLU = 2, MaxPool = 3, Dense = 4, Softmax = 5 };
enum class Mode { Train, Infer };
enum class Padding : std::uint8_t { Valid = 0, Same = 1 };

inline const char* to_string(LayerKind k) {
    switch (k) {
        case LayerKind::Conv2d: return "Conv2d";
        case LayerKind::BatchNorm: return "BatchNorm";
        case LayerKind::ReLU: return "ReLU";
        case LayerKind::MaxPool: return "MaxPool";
        case LayerKind::Dense: return "Dense";
        case LayerKind::Softmax: return "Softmax";
    }
    return "?";
}

/// A trainable parameter tensor and its gradient accumulator, both flattened.
template <typename T>
struct ParamRef {
    std::string name;
    std::span<T> value;
    std::span<T> grad;
};

template <typename T>
class Layer {
  public:
    virtual ~Layer() = default;

    virtual LayerKind kind() const = 0;
    virtual Shape4 output_shape(const Shape4& in) const = 0;
    virtual Tensor4<T> forward(const Tensor4<T>& x, Mode mode) = 0;
    /// Returns dL/dx and accumulates parameter gradients.
    virtual Tensor4<T> backward(const Tensor4<T>& upstream) = 0;
    virtual std::unique_ptr<Layer> clone() const = 0;

    /// Integers describing the layer configuration, stored in checkpoints.
    virtual std::vector<std::uint32_t> config() const { return {}; }
    virtual std::vector<ParamRef<T>> params() { return {}; }
    /// Non-trainable state (BatchNorm running statistics).
    virtual std::vector<std::span<T>> buffers() { return {}; }

    void zero_grad() {
        for (auto& p : params()) std::fill(p.grad.begin(), p.grad.end(), T(0));
    }
    std::size_t param_count() {
        std::size_t n = 0;
        for (auto& p : params()) n += p.value.size();
        return n;
    }

  protected:
    void require_forward(bool cached) const {
        if (!cached) throw StateError(std::string(to_string(kind())) + ": backward called without forward");
    }
    static void check_upstream(const Shape4& expected, const Shape4& got, const char* who) {
        if (expected != got)
            throw ShapeError(std::string(who) + ": upstream gradient shape " + got.str() +
                             " does not match output shape " + expected.str());
    }
};

namespace detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

template <typename T>
void uniform_fill(std::span<T> values, double limit, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& v : values) v = static_cast<T>(dist(rng));
}

}  // namespace detail

/// 2-D cross-correlation, stride 1. `Same` padding requires odd kernels.
template <typename T>
class Conv2d final : public Layer<T> {
  public:
    Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_h, std::size_t kernel_w,
           Padding padding = Padding::Same)
        : in_c_(in_channels), out_c_(out_channels), kh_(kernel_h), kw_(kernel_w), padding_(padding),
          weight_(out_channels * in_channels * kernel_h * kernel_w, T(0)), bias_(out_channels, T(0)),
          dweight_(weight_.size(), T(0)), dbias_(out_channels, T(0)) {
        if (in_c_ == 0 || out_c_ == 0 || kh_ == 0 || kw_ == 0)
            throw ConfigError("Conv2d: all dimensions must be positive");
        if (padding_ == Padding::Same && (kh_ % 2 == 0 || kw_ % 2 == 0))
            throw ConfigError("Conv2d: same padding needs odd kernel sizes");
    }

    LayerKind kind() const override { return LayerKind::Conv2d; }

    Shape4 output_shape(const Shape4& in) const override {
        if (in.c != in_c_)
            throw ShapeError("Conv2d: expected " + std::to_string(in_c_) + " input channels, got shape " + in.str());
        if (padding_ == Padding::Same) return {in.n, out_c_, in.h, in.w};
        if (in.h < kh_ || in.w < kw_)
            throw ShapeError("Conv2d: input " + in.str() + " smaller than kernel");
        return {in.n, out_c_, in.h - kh_ + 1, in.w - kw_ + 1};
    }

    void init(std::mt19937_64& rng) {
        const double fan_in = static_cast<double>(in_c_ * kh_ * kw_);
        detail::uniform_fill<T>(weight_, std::sqrt(6.0 / fan_in), rng);
        std::fill(bias_.begin(), bias_.end(), T(0));
    }

    Tensor4<T> forward(const Tensor4<T>& x, Mode) override {
        const Shape4 out_shape = output_shape(x.shape());
        input_ = x;
        has_input_ = true;
        Tensor4<T> y(out_shape);
        const std::size_t k = in_c_ * kh_ * kw_;
        const std::size_t p = out_shape.h * out_shape.w;
        std::vector<T> cols(k * p);
        detail::ConstMatrixMap<T> w(weight_.data(), out_c_, k);
        for (std::size_t n = 0; n < x.shape().n; ++n) {
            im2col(x, n, out_shape, cols);
            detail::ConstMatrixMap<T> c(cols.data(), k, p);
            detail::MatrixMap<T> out(y.sample(n).data(), out_c_, p);
            out.noalias() = w * c;
            for (std::size_t o = 0; o < out_c_; ++o) out.row(o).array() += bias_[o];
        }
        return y;
    }

    Tensor4<T> backward(const Tensor4<T>& upstream) override {
        this->require_forward(has_input_);
        const Shape4 out_shape = output_shape(input_.shape());
        this->check_upstream(out_shape, upstream.shape(), "Conv2d");
        const std::size_t k = in_c_ * kh_ * kw_;
        const std::size_t p = out_shape.h * out_shape.w;
        std::vector<T> cols(k * p);
        std::vector<T> dcols(k * p);
        Tensor4<T> dx(input_.shape());
        detail::ConstMatrixMap<T> w(weight_.data(), out_c_, k);
        detail::MatrixMap<T> dw(dweight_.data(), out_c_, k);
        for (std::size_t n = 0; n < input_.shape().n; ++n) {
            im2col(input_, n, out_shape, cols);
            detail::ConstMatrixMap<T> c(cols.data(), k, p);
            detail::ConstMatrixMap<T> dy(upstream.sample(n).data(), out_c_, p);
            dw.noalias() += dy * c.transpose();
            for (std::size_t o = 0; o < out_c_; ++o) dbias_[o] += dy.row(o).sum();
            detail::MatrixMap<T> dc(dcols.data(), k, p);
            dc.noalias() = w.transpose() * dy;
            col2im(dcols, n, out_shape, dx);
        }
        return dx;
    }

    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Conv2d>(*this); }

    std::vector<std::uint32_t> config() const override {
        return {static_cast<std::uint32_t>(in_c_), static_cast<std::uint32_t>(out_c_),
                static_cast<std::uint32_t>(kh_), static_cast<std::uint32_t>(kw_),
                static_cast<std::uint32_t>(padding_)};
    }

    std::vector<ParamRef<T>> params() override {
        return {{"conv.weight", weight_, dweight_}, {"conv.bias", bias_, dbias_}};
    }

    std::span<T> weight() noexcept { return weight_; }
    std::span<T> bias() noexcept { return bias_; }

  private:
    std::size_t pad_h() const noexcept { return padding_ == Padding::Same ? kh_ / 2 : 0; }
    std::size_t pad_w() const noexcept { return padding_ == Padding::Same ? kw_ / 2 : 0; }

    // cols[(c*kh + i)*kw + j][oy*ow + ox] = x[n, c, oy + i - ph, ox + j - pw]
    void im2col(const Tensor4<T>& x, std::size_t n, const Shape4& out, std::vector<T>& cols) const {
        const auto& s = x.shape();
        const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(pad_h());
        const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(pad_w());
        const std::size_t p = out.h * out.w;
        for (std::size_t c = 0; c < in_c_; ++c)
            for (std::size_t i = 0; i < kh_; ++i)
                for (std::size_t j = 0; j < kw_; ++j) {
                    T* row = cols.data() + ((c * kh_ + i) * kw_ + j) * p;
                    for (std::size_t oy = 0; oy < out.h; ++oy) {
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + i) - ph;
                        T* dst = row + oy * out.w;
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(s.h)) {
                            std::fill(dst, dst + out.w, T(0));
                            continue;
                        }
                        const T* src = x.data() + x.index(n, c, static_cast<std::size_t>(iy), 0);
                        for (std::size_t ox = 0; ox < out.w; ++ox) {
                            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + j) - pw;
                            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(s.w)) ? T(0) : src[ix];
                        }
                    }
                }
    }

    void col2im(const std::vector<T>& cols, std::size_t n, const Shape4& out, Tensor4<T>& dx) const {
        const auto& s = dx.shape();
        const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(pad_h());
        const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(pad_w());
        const std::size_t p = out.h * out.w;
        for (std::size_t c = 0; c < in_c_; ++c)
            for (std::size_t i = 0; i < kh_; ++i)
                for (std::size_t j = 0; j < kw_; ++j) {
                    const T* row = cols.data() + ((c * kh_ + i) * kw_ + j) * p;
                    for (std::size_t oy = 0; oy < out.h; ++oy) {
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + i) - ph;
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(s.h)) continue;
                        T* dst = dx.data() + dx.index(n, c, static_cast<std::size_t>(iy), 0);
                        const T* src = row + oy * out.w;
                        for (std::size_t ox = 0; ox < out.w; ++ox) {
                            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + j) - pw;
                            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(s.w)) dst[ix] += src[ox];
                        }
                    }
                }
    }

    std::size_t in_c_, out_c_, kh_, kw_;
    Padding padding_;
    std::vector<T> weight_, bias_, dweight_, dbias_;
    Tensor4<T> input_;
    bool has_input_ = false;
};

/// Per-channel batch normalization over (N, H, W).
template <typename T>
class BatchNorm final : public Layer<T> {
  public:
    static constexpr double kEpsilon = 1e-5;
    static constexpr double kMomentum = 0.9;

    explicit BatchNorm(std::size_t channels)
        : c_(channels), gamma_(channels, T(1)), beta_(channels, T(0)), dgamma_(channels, T(0)),
          dbeta_(channels, T(0)), running_mean_(channels, T(0)), running_var_(channels, T(1)) {
        if (c_ == 0) throw ConfigError("BatchNorm: channel count must be positive");
    }

    LayerKind kind() const override { return LayerKind::BatchNorm; }

    Shape4 output_shape(const Shape4& in) const override {
        if (in.c != c_)
            throw ShapeError("BatchNorm: expected " + std::to_string(c_) + " channels, got shape " + in.str());
        return in;
    }

    Tensor4<T> forward(const Tensor4<T>& x, Mode mode) override {
        const Shape4 s = output_shape(x.shape());
        const std::size_t plane = s.h * s.w;
        const std::size_t count = s.n * plane;
        Tensor4<T> y(s);
        xhat_ = Tensor4<T>(s);
        inv_std_.assign(c_, T(0));
        last_mode_ = mode;
        for (std::size_t c = 0; c < c_; ++c) {
            double mean = 0.0, var = 0.0;
            if (mode == Mode::Train) {
                for (std::size_t n = 0; n < s.n; ++n) {
                    const T* src = x.data() + x.index(n, c, 0, 0);
                    for (std::size_t i = 0; i < plane; ++i) mean += static_cast<double>(src[i]);
                }
                mean /= static_cast<double>(count);
                for (std::size_t n = 0; n < s.n; ++n) {
                    const T* src = x.data() + x.index(n, c, 0, 0);
                    for (std::size_t i = 0; i < plane; ++i) {
                        const double d = static_cast<double>(src[i]) - mean;
                        var += d * d;
                    }
                }
                const double unbiased = count > 1 ? var / static_cast<double>(count - 1) : 0.0;
                var /= static_cast<double>(count);
                running_mean_[c] = static_cast<T>(kMomentum * running_mean_[c] + (1.0 - kMomentum) * mean);
                running_var_[c] = static_cast<T>(kMomentum * running_var_[c] + (1.0 - kMomentum) * unbiased);
            } else {
                mean = static_cast<double>(running_mean_[c]);
                var = static_cast<double>(running_var_[c]);
            }
            const double inv = 1.0 / std::sqrt(var + kEpsilon);
            inv_std_[c] = static_cast<T>(inv);
            for (std::size_t n = 0; n < s.n; ++n) {
                const std::size_t off = x.index(n, c, 0, 0);
                for (std::size_t i = 0; i < plane; ++i) {
                    const T xh = static_cast<T>((static_cast<double>(x[off + i]) - mean) * inv);
                    xhat_[off + i] = xh;
                    y[off + i] = gamma_[c] * xh + beta_[c];
                }
            }
        }
        has_cache_ = true;
        return y;
    }

    Tensor4<T> backward(const Tensor4<T>& upstream) override {
        this->require_forward(has_cache_);
        const Shape4 s = xhat_.shape();
        this->check_upstream(s, upstream.shape(), "BatchNorm");
        const std::size_t plane = s.h * s.w;
        const double count = static_cast<double>(s.n * plane);
        Tensor4<T> dx(s);
        for (std::size_t c = 0; c < c_; ++c) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (std::size_t n = 0; n < s.n; ++n) {
                const std::size_t off = xhat_.index(n, c, 0, 0);
                for (std::size_t i = 0; i < plane; ++i) {
                    sum_dy += static_cast<double>(upstream[off + i]);
                    sum_dy_xhat += static_cast<double>(upstream[off + i]) * static_cast<double>(xhat_[off + i]);
                }
            }
            dgamma_[c] += static_cast<T>(sum_dy_xhat);
            dbeta_[c] += static_cast<T>(sum_dy);
            const double g = static_cast<double>(gamma_[c]);
            const double inv = static_cast<double>(inv_std_[c]);
            for (std::size_t n = 0; n < s.n; ++n) {
                const std::size_t off = xhat_.index(n, c, 0, 0);
                for (std::size_t i = 0; i < plane; ++i) {
                    const double dy = static_cast<double>(upstream[off + i]);
                    if (last_mode_ == Mode::Train) {
                        const double xh = static_cast<double>(xhat_[off + i]);
                        dx[off + i] = static_cast<T>(g * inv * (dy - sum_dy / count - xh * sum_dy_xhat / count));
                    } else {
                        dx[off + i] = static_cast<T>(g * inv * dy);
                    }
                }
            }
        }
        return dx;
    }

    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<BatchNorm>(*this); }

    std::vector<std::uint32_t> config() const override { return {static_cast<std::uint32_t>(c_)}; }

    std::vector<ParamRef<T>> params() override {
        return {{"bn.gamma", gamma_, dgamma_}, {"bn.beta", beta_, dbeta_}};
    }
    std::vector<std::span<T>> buffers() override { return {running_mean_, running_var_}; }

    std::span<T> gamma() noexcept { return gamma_; }
    std::span<T> beta() noexcept { return beta_; }
    std::span<const T> running_mean() const noexcept { return running_mean_; }
    std::span<const T> running_var() const noexcept { return running_var_; }

  private:
    std::size_t c_;
    std::vector<T> gamma_, beta_, dgamma_, dbeta_, running_mean_, running_var_;
    Tensor4<T> xhat_;
    std::vector<T> inv_std_;
    Mode last_mode_ = Mode::Train;
    bool has_cache_ = false;
};

template <typename T>
class ReLU final : public Layer<T> {
  public:
    LayerKind kind() const override { return LayerKind::ReLU; }
    Shape4 output_shape(const Shape4& in) const override { return in; }

    Tensor4<T> forward(const Tensor4<T>& x, Mode) override {
        input_ = x;
        has_input_ = true;
        Tensor4<T> y(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
        return y;
    }

    Tensor4<T> backward(const Tensor4<T>& upstream) override {
        this->require_forward(has_input_);
        this->check_upstream(input_.shape(), upstream.shape(), "ReLU");
        Tensor4<T> dx(upstream.shape());
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = input_[i] > T(0) ? upstream[i] : T(0);
        return dx;
    }

    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<ReLU>(*this); }

  private:
    Tensor4<T> input_;
    bool has_input_ = false;
};

/// Non-overlapping max pooling (stride = window); trailing rows/cols that do not fill a window are dropped.
template <typename T>
class MaxPool final : public Layer<T> {
  public:
    MaxPool(std::size_t pool_h, std::size_t pool_w) : ph_(pool_h), pw_(pool_w) {
        if (ph_ == 0 || pw_ == 0) throw ConfigError("MaxPool: window must be positive");
    }

    LayerKind kind() const override { return LayerKind::MaxPool; }

    Shape4 output_shape(const Shape4& in) const override {
        if (in.h < ph_ || in.w < pw_)
            throw ShapeError("MaxPool: input " + in.str() + " smaller than window " + std::to_string(ph_) + "x" +
                             std::to_string(pw_));
        return {in.n, in.c, in.h / ph_, in.w / pw_};
    }

    Tensor4<T> forward(const Tensor4<T>& x, Mode) override {
        const Shape4 out = output_shape(x.shape());
        in_shape_ = x.shape();
        Tensor4<T> y(out);
        argmax_.assign(out.size(), 0);
        for (std::size_t n = 0; n < out.n; ++n)
            for (std::size_t c = 0; c < out.c; ++c)
                for (std::size_t oy = 0; oy < out.h; ++oy)
                    for (std::size_t ox = 0; ox < out.w; ++ox) {
                        std::size_t best = x.index(n, c, oy * ph_, ox * pw_);
                        for (std::size_t i = 0; i < ph_; ++i)
                            for (std::size_t j = 0; j < pw_; ++j) {
                                const std::size_t idx = x.index(n, c, oy * ph_ + i, ox * pw_ + j);
                                if (x[idx] > x[best]) best = idx;
                            }
                        const std::size_t o = y.index(n, c, oy, ox);
                        y[o] = x[best];
                        argmax_[o] = best;
                    }
        has_cache_ = true;
        return y;
    }

    Tensor4<T> backward(const Tensor4<T>& upstream) override {
        this->require_forward(has_cache_);
        this->check_upstream(output_shape(in_shape_), upstream.shape(), "MaxPool");
        Tensor4<T> dx(in_shape_);
        for (std::size_t o = 0; o < upstream.size(); ++o) dx[argmax_[o]] += upstream[o];
        return dx;
    }

    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<MaxPool>(*this); }

    std::vector<std::uint32_t> config() const override {
        return {static_cast<std::uint32_t>(ph_), static_cast<std::uint32_t>(pw_)};
    }

  private:
    std::size_t ph_, pw_;
    Shape4 in_shape_{};
    std::vector<std::size_t> argmax_;
    bool has_cache_ = false;
};

/// Affine map on flattened (C, H, W) features; output shape is N x out x 1 x 1.
template <typename T>
class Dense final : public Layer<T> {
  public:
    Dense(std::size_t in_features, std::size_t out_features)
        : in_(in_features), out_(out_features), weight_(in_features * out_features, T(0)),
          bias_(out_features, T(0)), dweight_(weight_.size(), T(0)), dbias_(out_features, T(0)) {
        if (in_ == 0 || out_ == 0) throw ConfigError("Dense: feature counts must be positive");
    }

    LayerKind kind() const override { return LayerKind::Dense; }

    Shape4 output_shape(const Shape4& in) const override {
        if (in.per_sample() != in_)
            throw ShapeError("Dense: expected " + std::to_string(in_) + " features per sample, got shape " + in.str());
        return {in.n, out_, 1, 1};
    }

    void init(std::mt19937_64& rng) {
        detail::uniform_fill<T>(weight_, std::sqrt(6.0 / static_cast<double>(in_)), rng);
        std::fill(bias_.begin(), bias_.end(), T(0));
    }

    Tensor4<T> forward(const Tensor4<T>& x, Mode) override {
        const Shape4 out = output_shape(x.shape());
        input_ = x;
        has_input_ = true;
        Tensor4<T> y(out);
        detail::ConstMatrixMap<T> xin(x.data(), x.shape().n, in_);
        detail::ConstMatrixMap<T> w(weight_.data(), out_, in_);
        detail::MatrixMap<T> ym(y.data(), out.n, out_);
        ym.noalias() = xin * w.transpose();
        for (std::size_t n = 0; n < out.n; ++n)
            for (std::size_t o = 0; o < out_; ++o) ym(n, o) += bias_[o];
        return y;
    }

    Tensor4<T> backward(const Tensor4<T>& upstream) override {
        this->require_forward(has_input_);
        this->check_upstream(output_shape(input_.shape()), upstream.shape(), "Dense");
        const std::size_t n = input_.shape().n;
        detail::ConstMatrixMap<T> xin(input_.data(), n, in_);
        detail::ConstMatrixMap<T> dy(upstream.data(), n, out_);
        detail::ConstMatrixMap<T> w(weight_.data(), out_, in_);
        detail::MatrixMap<T> dw(dweight_.data(), out_, in_);
        dw.noalias() += dy.transpose() * xin;
        for (std::size_t o = 0; o < out_; ++o) dbias_[o] += dy.col(o).sum();
        Tensor4<T> dx(input_.shape());
        detail::MatrixMap<T> dxm(dx.data(), n, in_);
        dxm.noalias() = dy * w;
        return dx;
    }

    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Dense>(*this); }

    std::vector<std::uint32_t> config() const override {
        return {static_cast<std::uint32_t>(in_), static_cast<std::uint32_t>(out_)};
    }

    std::vector<ParamRef<T>> params() override {
        return {{"dense.weight", weight_, dweight_}, {"dense.bias", bias_, dbias_}};
    }

    std::span<T> weight() noexcept { return weight_; }
    std::span<T> bias() noexcept { return bias_; }

  private:
    std::size_t in_, out_;
    std::vector<T> weight_, bias_, dweight_, dbias_;
    Tensor4<T> input_;
    bool has_input_ = false;
};

/// Row-wise softmax over the channel axis of an N x K x 1 x 1 tensor.
template <typename T>
class Softmax final : public Layer<T> {
  public:
    LayerKind kind() const override { return LayerKind::Softmax; }

    Shape4 output_shape(const Shape4& in) const override {
        if (in.h != 1 || in.w != 1) throw ShapeError("Softmax: expected N x K x 1 x 1, got " + in.str());
        return in;
    }

    Tensor4<T> forward(const Tensor4<T>& x, Mode) override {
        const Shape4 s = output_shape(x.shape());
        Tensor4<T> y(s);
        for (std::size_t n = 0; n < s.n; ++n) {
            auto in = x.sample(n);
            auto out = y.sample(n);
            const T mx = *std::max_element(in.begin(), in.end());
            T sum = T(0);
            for (std::size_t k = 0; k < s.c; ++k) {
                out[k] = std::exp(in[k] - mx);
                sum += out[k];
            }
            for (auto& v : out) v /= sum;
        }
        output_ = y;
        has_output_ = true;
        return y;
    }

    Tensor4<T> backward(const Tensor4<T>& upstream) override {
        this->require_forward(has_output_);
        this->check_upstream(output_.shape(), upstream.shape(), "Softmax");
        Tensor4<T> dx(upstream.shape());
        for (std::size_t n = 0; n < dx.shape().n; ++n) {
            auto y = output_.sample(n);
            auto g = upstream.sample(n);
            auto d = dx.sample(n);
            T dot = T(0);
            for (std::size_t k = 0; k < y.size(); ++k) dot += g[k] * y[k];
            for (std::size_t k = 0; k < y.size(); ++k) d[k] = y[k] * (g[k] - dot);
        }
        return dx;
    }

    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Softmax>(*this); }

  private:
    Tensor4<T> output_;
    bool has_output_ = false;
};

}  // namespace sednoise::nn
