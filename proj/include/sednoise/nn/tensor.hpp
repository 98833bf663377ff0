#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sednoise/errors.hpp"

namespace sednoise::nn {

struct Shape4 {
    std::size_t n = 1, c = 1, h = 1, w = 1;

    std::size_t size() const noexcept { return n * c * h * w; }
    std::size_t per_sample() const noexcept { return c * h * w; }
    bool operator==(const Shape4&) const = default;

    std::string str() const {
        return "[" + std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) +
               "x" + std::to_string(w) + "]";
    }
};

/// Dense NCHW tensor with contiguous row-major storage.
template <typename T>
class Tensor4 {
  public:
    Tensor4() = default;
    explicit Tensor4(Shape4 s, T fill = T(0)) : shape_(s), data_(s.size(), fill) {
        if (s.n == 0 || s.c == 0 || s.h == 0 || s.w == 0)
            throw ShapeError("tensor dimensions must be >= 1, got " + s.str());
    }
    Tensor4(Shape4 s, std::vector<T> values) : shape_(s), data_(std::move(values)) {
        if (data_.size() != s.size())
            throw ShapeError("tensor storage size " + std::to_string(data_.size()) +
                             " does not match shape " + s.str());
    }

    const Shape4& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> span() noexcept { return data_; }
    std::span<const T> span() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    std::size_t index(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
        return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }
    T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
        return data_[index(n, c, h, w)];
    }
    const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
        return data_[index(n, c, h, w)];
    }

    std::span<T> sample(std::size_t n) noexcept {
        return std::span<T>(data_).subspan(n * shape_.per_sample(), shape_.per_sample());
    }
    std::span<const T> sample(std::size_t n) const noexcept {
        return std::span<const T>(data_).subspan(n * shape_.per_sample(), shape_.per_sample());
    }

  private:
    Shape4 shape_{};
    std::vector<T> data_;
};

}  // namespace sednoise::nn
