#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <string>

#include "sednoise/errors.hpp"

namespace sednoise::binary {

template <typename U>
U byteswap(U v) {
    char b[sizeof(U)];
    std::memcpy(b, &v, sizeof(U));
    std::reverse(b, b + sizeof(U));
    std::memcpy(&v, b, sizeof(U));
    return v;
}

/// Appends `v` in little-endian byte order.
template <typename U>
void put(std::string& out, U v) {
    if constexpr (std::endian::native == std::endian::big) v = byteswap(v);
    char buf[sizeof(U)];
    std::memcpy(buf, &v, sizeof(U));
    out.append(buf, sizeof(U));
}

inline void put_f32(std::string& out, float v) { put(out, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::string& out, double v) { put(out, std::bit_cast<std::uint64_t>(v)); }

/// Sequential little-endian reader over a byte buffer.
class Reader {
  public:
    Reader(const std::string& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

    template <typename U>
    U get() {
        if (pos_ + sizeof(U) > bytes_.size()) throw FormatError(source_ + ": unexpected end of file");
        U v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
        pos_ += sizeof(U);
        if constexpr (std::endian::native == std::endian::big) v = byteswap(v);
        return v;
    }
    float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
    double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }

    std::string get_bytes(std::size_t n) {
        if (pos_ + n > bytes_.size()) throw FormatError(source_ + ": unexpected end of file");
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
    const std::string& source() const noexcept { return source_; }

  private:
    const std::string& bytes_;
    std::string source_;
    std::size_t pos_ = 0;
};

}  // namespace sednoise::binary
