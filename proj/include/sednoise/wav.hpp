#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "sednoise/errors.hpp"

namespace sednoise::wav {

struct PcmData {
    std::vector<float> samples;  // [-1, 1]
    std::uint32_t sample_rate = 0;
};

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}
inline std::uint16_t read_u16(const unsigned char* p) { return std::uint16_t(p[0] | (p[1] << 8)); }

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xFF);
}
inline void put_u16(std::string& out, std::uint16_t v) {
    out += static_cast<char>(v & 0xFF);
    out += static_cast<char>((v >> 8) & 0xFF);
}

}  // namespace detail

/// Decodes a RIFF/WAVE buffer holding mono 16-bit PCM.
inline PcmData decode(const std::string& bytes, const std::string& source) {
    const auto* b = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() < 12 || std::memcmp(b, "RIFF", 4) != 0 || std::memcmp(b + 8, "WAVE", 4) != 0)
        throw FormatError(source + ": not a RIFF/WAVE file");
    std::size_t pos = 12;
    bool have_fmt = false;
    std::uint16_t channels = 0, bits = 0, format = 0;
    PcmData out;
    while (pos + 8 <= bytes.size()) {
        const std::uint32_t size = detail::read_u32(b + pos + 4);
        const std::size_t body = pos + 8;
        if (body + size > bytes.size()) throw FormatError(source + ": truncated chunk");
        if (std::memcmp(b + pos, "fmt ", 4) == 0) {
            if (size < 16) throw FormatError(source + ": fmt chunk too short");
            format = detail::read_u16(b + body);
            channels = detail::read_u16(b + body + 2);
            out.sample_rate = detail::read_u32(b + body + 4);
            bits = detail::read_u16(b + body + 14);
            have_fmt = true;
        } else if (std::memcmp(b + pos, "data", 4) == 0) {
            if (!have_fmt) throw FormatError(source + ": data chunk before fmt chunk");
            if (format != 1 || bits != 16) throw FormatError(source + ": only 16-bit PCM is supported");
            if (channels != 1)
                throw FormatError(source + ": expected mono audio, found " + std::to_string(channels) + " channels");
            if (out.sample_rate == 0) throw FormatError(source + ": sample rate is zero");
            const std::size_t n = size / 2;
            out.samples.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                const auto v = static_cast<std::int16_t>(detail::read_u16(b + body + 2 * i));
                out.samples[i] = static_cast<float>(v) / 32768.0f;
            }
            if (out.samples.empty()) throw FormatError(source + ": no samples");
            return out;
        }
        pos = body + size + (size & 1u);
    }
    throw FormatError(source + ": missing data chunk");
}

inline PcmData read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open audio file " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode(bytes, path);
}

inline std::string encode(const std::vector<float>& samples, std::uint32_t sample_rate) {
    std::string out;
    const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
    out.reserve(44 + data_bytes);
    out += "RIFF";
    detail::put_u32(out, 36 + data_bytes);
    out += "WAVEfmt ";
    detail::put_u32(out, 16);
    detail::put_u16(out, 1);
    detail::put_u16(out, 1);
    detail::put_u32(out, sample_rate);
    detail::put_u32(out, sample_rate * 2);
    detail::put_u16(out, 2);
    detail::put_u16(out, 16);
    out += "data";
    detail::put_u32(out, data_bytes);
    for (float s : samples) {
        const long q = std::clamp(std::lround(static_cast<double>(s) * 32768.0), -32768L, 32767L);
        detail::put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    }
    return out;
}

inline void write(const std::string& path, const std::vector<float>& samples, std::uint32_t sample_rate) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write audio file " + path);
    const auto bytes = encode(samples, sample_rate);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace sednoise::wav
