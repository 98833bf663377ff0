#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numbers>
#include <string>
#include <vector>

#include <fftw3.h>

#include "sednoise/binary.hpp"
#include "sednoise/dataset.hpp"
#include "sednoise/errors.hpp"

namespace sednoise {

struct FeatureConfig {
    double sample_rate = 44100.0;
    std::size_t fft_size = 2048;
    std::size_t hop = 1024;
    std::size_t n_mels = 96;
    double fmin = 0.0;
    double fmax = 22050.0;
    double log_floor = 1e-10;
    double patch_seconds = 2.0;

    void validate() const {
        if (!(sample_rate > 0)) throw ConfigError("features: sample_rate must be positive");
        if (fft_size < 2) throw ConfigError("features: fft_size must be >= 2");
        if (hop == 0 || hop > fft_size) throw ConfigError("features: hop must lie in [1, fft_size]");
        if (n_mels == 0) throw ConfigError("features: n_mels must be >= 1");
        if (!(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0))
            throw ConfigError("features: need 0 <= fmin < fmax <= sample_rate/2");
        if (!(log_floor > 0.0)) throw ConfigError("features: log_floor must be positive");
        if (!(patch_seconds > 0.0)) throw ConfigError("features: patch_seconds must be positive");
        if (patch_frames() < 1) throw ConfigError("features: patch shorter than one frame");
    }

    std::size_t n_bins() const noexcept { return fft_size / 2 + 1; }
    double frame_rate() const noexcept { return sample_rate / static_cast<double>(hop); }
    std::size_t patch_frames() const {
        return static_cast<std::size_t>(std::lround(patch_seconds * frame_rate()));
    }

    bool operator==(const FeatureConfig&) const = default;
};

/// Row-major (fft_size/2 + 1) x n_frames power spectrogram.
struct PowerSpectrogram {
    std::size_t n_bins = 0, n_frames = 0;
    std::vector<double> values;

    double at(std::size_t bin, std::size_t frame) const { return values[bin * n_frames + frame]; }
};

/// Row-major n_mels x n_frames natural-log mel energies.
struct LogMelMatrix {
    std::size_t n_mels = 0, n_frames = 0;
    double frame_rate = 0.0;
    std::string clip_id;
    std::vector<float> values;

    float at(std::size_t mel, std::size_t frame) const { return values[mel * n_frames + frame]; }
    bool operator==(const LogMelMatrix&) const = default;
};

struct LogMelPatch {
    std::size_t n_mels = 0, n_frames = 0;
    std::string clip_id;
    std::size_t label = 0;
    std::size_t patch_index = 0;
    std::vector<float> values;

    float at(std::size_t mel, std::size_t frame) const { return values[mel * n_frames + frame]; }
};

namespace detail {

// FFTW planning is not thread-safe; execution on distinct plans is.
inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

class RealFft {
  public:
    explicit RealFft(std::size_t n) : n_(n) {
        in_ = static_cast<double*>(fftw_malloc(sizeof(double) * n));
        out_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)));
        std::lock_guard<std::mutex> lock(fftw_planner_mutex());
        plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
    }
    ~RealFft() {
        {
            std::lock_guard<std::mutex> lock(fftw_planner_mutex());
            fftw_destroy_plan(plan_);
        }
        fftw_free(in_);
        fftw_free(out_);
    }
    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;

    double* input() noexcept { return in_; }
    void execute() { fftw_execute(plan_); }
    double power(std::size_t bin) const noexcept { return out_[bin][0] * out_[bin][0] + out_[bin][1] * out_[bin][1]; }

  private:
    std::size_t n_;
    double* in_ = nullptr;
    fftw_complex* out_ = nullptr;
    fftw_plan plan_ = nullptr;
};

inline std::size_t reflect_index(std::size_t i, std::size_t len) {
    if (len == 1) return 0;
    const std::size_t period = 2 * (len - 1);
    const std::size_t m = i % period;
    return m < len ? m : period - m;
}

}  // namespace detail

/// Periodic Hann window.
inline std::vector<double> hann_window(std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i)
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    return w;
}

inline std::size_t frame_count(std::size_t n_samples, std::size_t hop) { return (n_samples + hop - 1) / hop; }

/// Frame t covers samples [t*hop, t*hop + fft_size); samples past the end are reflected.
inline PowerSpectrogram stft_power(const AudioClip& clip, const FeatureConfig& cfg) {
    cfg.validate();
    clip.validate();
    if (clip.sample_rate != cfg.sample_rate)
        throw ConfigError("clip " + clip.clip_id + ": sample rate " + std::to_string(clip.sample_rate) +
                          " does not match feature config " + std::to_string(cfg.sample_rate));
    const std::size_t len = clip.samples.size();
    PowerSpectrogram s;
    s.n_bins = cfg.n_bins();
    s.n_frames = frame_count(len, cfg.hop);
    s.values.assign(s.n_bins * s.n_frames, 0.0);
    const auto window = hann_window(cfg.fft_size);
    detail::RealFft fft(cfg.fft_size);
    for (std::size_t t = 0; t < s.n_frames; ++t) {
        double* buf = fft.input();
        const std::size_t start = t * cfg.hop;
        for (std::size_t i = 0; i < cfg.fft_size; ++i) {
            const std::size_t idx = start + i < len ? start + i : detail::reflect_index(start + i, len);
            buf[i] = window[i] * static_cast<double>(clip.samples[idx]);
        }
        fft.execute();
        for (std::size_t b = 0; b < s.n_bins; ++b) s.values[b * s.n_frames + t] = fft.power(b);
    }
    return s;
}

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

/// Centre frequencies (Hz) of the n_mels filters plus the two outer edges.
inline std::vector<double> mel_band_edges(const FeatureConfig& cfg) {
    const double lo = hz_to_mel(cfg.fmin), hi = hz_to_mel(cfg.fmax);
    std::vector<double> edges(cfg.n_mels + 2);
    for (std::size_t i = 0; i < edges.size(); ++i)
        edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1));
    return edges;
}

/// Row-major n_mels x (fft_size/2 + 1) triangular filterbank on the HTK mel scale, peak 1.
inline std::vector<double> mel_filterbank(const FeatureConfig& cfg) {
    cfg.validate();
    const std::size_t n_bins = cfg.n_bins();
    const auto edges = mel_band_edges(cfg);
    std::vector<double> fb(cfg.n_mels * n_bins, 0.0);
    for (std::size_t j = 0; j < cfg.n_mels; ++j) {
        const double left = edges[j], centre = edges[j + 1], right = edges[j + 2];
        bool any = false;
        for (std::size_t b = 0; b < n_bins; ++b) {
            const double f = static_cast<double>(b) * cfg.sample_rate / static_cast<double>(cfg.fft_size);
            const double w = std::max(0.0, std::min((f - left) / (centre - left), (right - f) / (right - centre)));
            fb[j * n_bins + b] = w;
            any = any || w > 0.0;
        }
        if (!any)
            throw ConfigError("mel filterbank: filter " + std::to_string(j) + " covers no FFT bin; reduce n_mels (" +
                              std::to_string(cfg.n_mels) + ") or increase fft_size (" + std::to_string(cfg.fft_size) + ")");
    }
    return fb;
}

/// log(max(filterbank * power, log_floor)) from a precomputed filterbank.
inline LogMelMatrix logmel_from_power(const PowerSpectrogram& p, const std::vector<double>& fb, const FeatureConfig& cfg,
                                      const std::string& clip_id) {
    LogMelMatrix m;
    m.n_mels = cfg.n_mels;
    m.n_frames = p.n_frames;
    m.frame_rate = cfg.frame_rate();
    m.clip_id = clip_id;
    m.values.assign(m.n_mels * m.n_frames, 0.0f);
    std::vector<double> acc(p.n_frames);
    for (std::size_t j = 0; j < cfg.n_mels; ++j) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t b = 0; b < p.n_bins; ++b) {
            const double w = fb[j * p.n_bins + b];
            if (w == 0.0) continue;
            const double* row = p.values.data() + b * p.n_frames;
            for (std::size_t t = 0; t < p.n_frames; ++t) acc[t] += w * row[t];
        }
        for (std::size_t t = 0; t < p.n_frames; ++t)
            m.values[j * m.n_frames + t] = static_cast<float>(std::log(std::max(acc[t], cfg.log_floor)));
    }
    return m;
}

inline LogMelMatrix extract_logmel(const AudioClip& clip, const FeatureConfig& cfg) {
    return logmel_from_power(stft_power(clip, cfg), mel_filterbank(cfg), cfg, clip.clip_id);
}

/// Number of patches patchify() emits for a clip of n_frames frames.
inline std::size_t patch_count(std::size_t n_frames, std::size_t patch_frames) {
    return n_frames < patch_frames ? 1 : n_frames / patch_frames;
}

/// Fixed-length patches inheriting the clip label. Short inputs are tiled cyclically; long inputs
/// are cut into consecutive non-overlapping windows and the trailing remainder is dropped.
inline std::vector<LogMelPatch> patchify(const LogMelMatrix& m, std::size_t label, const FeatureConfig& cfg) {
    const std::size_t pf = cfg.patch_frames();
    if (pf < 1) throw ConfigError("patchify: patch_frames must be >= 1");
    if (m.n_frames == 0 || m.n_mels == 0) throw ArgumentError("patchify: empty log-mel matrix for " + m.clip_id);
    const std::size_t count = patch_count(m.n_frames, pf);
    std::vector<LogMelPatch> out;
    out.reserve(count);
    for (std::size_t p = 0; p < count; ++p) {
        LogMelPatch patch{m.n_mels, pf, m.clip_id, label, p, std::vector<float>(m.n_mels * pf)};
        for (std::size_t j = 0; j < m.n_mels; ++j)
            for (std::size_t t = 0; t < pf; ++t) {
                const std::size_t src = m.n_frames < pf ? t % m.n_frames : p * pf + t;
                patch.values[j * pf + t] = m.values[j * m.n_frames + src];
            }
        out.push_back(std::move(patch));
    }
    return out;
}

// Feature cache: little-endian u32 n_mels, u32 n_frames, f64 frame_rate, then n_mels*n_frames f32, row-major.
inline std::string encode_feature_cache(const LogMelMatrix& m) {
    std::string out;
    out.reserve(16 + 4 * m.values.size());
    binary::put(out, static_cast<std::uint32_t>(m.n_mels));
    binary::put(out, static_cast<std::uint32_t>(m.n_frames));
    binary::put_f64(out, m.frame_rate);
    for (float v : m.values) binary::put_f32(out, v);
    return out;
}

inline LogMelMatrix decode_feature_cache(const std::string& bytes, const std::string& source, const std::string& clip_id) {
    binary::Reader in(bytes, source);
    LogMelMatrix m;
    m.clip_id = clip_id;
    m.n_mels = in.get<std::uint32_t>();
    m.n_frames = in.get<std::uint32_t>();
    m.frame_rate = in.get_f64();
    if (in.remaining() != 4 * m.n_mels * m.n_frames) throw FormatError(source + ": feature cache size mismatch");
    m.values.resize(m.n_mels * m.n_frames);
    for (auto& v : m.values) v = in.get_f32();
    return m;
}

inline void write_feature_cache(const std::string& path, const LogMelMatrix& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write feature cache " + path);
    const auto bytes = encode_feature_cache(m);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline LogMelMatrix read_feature_cache(const std::string& path, const std::string& clip_id) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open feature cache " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_feature_cache(bytes, path, clip_id);
}

}  // namespace sednoise
