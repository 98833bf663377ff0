#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "sednoise/features.hpp"
#include "test_util.hpp"

using namespace sednoise;

namespace {

FeatureConfig small_config() {
    FeatureConfig c;
    c.sample_rate = 16000;
    c.fft_size = 512;
    c.hop = 256;
    c.n_mels = 40;
    c.fmax = 8000;
    c.patch_seconds = 1.0;
    return c;
}

AudioClip tone(double freq, double seconds, double sr, double amp = 0.5) {
    AudioClip c{{}, sr, "tone.wav"};
    const auto n = static_cast<std::size_t>(seconds * sr);
    for (std::size_t i = 0; i < n; ++i)
        c.samples.push_back(static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / sr)));
    return c;
}

LogMelMatrix ramp_matrix(std::size_t n_mels, std::size_t n_frames) {
    LogMelMatrix m{n_mels, n_frames, 10.0, "m", std::vector<float>(n_mels * n_frames)};
    for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] = static_cast<float>(i);
    return m;
}

}  // namespace

TEST(Config, DefaultPatchFrames) {
    FeatureConfig c;
    c.validate();
    EXPECT_EQ(c.patch_frames(), 86u);
    EXPECT_EQ(c.n_bins(), 1025u);
    c.hop = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = FeatureConfig{};
    c.fmax = 30000;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Stft, FrameCountAndSilence) {
    const auto cfg = small_config();
    AudioClip z{std::vector<float>(16000, 0.0f), 16000, "z"};
    const auto p = stft_power(z, cfg);
    EXPECT_EQ(p.n_frames, 63u);  // ceil(16000 / 256)
    EXPECT_EQ(p.n_bins, 257u);
    for (double v : p.values) EXPECT_EQ(v, 0.0);
    AudioClip one{{0.5f}, 16000, "one"};
    EXPECT_EQ(stft_power(one, cfg).n_frames, 1u);
}

TEST(Stft, SampleRateMismatch) {
    AudioClip c{std::vector<float>(100, 0.1f), 22050, "c"};
    EXPECT_THROW(stft_power(c, small_config()), ConfigError);
}

TEST(Stft, BinCentredToneArgmax) {
    const auto cfg = small_config();
    for (std::size_t k : {5u, 32u, 100u, 200u}) {
        const auto p = stft_power(tone(static_cast<double>(k) * 16000.0 / 512.0, 1.0, 16000), cfg);
        const std::size_t interior = (16000 - 512) / 256;
        for (std::size_t t = 0; t <= interior; ++t) {
            std::size_t best = 0;
            for (std::size_t b = 1; b < p.n_bins; ++b)
                if (p.at(b, t) > p.at(best, t)) best = b;
            EXPECT_EQ(best, k) << "frame " << t;
        }
    }
}

TEST(Stft, Parseval) {
    const auto cfg = small_config();
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    AudioClip c{std::vector<float>(4000), 16000, "r"};
    for (auto& s : c.samples) s = u(rng);
    const auto p = stft_power(c, cfg);
    const std::size_t n = cfg.fft_size;
    for (std::size_t t = 0; t < p.n_frames; ++t) {
        // Windowed energy of the frame, reflecting indices past the end.
        double energy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t idx = t * cfg.hop + i;
            const std::size_t len = c.samples.size(), period = 2 * (len - 1);
            if (idx >= len) {
                idx %= period;
                if (idx >= len) idx = period - idx;
            }
            const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
            energy += std::pow(w * c.samples[idx], 2);
        }
        double spectral = 0.0;
        for (std::size_t b = 0; b < p.n_bins; ++b) spectral += (b == 0 || b == n / 2 ? 1.0 : 2.0) * p.at(b, t);
        spectral /= static_cast<double>(n);
        EXPECT_NEAR(spectral, energy, 1e-6 * energy);
    }
}

TEST(Mel, HtkScale) {
    EXPECT_NEAR(hz_to_mel(700.0), 2595.0 * std::log10(2.0), 1e-12);
    EXPECT_NEAR(mel_to_hz(hz_to_mel(1234.5)), 1234.5, 1e-9);
}

TEST(Mel, FilterShape) {
    const auto cfg = small_config();
    const auto fb = mel_filterbank(cfg);
    const auto edges = mel_band_edges(cfg);
    const std::size_t nb = cfg.n_bins();
    for (std::size_t j = 0; j < cfg.n_mels; ++j) {
        std::size_t peak = 0;
        for (std::size_t b = 0; b < nb; ++b) {
            const double w = fb[j * nb + b];
            EXPECT_GE(w, 0.0);
            const double f = static_cast<double>(b) * cfg.sample_rate / static_cast<double>(cfg.fft_size);
            if (f <= edges[j] || f >= edges[j + 2]) {
                EXPECT_EQ(w, 0.0);
            }
            if (w > fb[j * nb + peak]) peak = b;
        }
        // rises up to the peak and falls after it
        for (std::size_t b = 1; b <= peak; ++b) EXPECT_LE(fb[j * nb + b - 1], fb[j * nb + b]);
        for (std::size_t b = peak + 1; b < nb; ++b) EXPECT_LE(fb[j * nb + b], fb[j * nb + b - 1]);
    }
    for (std::size_t b = 0; b < nb; ++b) {
        const double f = static_cast<double>(b) * cfg.sample_rate / static_cast<double>(cfg.fft_size);
        if (f <= edges[1] || f >= edges[cfg.n_mels]) continue;
        double s = 0.0;
        for (std::size_t j = 0; j < cfg.n_mels; ++j) s += fb[j * nb + b];
        EXPECT_GT(s, 0.0);
    }
}

TEST(Mel, ToneAtCentreSelectsFilter) {
    const auto cfg = small_config();
    const auto fb = mel_filterbank(cfg);
    const auto edges = mel_band_edges(cfg);
    const std::size_t nb = cfg.n_bins();
    for (std::size_t j : {10u, 20u, 39u}) {
        // Spectrum of a pure tone at the centre of filter j: a single line at its frequency,
        // linearly split between the two neighbouring bins.
        const double pos = edges[j + 1] * static_cast<double>(cfg.fft_size) / cfg.sample_rate;
        const auto lo = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(lo);
        std::vector<double> spec(nb, 0.0);
        spec[lo] = 1.0 - frac;
        if (lo + 1 < nb) spec[lo + 1] = frac;
        std::size_t best = 0;
        double best_v = -1.0;
        for (std::size_t i = 0; i < cfg.n_mels; ++i) {
            double v = 0.0;
            for (std::size_t b = 0; b < nb; ++b) v += fb[i * nb + b] * spec[b];
            if (v > best_v) {
                best_v = v;
                best = i;
            }
        }
        EXPECT_EQ(best, j);
    }
}

TEST(Mel, TooManyBandsForResolution) {
    auto cfg = small_config();
    cfg.fft_size = 64;
    cfg.hop = 32;
    cfg.n_mels = 96;
    EXPECT_THROW(mel_filterbank(cfg), ConfigError);
}

TEST(LogMel, SilenceHitsFloor) {
    const auto cfg = small_config();
    const auto m = extract_logmel(AudioClip{std::vector<float>(3000, 0.0f), 16000, "z"}, cfg);
    for (float v : m.values) EXPECT_EQ(v, static_cast<float>(std::log(1e-10)));
}

TEST(LogMel, ScalingAddsTwoLnTen) {
    const auto cfg = small_config();
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<float> u(-0.05f, 0.05f);
    AudioClip a{std::vector<float>(8000), 16000, "a"};
    for (auto& s : a.samples) s = u(rng);
    AudioClip b = a;
    for (auto& s : b.samples) s *= 10.0f;
    const auto ma = extract_logmel(a, cfg), mb = extract_logmel(b, cfg);
    const double floor = std::log(cfg.log_floor);
    for (std::size_t i = 0; i < ma.values.size(); ++i) {
        if (ma.values[i] <= floor + 1e-3) continue;
        EXPECT_NEAR(mb.values[i] - ma.values[i], 2.0 * std::log(10.0), 1e-4);
    }
}

TEST(LogMel, DeterministicAndBounded) {
    const auto cfg = small_config();
    const auto c = tone(440.0, 0.7, 16000);
    const auto a = extract_logmel(c, cfg), b = extract_logmel(c, cfg);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.n_mels, 40u);
    EXPECT_DOUBLE_EQ(a.frame_rate, 16000.0 / 256.0);
    for (float v : a.values) EXPECT_GE(v, static_cast<float>(std::log(cfg.log_floor)));
}

TEST(Patchify, ExactLength) {
    auto cfg = small_config();
    const std::size_t pf = cfg.patch_frames();
    EXPECT_EQ(pf, 63u);  // round(1.0 * 16000 / 256)
    const auto m = ramp_matrix(3, pf);
    const auto p = patchify(m, 4, cfg);
    ASSERT_EQ(p.size(), 1u);
    EXPECT_EQ(p[0].values, m.values);
    EXPECT_EQ(p[0].label, 4u);
}

TEST(Patchify, LongClipDropsRemainder) {
    const auto cfg = small_config();
    const std::size_t pf = cfg.patch_frames();
    const auto n = static_cast<std::size_t>(std::lround(2.3 * static_cast<double>(pf)));
    const auto m = ramp_matrix(2, n);
    const auto p = patchify(m, 1, cfg);
    ASSERT_EQ(p.size(), 2u);
    for (std::size_t k = 0; k < 2; ++k) {
        EXPECT_EQ(p[k].patch_index, k);
        for (std::size_t j = 0; j < 2; ++j)
            for (std::size_t t = 0; t < pf; ++t) EXPECT_EQ(p[k].at(j, t), m.at(j, k * pf + t));
    }
}

TEST(Patchify, ShortClipTilesCyclically) {
    const auto cfg = small_config();
    const std::size_t pf = cfg.patch_frames();
    const auto n = static_cast<std::size_t>(std::lround(0.4 * static_cast<double>(pf)));
    const auto m = ramp_matrix(3, n);
    const auto p = patchify(m, 0, cfg);
    ASSERT_EQ(p.size(), 1u);
    EXPECT_EQ(p[0].n_frames, pf);
    for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t t = 0; t < pf; ++t) EXPECT_EQ(p[0].at(j, t), m.at(j, t % n));
}

TEST(Patchify, CountRuleForAllLengths) {
    const auto cfg = small_config();
    const std::size_t pf = cfg.patch_frames();
    for (std::size_t n = 1; n < 5 * pf; n += 7) {
        const auto p = patchify(ramp_matrix(2, n), 0, cfg);
        EXPECT_EQ(p.size(), n < pf ? 1 : n / pf);
        for (const auto& q : p) {
            EXPECT_EQ(q.n_frames, pf);
            EXPECT_EQ(q.n_mels, 2u);
            EXPECT_EQ(q.values.size(), 2 * pf);
        }
    }
}

TEST(Cache, RoundTripAndCorruption) {
    testutil::TempDir dir("cache");
    const auto m = extract_logmel(tone(1000.0, 0.5, 16000), small_config());
    write_feature_cache(dir.str("t.logmel"), m);
    EXPECT_EQ(read_feature_cache(dir.str("t.logmel"), m.clip_id), m);
    const auto bytes = encode_feature_cache(m);
    EXPECT_EQ(bytes.size(), 16 + 4 * m.values.size());
    EXPECT_EQ(static_cast<unsigned char>(bytes[0]), 40u);  // little-endian n_mels
    EXPECT_THROW(decode_feature_cache(bytes.substr(0, bytes.size() - 1), "x", "t"), FormatError);
    EXPECT_THROW(read_feature_cache(dir.str("missing"), "t"), DataError);
}
