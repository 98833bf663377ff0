#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "sednoise/dataset.hpp"
#include "sednoise/errors.hpp"
#include "sednoise/random.hpp"

namespace sednoise {

struct SyntheticSpec {
    std::size_t n_classes = 4;
    std::size_t clips_per_class = 50;  // training clips per class
    double clean_fraction = 0.15;
    double sample_rate = 16000.0;
    std::uint64_t seed = 0;
    std::size_t test_per_class = 0;    // 0 -> max(2, clips_per_class / 4)
    std::size_t distractor_count = 0;  // 0 -> max(8, 2 * n_classes)
    double min_duration = 0.5;
    double max_duration = 6.0;

    std::size_t effective_test_per_class() const {
        return test_per_class ? test_per_class : std::max<std::size_t>(2, clips_per_class / 4);
    }
    std::size_t effective_distractor_count() const {
        return distractor_count ? distractor_count : std::max<std::size_t>(8, 2 * n_classes);
    }
};

struct SyntheticDataset {
    std::vector<AudioClip> clips;        // same order as manifest.records
    DatasetManifest manifest;
    std::vector<AudioClip> distractors;  // out-of-vocabulary pool
};

namespace synth {

/// Sound family used for class k. Families cycle; each class gets its own frequency region.
enum class Family { Harmonic = 0, BandNoise = 1, AmTone = 2 };

inline Family class_family(std::size_t k) { return static_cast<Family>(k % 3); }

/// Class centre frequencies, log-spaced between 150 Hz and 0.3 * sample_rate.
inline double class_frequency(std::size_t k, std::size_t n_classes, double sample_rate) {
    const double lo = 150.0, hi = 0.3 * sample_rate;
    if (n_classes == 1) return lo;
    return lo * std::pow(hi / lo, static_cast<double>(k) / static_cast<double>(n_classes - 1));
}

/// Phase-rotating oscillator; avoids a sin() call per sample.
class Oscillator {
  public:
    Oscillator(double freq, double sample_rate, double phase)
        : state_(std::polar(1.0, phase)), step_(std::polar(1.0, 2.0 * std::numbers::pi * freq / sample_rate)) {}
    double next() {
        const double v = state_.imag();
        state_ *= step_;
        return v;
    }

  private:
    std::complex<double> state_, step_;
};

inline void finish(std::vector<double>& x, double sample_rate, double peak, std::mt19937_64& rng) {
    std::normal_distribution<double> noise(0.0, 1.0);
    double mx = 0.0;
    for (double v : x) mx = std::max(mx, std::abs(v));
    if (mx > 0)
        for (auto& v : x) v /= mx;
    for (auto& v : x) v += 0.02 * noise(rng);
    const std::size_t fade = std::min<std::size_t>(x.size() / 2, static_cast<std::size_t>(0.01 * sample_rate));
    for (std::size_t i = 0; i < fade; ++i) {
        const double g = static_cast<double>(i) / static_cast<double>(fade);
        x[i] *= g;
        x[x.size() - 1 - i] *= g;
    }
    mx = 0.0;
    for (double v : x) mx = std::max(mx, std::abs(v));
    if (mx > 0)
        for (auto& v : x) v *= peak / mx;
}

inline std::vector<float> to_float(const std::vector<double>& x) {
    return std::vector<float>(x.begin(), x.end());
}

inline std::vector<float> class_waveform(std::size_t k, std::size_t n_classes, double sample_rate, std::size_t n,
                                         std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double f = class_frequency(k, n_classes, sample_rate) * (0.96 + 0.08 * u(rng));
    const double nyq = 0.45 * sample_rate;
    std::vector<double> x(n, 0.0);
    switch (class_family(k)) {
        case Family::Harmonic: {
            for (int h = 1; h <= 3; ++h) {
                if (f * h >= nyq) break;
                Oscillator osc(f * h, sample_rate, 2.0 * std::numbers::pi * u(rng));
                const double a = 1.0 / h;
                for (auto& v : x) v += a * osc.next();
            }
            break;
        }
        case Family::BandNoise: {
            for (int p = 0; p < 8; ++p) {
                const double fp = std::min(nyq, f * (0.85 + 0.3 * u(rng)));
                Oscillator osc(fp, sample_rate, 2.0 * std::numbers::pi * u(rng));
                for (auto& v : x) v += osc.next();
            }
            break;
        }
        case Family::AmTone: {
            Oscillator carrier(f, sample_rate, 2.0 * std::numbers::pi * u(rng));
            Oscillator mod(3.0 + 5.0 * u(rng), sample_rate, 2.0 * std::numbers::pi * u(rng));
            for (auto& v : x) v = (1.0 + 0.8 * mod.next()) * carrier.next();
            break;
        }
    }
    finish(x, sample_rate, 0.3 + 0.5 * u(rng), rng);
    return to_float(x);
}

/// Out-of-vocabulary sounds: sweeps, click trains and broadband bursts.
inline std::vector<float> distractor_waveform(std::size_t index, double sample_rate, std::size_t n,
                                              std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> x(n, 0.0);
    switch (index % 3) {
        case 0: {
            const double f0 = 100.0, f1 = 0.4 * sample_rate;
            double phase = 2.0 * std::numbers::pi * u(rng);
            for (std::size_t i = 0; i < n; ++i) {
                const double t = static_cast<double>(i) / static_cast<double>(n);
                phase += 2.0 * std::numbers::pi * (f0 + (f1 - f0) * t) / sample_rate;
                x[i] = std::sin(phase);
            }
            break;
        }
        case 1: {
            const double rate = 5.0 + 10.0 * u(rng);
            const auto period = static_cast<std::size_t>(sample_rate / rate);
            const auto decay = static_cast<std::size_t>(0.01 * sample_rate) + 1;
            for (std::size_t start = 0; start < n; start += period)
                for (std::size_t j = 0; j < decay * 4 && start + j < n; ++j)
                    x[start + j] = g(rng) * std::exp(-static_cast<double>(j) / static_cast<double>(decay));
            break;
        }
        default: {
            Oscillator env(0.5 + u(rng), sample_rate, 2.0 * std::numbers::pi * u(rng));
            for (auto& v : x) v = g(rng) * (0.6 + 0.4 * env.next());
            break;
        }
    }
    finish(x, sample_rate, 0.3 + 0.5 * u(rng), rng);
    return to_float(x);
}

inline std::string class_name(std::size_t k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "class%02zu", k);
    return buf;
}

}  // namespace synth

/// Deterministic toy dataset: one parametric sound family per class, a clean/noisy train split,
/// an all-clean test split, and a disjoint distractor pool for out-of-vocabulary corruption.
inline SyntheticDataset gen_synthetic_dataset(const SyntheticSpec& spec) {
    if (spec.n_classes < 2) throw ArgumentError("synthetic dataset: need at least 2 classes");
    if (spec.clips_per_class < 2) throw ArgumentError("synthetic dataset: need at least 2 clips per class");
    if (!(spec.clean_fraction > 0.0 && spec.clean_fraction < 1.0))
        throw ArgumentError("synthetic dataset: clean_fraction must lie in (0,1)");
    if (!(spec.sample_rate > 0.0)) throw ArgumentError("synthetic dataset: sample rate must be positive");
    if (!(spec.min_duration > 0.0 && spec.max_duration >= spec.min_duration))
        throw ArgumentError("synthetic dataset: invalid duration range");

    SyntheticDataset ds;
    ds.manifest.audio_root = ".";
    for (std::size_t k = 0; k < spec.n_classes; ++k) ds.manifest.class_names.push_back(synth::class_name(k));

    const auto n_clean = static_cast<std::size_t>(std::lround(spec.clean_fraction * static_cast<double>(spec.clips_per_class)));
    const std::size_t n_test = spec.effective_test_per_class();
    std::uint64_t stream = 0;
    auto make_clip = [&](std::size_t k, const std::string& id) {
        auto rng = seeded_rng(spec.seed, stream++);
        std::uniform_real_distribution<double> dur(spec.min_duration, spec.max_duration);
        const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(dur(rng) * spec.sample_rate)));
        return AudioClip{synth::class_waveform(k, spec.n_classes, spec.sample_rate, n, rng), spec.sample_rate, id};
    };

    for (std::size_t k = 0; k < spec.n_classes; ++k) {
        for (std::size_t i = 0; i < spec.clips_per_class + n_test; ++i) {
            char id[64];
            const bool test = i >= spec.clips_per_class;
            std::snprintf(id, sizeof id, "%s_%s%04zu.wav", synth::class_name(k).c_str(), test ? "test" : "train",
                          test ? i - spec.clips_per_class : i);
            auto clip = make_clip(k, id);
            LabelRecord r;
            r.clip_id = id;
            r.class_index = k;
            r.split = test ? Split::Test : Split::Train;
            r.origin = (test || i < n_clean) ? Origin::Clean : Origin::Noisy;
            r.duration = clip.duration();
            ds.manifest.records.push_back(std::move(r));
            ds.clips.push_back(std::move(clip));
        }
    }

    for (std::size_t d = 0; d < spec.effective_distractor_count(); ++d) {
        auto rng = seeded_rng(spec.seed ^ 0x0DD0D15Cu, d);
        std::uniform_real_distribution<double> dur(2.0, spec.max_duration);
        const auto n = static_cast<std::size_t>(std::lround(dur(rng) * spec.sample_rate));
        char id[32];
        std::snprintf(id, sizeof id, "oov_%04zu.wav", d);
        ds.distractors.push_back({synth::distractor_waveform(d, spec.sample_rate, n, rng), spec.sample_rate, id});
    }
    return ds;
}

inline SyntheticDataset gen_synthetic_dataset(std::size_t n_classes, std::size_t clips_per_class, double clean_fraction,
                                              double sample_rate, std::uint64_t seed) {
    SyntheticSpec spec;
    spec.n_classes = n_classes;
    spec.clips_per_class = clips_per_class;
    spec.clean_fraction = clean_fraction;
    spec.sample_rate = sample_rate;
    spec.seed = seed;
    return gen_synthetic_dataset(spec);
}

}  // namespace sednoise
