#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sednoise/csv.hpp"
#include "sednoise/dataset.hpp"
#include "sednoise/errors.hpp"
#include "sednoise/random.hpp"

namespace sednoise {

enum class NoiseType : std::uint8_t { Correct, IncorrectOOV, IncompleteOOV, IncorrectIV, IncompleteIV, DensityNoise };

inline constexpr std::array<NoiseType, 6> kNoiseTypes{NoiseType::Correct,     NoiseType::IncorrectOOV,
                                                      NoiseType::IncompleteOOV, NoiseType::IncorrectIV,
                                                      NoiseType::IncompleteIV, NoiseType::DensityNoise};

inline std::string to_string(NoiseType t) {
    switch (t) {
        case NoiseType::Correct: return "correct";
        case NoiseType::IncorrectOOV: return "incorrect_oov";
        case NoiseType::IncompleteOOV: return "incomplete_oov";
        case NoiseType::IncorrectIV: return "incorrect_iv";
        case NoiseType::IncompleteIV: return "incomplete_iv";
        case NoiseType::DensityNoise: return "density";
    }
    return "?";
}

inline NoiseType noise_type_from_string(const std::string& s) {
    for (auto t : kNoiseTypes)
        if (to_string(t) == s) return t;
    throw FormatError("unknown noise type '" + s + "'");
}

/// Display names for the report table.
inline std::string display_name(NoiseType t) {
    switch (t) {
        case NoiseType::Correct: return "Correct";
        case NoiseType::IncorrectOOV: return "Incorrect/OOV";
        case NoiseType::IncompleteOOV: return "Incomplete/OOV";
        case NoiseType::IncorrectIV: return "Incorrect/IV";
        case NoiseType::IncompleteIV: return "Incomplete/IV";
        case NoiseType::DensityNoise: return "Label density";
    }
    return "?";
}

struct NoiseSpec {
    double p_incorrect_oov = 0.0;
    double p_incomplete_oov = 0.0;
    double p_incorrect_iv = 0.0;
    double p_incomplete_iv = 0.0;
    double p_density = 0.0;
    std::uint64_t seed = 0;
    // Density noise appends at least 2 * patch_seconds of distractor audio, plus a margin that
    // absorbs frame rounding so one whole patch always falls inside the appended part.
    double patch_seconds = 2.0;
    double density_margin_seconds = 1.0;

    double total() const { return p_incorrect_oov + p_incomplete_oov + p_incorrect_iv + p_incomplete_iv + p_density; }

    double probability(NoiseType t) const {
        switch (t) {
            case NoiseType::Correct: return 1.0 - total();
            case NoiseType::IncorrectOOV: return p_incorrect_oov;
            case NoiseType::IncompleteOOV: return p_incomplete_oov;
            case NoiseType::IncorrectIV: return p_incorrect_iv;
            case NoiseType::IncompleteIV: return p_incomplete_iv;
            case NoiseType::DensityNoise: return p_density;
        }
        return 0.0;
    }

    void validate() const {
        for (double p : {p_incorrect_oov, p_incomplete_oov, p_incorrect_iv, p_incomplete_iv, p_density})
            if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("noise spec: probabilities must lie in [0,1]");
        if (total() > 1.0 + 1e-12) throw ConfigError("noise spec: probabilities sum to more than 1");
        if (!(patch_seconds > 0.0) || density_margin_seconds < 0.0)
            throw ConfigError("noise spec: invalid density duration parameters");
    }

    bool needs_distractors() const { return p_incorrect_oov > 0 || p_incomplete_oov > 0 || p_density > 0; }
};

/// Noise-type mix observed in the analysed noisy data, with density noise as a separate 1%
/// category (ambiguous labels are not synthesised).
inline NoiseSpec table1_noise_spec(std::uint64_t seed = 0) {
    NoiseSpec s;
    s.p_incorrect_oov = 0.38;
    s.p_incomplete_oov = 0.10;
    s.p_incorrect_iv = 0.06;
    s.p_incomplete_iv = 0.05;
    s.p_density = 0.01;
    s.seed = seed;
    return s;
}

struct ProvenanceEntry {
    std::string clip_id;
    NoiseType noise_type = NoiseType::Correct;
    std::optional<std::size_t> original_label;  // true in-vocabulary class, none for incorrect/OOV
    std::vector<std::string> source_clip_ids;
    std::size_t original_samples = 0;           // length before corruption

    bool operator==(const ProvenanceEntry&) const = default;
};

using ProvenanceLog = std::vector<ProvenanceEntry>;

struct InjectionResult {
    std::vector<AudioClip> clips;
    std::vector<LabelRecord> records;
    ProvenanceLog provenance;
};

namespace noise_detail {

inline double rms(const std::vector<float>& x) {
    double s = 0.0;
    for (float v : x) s += static_cast<double>(v) * static_cast<double>(v);
    return x.empty() ? 0.0 : std::sqrt(s / static_cast<double>(x.size()));
}

}  // namespace noise_detail

/// Sample-wise sum of `base` and `other` (looped/truncated to base's length), each scaled to
/// the same RMS, then peak-normalised to 0.9.
inline std::vector<float> mix_equal_rms(const std::vector<float>& base, const std::vector<float>& other) {
    if (base.empty() || other.empty()) throw ArgumentError("mix: empty source");
    const double ra = noise_detail::rms(base);
    std::vector<double> b(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) b[i] = other[i % other.size()];
    double rb = 0.0;
    for (double v : b) rb += v * v;
    rb = std::sqrt(rb / static_cast<double>(b.size()));
    const double target = ra > 0 ? ra : (rb > 0 ? rb : 1.0);
    const double ga = ra > 0 ? target / ra : 0.0;
    const double gb = rb > 0 ? target / rb : 0.0;
    std::vector<double> mix(base.size());
    double peak = 0.0;
    for (std::size_t i = 0; i < base.size(); ++i) {
        mix[i] = ga * static_cast<double>(base[i]) + gb * b[i];
        peak = std::max(peak, std::abs(mix[i]));
    }
    const double g = peak > 0 ? 0.9 / peak : 0.0;
    std::vector<float> out(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) out[i] = static_cast<float>(mix[i] * g);
    return out;
}

/// Corrupts noisy-origin records according to `spec`. Each record gets one independent draw from a
/// generator keyed on (seed, record index). Clean-origin records pass through untouched and are
/// logged as correct.
inline InjectionResult inject_noise(const std::vector<AudioClip>& clips, const std::vector<LabelRecord>& records,
                                    const NoiseSpec& spec, const std::vector<AudioClip>& distractor_pool,
                                    std::size_t n_classes) {
    spec.validate();
    if (clips.size() != records.size()) throw ArgumentError("inject_noise: clips and records differ in length");
    if (spec.needs_distractors() && distractor_pool.empty())
        throw ArgumentError("inject_noise: distractor pool is empty but out-of-vocabulary or density noise is requested");
    if (spec.p_incorrect_iv > 0 && n_classes < 2) throw ArgumentError("inject_noise: relabelling needs >= 2 classes");
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].clip_id != clips[i].clip_id)
            throw ArgumentError("inject_noise: clip/record order mismatch at " + records[i].clip_id);
        if (records[i].class_index >= n_classes)
            throw ArgumentError("inject_noise: label out of range for " + records[i].clip_id);
    }

    InjectionResult out{clips, records, {}};
    out.provenance.reserve(records.size());
    const std::array<NoiseType, 5> order{NoiseType::IncorrectOOV, NoiseType::IncompleteOOV, NoiseType::IncorrectIV,
                                         NoiseType::IncompleteIV, NoiseType::DensityNoise};

    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        const auto& clip = clips[i];
        ProvenanceEntry entry{rec.clip_id, NoiseType::Correct, rec.class_index, {}, clip.samples.size()};
        if (rec.origin == Origin::Clean) {
            out.provenance.push_back(std::move(entry));
            continue;
        }

        auto rng = seeded_rng(spec.seed, i);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const double u = unit(rng);
        double acc = 0.0;
        for (auto t : order) {
            acc += spec.probability(t);
            if (u < acc) {
                entry.noise_type = t;
                break;
            }
        }

        auto pick_distractor = [&]() -> const AudioClip& {
            std::uniform_int_distribution<std::size_t> d(0, distractor_pool.size() - 1);
            const auto& c = distractor_pool[d(rng)];
            if (c.sample_rate != clip.sample_rate)
                throw ArgumentError("inject_noise: distractor " + c.clip_id + " has a different sample rate");
            return c;
        };

        auto& oclip = out.clips[i];
        auto& orec = out.records[i];
        switch (entry.noise_type) {
            case NoiseType::Correct: break;
            case NoiseType::IncorrectOOV: {
                const auto& d = pick_distractor();
                oclip.samples = d.samples;
                entry.original_label.reset();
                entry.source_clip_ids.push_back(d.clip_id);
                break;
            }
            case NoiseType::IncompleteOOV: {
                const auto& d = pick_distractor();
                oclip.samples = mix_equal_rms(clip.samples, d.samples);
                entry.source_clip_ids.push_back(d.clip_id);
                break;
            }
            case NoiseType::IncorrectIV: {
                std::uniform_int_distribution<std::size_t> d(0, n_classes - 2);
                const std::size_t r = d(rng);
                orec.class_index = r < rec.class_index ? r : r + 1;
                break;
            }
            case NoiseType::IncompleteIV: {
                std::vector<std::size_t> candidates;
                for (std::size_t j = 0; j < records.size(); ++j)
                    if (records[j].class_index != rec.class_index) candidates.push_back(j);
                if (candidates.empty())
                    throw ArgumentError("inject_noise: no clip of a different class available for " + rec.clip_id);
                std::uniform_int_distribution<std::size_t> d(0, candidates.size() - 1);
                const auto& other = clips[candidates[d(rng)]];
                oclip.samples = mix_equal_rms(clip.samples, other.samples);
                entry.source_clip_ids.push_back(other.clip_id);
                break;
            }
            case NoiseType::DensityNoise: {
                const auto needed = static_cast<std::size_t>(
                    std::ceil((2.0 * spec.patch_seconds + spec.density_margin_seconds) * clip.sample_rate));
                std::uniform_int_distribution<std::size_t> d(0, distractor_pool.size() - 1);
                std::size_t k = d(rng);
                std::vector<float> appended;
                while (appended.size() < needed) {
                    const auto& src = distractor_pool[k % distractor_pool.size()];
                    if (src.sample_rate != clip.sample_rate)
                        throw ArgumentError("inject_noise: distractor " + src.clip_id + " has a different sample rate");
                    appended.insert(appended.end(), src.samples.begin(), src.samples.end());
                    entry.source_clip_ids.push_back(src.clip_id);
                    ++k;
                }
                appended.resize(needed);
                oclip.samples.insert(oclip.samples.end(), appended.begin(), appended.end());
                break;
            }
        }
        if (orec.duration) orec.duration = oclip.duration();
        out.provenance.push_back(std::move(entry));
    }
    return out;
}

struct NoiseReport {
    std::size_t total = 0;
    std::array<std::size_t, 6> counts{};
    std::array<double, 6> fractions{};

    std::size_t count(NoiseType t) const { return counts[static_cast<std::size_t>(t)]; }
    double fraction(NoiseType t) const { return fractions[static_cast<std::size_t>(t)]; }
    double overall_noise() const { return 1.0 - fraction(NoiseType::Correct); }
};

inline NoiseReport noise_report(const ProvenanceLog& log) {
    if (log.empty()) throw ArgumentError("noise_report: empty provenance log");
    NoiseReport r;
    r.total = log.size();
    for (const auto& e : log) ++r.counts[static_cast<std::size_t>(e.noise_type)];
    for (std::size_t i = 0; i < r.counts.size(); ++i)
        r.fractions[i] = static_cast<double>(r.counts[i]) / static_cast<double>(r.total);
    return r;
}

/// Two-column text table: overall noise, then each corruption type, then correct.
inline std::string format_noise_report(const NoiseReport& r) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(1);
    out << "Label noise type      Amount   Count\n";
    out << "-----------------------------------\n";
    auto line = [&](const std::string& name, double frac, std::size_t count) {
        out << std::left << std::setw(20) << name << std::right << std::setw(7) << 100.0 * frac << "%" << std::setw(8)
            << count << "\n";
    };
    line("Overall", r.overall_noise(), r.total - r.count(NoiseType::Correct));
    for (auto t : kNoiseTypes)
        if (t != NoiseType::Correct) line(display_name(t), r.fraction(t), r.count(t));
    line("Correct", r.fraction(NoiseType::Correct), r.count(NoiseType::Correct));
    out << "Total records: " << r.total << "\n";
    return out.str();
}

inline std::string format_noise_report_csv(const NoiseReport& r) {
    std::ostringstream out;
    out << "noise_type,count,fraction\n" << std::setprecision(6) << std::fixed;
    for (auto t : kNoiseTypes) out << to_string(t) << ',' << r.count(t) << ',' << r.fraction(t) << '\n';
    return out.str();
}

inline std::string format_provenance_csv(const ProvenanceLog& log) {
    std::ostringstream out;
    out << "clip_id,noise_type,original_label,source_clip_ids\n";
    for (const auto& e : log) {
        std::string sources;
        for (std::size_t i = 0; i < e.source_clip_ids.size(); ++i) sources += (i ? ";" : "") + e.source_clip_ids[i];
        out << csv::join({e.clip_id, to_string(e.noise_type),
                          e.original_label ? std::to_string(*e.original_label) : std::string(), sources})
            << '\n';
    }
    return out.str();
}

inline ProvenanceLog parse_provenance_csv(std::istream& in, const std::string& source) {
    const auto t = csv::parse(in, source);
    const auto c_id = t.require("clip_id", source), c_type = t.require("noise_type", source),
               c_orig = t.require("original_label", source), c_src = t.require("source_clip_ids", source);
    ProvenanceLog log;
    for (const auto& row : t.rows) {
        ProvenanceEntry e;
        e.clip_id = row[c_id];
        e.noise_type = noise_type_from_string(row[c_type]);
        if (!row[c_orig].empty()) e.original_label = static_cast<std::size_t>(std::stoul(row[c_orig]));
        std::stringstream ss(row[c_src]);
        std::string part;
        while (std::getline(ss, part, ';'))
            if (!part.empty()) e.source_clip_ids.push_back(part);
        log.push_back(std::move(e));
    }
    return log;
}

}  // namespace sednoise
