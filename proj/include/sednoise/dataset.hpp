#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "sednoise/csv.hpp"
#include "sednoise/errors.hpp"
#include "sednoise/types.hpp"
#include "sednoise/wav.hpp"

namespace sednoise {

/// Mono waveform with amplitudes in [-1, 1].
struct AudioClip {
    std::vector<float> samples;
    double sample_rate = 0.0;
    std::string clip_id;

    double duration() const { return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0; }

    void validate() const {
        if (samples.empty()) throw DataError("clip " + clip_id + ": no samples");
        if (!(sample_rate > 0)) throw DataError("clip " + clip_id + ": sample rate must be positive");
    }

    bool operator==(const AudioClip&) const = default;
};

/// One singly-labeled clip.
struct LabelRecord {
    std::string clip_id;
    std::size_t class_index = 0;
    Origin origin = Origin::Noisy;
    Split split = Split::Train;
    std::optional<double> duration;    // seconds, when known
    std::optional<bool> noisy_small;   // explicit subset marker, when shipped with the data

    bool operator==(const LabelRecord&) const = default;
};

struct DatasetManifest {
    std::vector<LabelRecord> records;
    std::vector<std::string> class_names;
    std::string audio_root;

    std::size_t n_classes() const noexcept { return class_names.size(); }

    std::vector<LabelRecord> split(Split s) const {
        std::vector<LabelRecord> out;
        for (const auto& r : records)
            if (r.split == s) out.push_back(r);
        return out;
    }

    std::string audio_path(const LabelRecord& r) const {
        return (std::filesystem::path(audio_root) / r.clip_id).string();
    }

    bool operator==(const DatasetManifest&) const = default;
};

/// Structural checks: unique ids, labels in range, test records clean.
inline void validate_manifest(const DatasetManifest& m) {
    std::unordered_set<std::string> ids;
    for (const auto& r : m.records) {
        if (!ids.insert(r.clip_id).second) throw DuplicationError("duplicate clip id '" + r.clip_id + "'");
        if (r.class_index >= m.n_classes())
            throw ConsistencyError("clip '" + r.clip_id + "' has class index " + std::to_string(r.class_index) +
                                   " but only " + std::to_string(m.n_classes()) + " classes exist");
        if (r.split == Split::Test && r.origin != Origin::Clean)
            throw ConsistencyError("test clip '" + r.clip_id + "' is not manually verified");
    }
}

namespace detail {

inline bool parse_flag(const std::string& v, const std::string& what, std::size_t row) {
    if (v == "1" || v == "true" || v == "True") return true;
    if (v == "0" || v == "false" || v == "False" || v.empty()) return false;
    throw FormatError("row " + std::to_string(row) + ": invalid " + what + " value '" + v + "'");
}

inline Split parse_split(const std::string& v, std::size_t row) {
    if (v == "train") return Split::Train;
    if (v == "test") return Split::Test;
    throw FormatError("row " + std::to_string(row) + ": split must be 'train' or 'test', got '" + v + "'");
}

}  // namespace detail

/// Reads a manifest CSV with columns fname,label,manually_verified,split and the optional
/// columns noisy_small and duration. Other columns are ignored.
inline DatasetManifest parse_manifest(std::istream& in, const std::string& source, const std::string& audio_root) {
    const auto table = csv::parse(in, source);
    const std::size_t c_fname = table.require("fname", source);
    const std::size_t c_label = table.require("label", source);
    const std::size_t c_verified = table.require("manually_verified", source);
    const std::size_t c_split = table.require("split", source);
    const int c_small = table.column("noisy_small");
    const int c_duration = table.column("duration");

    std::set<std::string> train_labels, all_labels;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        all_labels.insert(row[c_label]);
        if (detail::parse_split(row[c_split], i + 2) == Split::Train) train_labels.insert(row[c_label]);
    }
    for (const auto& label : all_labels)
        if (!train_labels.count(label))
            throw ConsistencyError(source + ": label '" + label + "' appears only in test rows");

    DatasetManifest m;
    m.audio_root = audio_root;
    m.class_names.assign(all_labels.begin(), all_labels.end());
    std::map<std::string, std::size_t> index;
    for (std::size_t k = 0; k < m.class_names.size(); ++k) index[m.class_names[k]] = k;

    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        LabelRecord r;
        r.clip_id = row[c_fname];
        if (r.clip_id.empty()) throw FormatError(source + ": empty fname in row " + std::to_string(i + 2));
        if (!seen.insert(r.clip_id).second)
            throw DuplicationError(source + ": duplicate fname '" + r.clip_id + "'");
        r.class_index = index.at(row[c_label]);
        r.origin = detail::parse_flag(row[c_verified], "manually_verified", i + 2) ? Origin::Clean : Origin::Noisy;
        r.split = detail::parse_split(row[c_split], i + 2);
        if (r.split == Split::Test && r.origin != Origin::Clean)
            throw ConsistencyError(source + ": test clip '" + r.clip_id + "' is not manually verified");
        if (c_small >= 0 && !row[static_cast<std::size_t>(c_small)].empty())
            r.noisy_small = detail::parse_flag(row[static_cast<std::size_t>(c_small)], "noisy_small", i + 2);
        if (c_duration >= 0 && !row[static_cast<std::size_t>(c_duration)].empty()) {
            try {
                r.duration = std::stod(row[static_cast<std::size_t>(c_duration)]);
            } catch (const std::exception&) {
                throw FormatError(source + ": invalid duration in row " + std::to_string(i + 2));
            }
        }
        m.records.push_back(std::move(r));
    }
    return m;
}

inline DatasetManifest load_manifest(const std::string& path, const std::string& audio_root) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open manifest " + path);
    return parse_manifest(in, path, audio_root);
}

inline std::string format_manifest(const DatasetManifest& m) {
    const bool any_small = std::any_of(m.records.begin(), m.records.end(), [](auto& r) { return r.noisy_small.has_value(); });
    const bool any_duration = std::any_of(m.records.begin(), m.records.end(), [](auto& r) { return r.duration.has_value(); });
    std::vector<std::string> header{"fname", "label", "manually_verified", "split"};
    if (any_small) header.emplace_back("noisy_small");
    if (any_duration) header.emplace_back("duration");
    std::ostringstream out;
    out << csv::join(header) << '\n';
    for (const auto& r : m.records) {
        std::vector<std::string> row{r.clip_id, m.class_names.at(r.class_index), r.origin == Origin::Clean ? "1" : "0",
                                     to_string(r.split)};
        if (any_small) row.emplace_back(r.noisy_small ? (*r.noisy_small ? "1" : "0") : "");
        if (any_duration) {
            if (r.duration) {
                std::ostringstream d;
                d.precision(17);
                d << *r.duration;
                row.push_back(d.str());
            } else {
                row.emplace_back();
            }
        }
        out << csv::join(row) << '\n';
    }
    return out.str();
}

inline void write_manifest(const DatasetManifest& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write manifest " + path);
    out << format_manifest(m);
}

enum class Subset { All, Noisy, NoisySmall, Clean };

inline std::string to_string(Subset s) {
    switch (s) {
        case Subset::All: return "all";
        case Subset::Noisy: return "noisy";
        case Subset::NoisySmall: return "noisy_small";
        case Subset::Clean: return "clean";
    }
    return "?";
}

inline Subset subset_from_string(const std::string& s) {
    if (s == "all") return Subset::All;
    if (s == "noisy") return Subset::Noisy;
    if (s == "noisy_small") return Subset::NoisySmall;
    if (s == "clean") return Subset::Clean;
    throw ConfigError("unknown subset '" + s + "' (expected all, noisy, noisy_small, clean)");
}

/// Per class, the prefix (in manifest order) of noisy records whose summed duration is closest
/// to the class's clean duration. Ties go to the shorter prefix.
inline std::vector<std::size_t> noisy_small_by_duration(const DatasetManifest& m) {
    const std::size_t k = m.n_classes();
    std::vector<double> clean_duration(k, 0.0);
    std::vector<std::vector<std::size_t>> noisy(k);
    for (std::size_t i = 0; i < m.records.size(); ++i) {
        const auto& r = m.records[i];
        if (r.split != Split::Train) continue;
        if (!r.duration)
            throw ConfigError("noisy_small selection needs a noisy_small column or per-clip durations (clip '" +
                              r.clip_id + "' has none)");
        if (r.origin == Origin::Clean)
            clean_duration[r.class_index] += *r.duration;
        else
            noisy[r.class_index].push_back(i);
    }
    std::vector<std::size_t> chosen;
    for (std::size_t c = 0; c < k; ++c) {
        double sum = 0.0, best_gap = clean_duration[c];
        std::size_t best_len = 0;
        for (std::size_t p = 0; p < noisy[c].size(); ++p) {
            sum += *m.records[noisy[c][p]].duration;
            const double gap = std::abs(sum - clean_duration[c]);
            if (gap < best_gap) {
                best_gap = gap;
                best_len = p + 1;
            }
        }
        chosen.insert(chosen.end(), noisy[c].begin(), noisy[c].begin() + static_cast<std::ptrdiff_t>(best_len));
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

/// Training-set subset. The result holds train records only, in manifest order, and keeps the
/// class list. A materialized noisy_small selection is marked so re-selection is stable.
inline DatasetManifest select_subset(const DatasetManifest& m, Subset subset) {
    DatasetManifest out;
    out.class_names = m.class_names;
    out.audio_root = m.audio_root;
    const bool has_marker = std::any_of(m.records.begin(), m.records.end(), [](const LabelRecord& r) {
        return r.split == Split::Train && r.noisy_small.has_value();
    });
    switch (subset) {
        case Subset::All:
        case Subset::Clean:
        case Subset::Noisy:
            for (const auto& r : m.records) {
                if (r.split != Split::Train) continue;
                if (subset == Subset::Clean && r.origin != Origin::Clean) continue;
                if (subset == Subset::Noisy && r.origin != Origin::Noisy) continue;
                out.records.push_back(r);
            }
            break;
        case Subset::NoisySmall:
            if (has_marker) {
                for (const auto& r : m.records)
                    if (r.split == Split::Train && r.origin == Origin::Noisy && r.noisy_small.value_or(false))
                        out.records.push_back(r);
            } else {
                for (auto i : noisy_small_by_duration(m)) {
                    out.records.push_back(m.records[i]);
                    out.records.back().noisy_small = true;
                }
            }
            break;
    }
    if (out.records.empty()) throw EmptySubsetError("subset '" + to_string(subset) + "' is empty");
    return out;
}

struct DatasetCounts {
    std::size_t total = 0, train = 0, test = 0, clean_train = 0, noisy_train = 0;
};

inline DatasetCounts count_records(const DatasetManifest& m) {
    DatasetCounts c;
    for (const auto& r : m.records) {
        ++c.total;
        if (r.split == Split::Test) {
            ++c.test;
        } else {
            ++c.train;
            (r.origin == Origin::Clean ? c.clean_train : c.noisy_train) += 1;
        }
    }
    return c;
}

/// Published FSDnoisy18k totals.
inline constexpr std::size_t kFsdTotalClips = 18532;
inline constexpr std::size_t kFsdTrainClips = 17585;
inline constexpr std::size_t kFsdTestClips = 947;
inline constexpr std::size_t kFsdClasses = 20;

/// Throws ConsistencyError unless the manifest matches the published FSDnoisy18k totals.
inline void validate_fsdnoisy18k_counts(const DatasetManifest& m) {
    const auto c = count_records(m);
    auto check = [](std::size_t got, std::size_t want, const char* what) {
        if (got != want)
            throw ConsistencyError(std::string("FSDnoisy18k ") + what + ": expected " + std::to_string(want) +
                                   ", found " + std::to_string(got));
    };
    check(c.total, kFsdTotalClips, "total clips");
    check(c.train, kFsdTrainClips, "train clips");
    check(c.test, kFsdTestClips, "test clips");
    check(m.n_classes(), kFsdClasses, "classes");
}

inline AudioClip read_clip(const DatasetManifest& m, const LabelRecord& r) {
    auto pcm = wav::read(m.audio_path(r));
    AudioClip clip{std::move(pcm.samples), static_cast<double>(pcm.sample_rate), r.clip_id};
    clip.validate();
    return clip;
}

/// Fills missing durations from WAV files.
inline void fill_durations(DatasetManifest& m) {
    for (auto& r : m.records)
        if (!r.duration) r.duration = read_clip(m, r).duration();
}

}  // namespace sednoise
