#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "sednoise/checkpoint.hpp"
#include "sednoise/csv.hpp"
#include "sednoise/dataset.hpp"
#include "sednoise/errors.hpp"
#include "sednoise/features.hpp"
#include "sednoise/label_noise.hpp"
#include "sednoise/svg.hpp"
#include "sednoise/synthetic.hpp"
#include "sednoise/train.hpp"
#include "sednoise/wav.hpp"

namespace sednoise {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

struct DatasetSource {
    std::optional<SyntheticSpec> synthetic;
    std::string manifest;
    std::string audio_root;
    std::string distractor_manifest;  // CSV with an fname column
    std::string distractor_root;
};

struct ExperimentConfig {
    DatasetSource dataset;
    FeatureConfig features;
    std::optional<NoiseSpec> noise;
    TrainConfig train;
    std::size_t n_runs = 7;
    std::vector<Subset> subsets{Subset::All};
    std::vector<losses::LossConfig> losses{losses::LossConfig{}};
    std::string output_dir = "out";
};

namespace config_detail {

inline void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& section) {
    if (!obj.is_object()) throw ConfigError("config: '" + section + "' must be an object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key())) throw ConfigError("config: unknown key '" + it.key() + "' in '" + section + "'");
}

template <typename V>
void read(const json& obj, const char* key, V& out, const std::string& section) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<V>();
    } catch (const json::exception&) {
        throw ConfigError("config: '" + section + "." + key + "' has the wrong type");
    }
}

inline SyntheticSpec parse_synthetic(const json& j) {
    check_keys(j, {"n_classes", "clips_per_class", "clean_fraction", "sample_rate", "seed", "test_per_class",
                   "distractor_count", "min_duration", "max_duration"},
               "dataset.synthetic");
    SyntheticSpec s;
    read(j, "n_classes", s.n_classes, "dataset.synthetic");
    read(j, "clips_per_class", s.clips_per_class, "dataset.synthetic");
    read(j, "clean_fraction", s.clean_fraction, "dataset.synthetic");
    read(j, "sample_rate", s.sample_rate, "dataset.synthetic");
    read(j, "seed", s.seed, "dataset.synthetic");
    read(j, "test_per_class", s.test_per_class, "dataset.synthetic");
    read(j, "distractor_count", s.distractor_count, "dataset.synthetic");
    read(j, "min_duration", s.min_duration, "dataset.synthetic");
    read(j, "max_duration", s.max_duration, "dataset.synthetic");
    return s;
}

inline FeatureConfig parse_features(const json& j) {
    check_keys(j, {"sample_rate", "fft_size", "hop", "n_mels", "fmin", "fmax", "log_floor", "patch_seconds", "window"},
               "features");
    FeatureConfig f;
    read(j, "sample_rate", f.sample_rate, "features");
    read(j, "fft_size", f.fft_size, "features");
    read(j, "hop", f.hop, "features");
    read(j, "n_mels", f.n_mels, "features");
    read(j, "fmin", f.fmin, "features");
    f.fmax = f.sample_rate / 2.0;
    read(j, "fmax", f.fmax, "features");
    read(j, "log_floor", f.log_floor, "features");
    read(j, "patch_seconds", f.patch_seconds, "features");
    if (j.contains("window") && j.at("window") != "hann") throw ConfigError("config: only the 'hann' window is supported");
    f.validate();
    return f;
}

inline NoiseSpec parse_noise(const json& j) {
    check_keys(j, {"p_incorrect_oov", "p_incomplete_oov", "p_incorrect_iv", "p_incomplete_iv", "p_density", "seed",
                   "patch_seconds", "density_margin_seconds"},
               "noise");
    NoiseSpec n;
    read(j, "p_incorrect_oov", n.p_incorrect_oov, "noise");
    read(j, "p_incomplete_oov", n.p_incomplete_oov, "noise");
    read(j, "p_incorrect_iv", n.p_incorrect_iv, "noise");
    read(j, "p_incomplete_iv", n.p_incomplete_iv, "noise");
    read(j, "p_density", n.p_density, "noise");
    read(j, "seed", n.seed, "noise");
    read(j, "patch_seconds", n.patch_seconds, "noise");
    read(j, "density_margin_seconds", n.density_margin_seconds, "noise");
    n.validate();
    return n;
}

}  // namespace config_detail

inline losses::LossConfig parse_loss_config(const json& j) {
    using config_detail::read;
    config_detail::check_keys(j, {"family", "beta", "q", "m", "l", "selective", "constant_target"}, "train.losses[]");
    losses::LossConfig c;
    if (!j.contains("family")) throw ConfigError("config: loss entry without 'family'");
    std::string fam;
    read(j, "family", fam, "train.losses[]");
    c.family = losses::family_from_string(fam);
    read(j, "beta", c.beta, "train.losses[]");
    read(j, "q", c.q, "train.losses[]");
    read(j, "m", c.m, "train.losses[]");
    read(j, "l", c.l, "train.losses[]");
    read(j, "selective", c.selective, "train.losses[]");
    read(j, "constant_target", c.soft_constant_target, "train.losses[]");
    c.validate();
    return c;
}

inline json loss_config_to_json(const losses::LossConfig& c) {
    json j{{"family", losses::to_string(c.family)}};
    switch (c.family) {
        case losses::Family::Soft:
            j["beta"] = c.beta;
            if (c.soft_constant_target) j["constant_target"] = true;
            break;
        case losses::Family::Lq: j["q"] = c.q; break;
        case losses::Family::MaskMax: j["m"] = c.m; break;
        case losses::Family::MaskStat: j["l"] = c.l; break;
        case losses::Family::CCE: break;
    }
    j["selective"] = c.selective;
    return j;
}

/// Parses and validates an experiment document. Unknown keys anywhere are rejected.
inline ExperimentConfig parse_experiment_config(const json& root) {
    using namespace config_detail;
    check_keys(root, {"dataset", "features", "noise", "train", "output_dir"}, "root");
    ExperimentConfig cfg;

    if (!root.contains("dataset")) throw ConfigError("config: missing 'dataset' section");
    const auto& ds = root.at("dataset");
    check_keys(ds, {"synthetic", "manifest", "audio_root", "distractor_manifest", "distractor_root"}, "dataset");
    if (ds.contains("synthetic") == ds.contains("manifest"))
        throw ConfigError("config: 'dataset' needs exactly one of 'synthetic' or 'manifest'");
    if (ds.contains("synthetic")) cfg.dataset.synthetic = parse_synthetic(ds.at("synthetic"));
    read(ds, "manifest", cfg.dataset.manifest, "dataset");
    read(ds, "audio_root", cfg.dataset.audio_root, "dataset");
    read(ds, "distractor_manifest", cfg.dataset.distractor_manifest, "dataset");
    read(ds, "distractor_root", cfg.dataset.distractor_root, "dataset");
    if (!cfg.dataset.manifest.empty() && cfg.dataset.audio_root.empty())
        cfg.dataset.audio_root = fs::path(cfg.dataset.manifest).parent_path().string();

    if (root.contains("features")) {
        cfg.features = parse_features(root.at("features"));
    } else if (cfg.dataset.synthetic) {
        cfg.features.sample_rate = cfg.dataset.synthetic->sample_rate;
        cfg.features.fmax = cfg.features.sample_rate / 2.0;
    }
    if (root.contains("noise")) cfg.noise = parse_noise(root.at("noise"));

    if (root.contains("train")) {
        const auto& t = root.at("train");
        check_keys(t, {"batch_size", "initial_lr", "plateau_window", "patience", "val_fraction", "max_epochs", "seed",
                       "n_runs", "subsets", "losses", "network"},
                   "train");
        read(t, "batch_size", cfg.train.batch_size, "train");
        read(t, "initial_lr", cfg.train.initial_lr, "train");
        read(t, "plateau_window", cfg.train.plateau_window, "train");
        read(t, "patience", cfg.train.patience, "train");
        read(t, "val_fraction", cfg.train.val_fraction, "train");
        read(t, "max_epochs", cfg.train.max_epochs, "train");
        read(t, "seed", cfg.train.seed, "train");
        read(t, "n_runs", cfg.n_runs, "train");
        if (t.contains("subsets")) {
            std::vector<std::string> names;
            read(t, "subsets", names, "train");
            cfg.subsets.clear();
            for (const auto& n : names) cfg.subsets.push_back(subset_from_string(n));
            if (cfg.subsets.empty()) throw ConfigError("config: 'train.subsets' is empty");
        }
        if (t.contains("losses")) {
            if (!t.at("losses").is_array() || t.at("losses").empty())
                throw ConfigError("config: 'train.losses' must be a non-empty array");
            cfg.losses.clear();
            for (const auto& l : t.at("losses")) cfg.losses.push_back(parse_loss_config(l));
        }
        if (t.contains("network")) {
            const auto& n = t.at("network");
            check_keys(n, {"channels", "kernel", "pool"}, "train.network");
            std::vector<std::size_t> ch;
            read(n, "channels", ch, "train.network");
            if (n.contains("channels")) {
                if (ch.size() != 3 || std::find(ch.begin(), ch.end(), 0u) != ch.end())
                    throw ConfigError("config: 'train.network.channels' needs three positive widths");
                std::copy(ch.begin(), ch.end(), cfg.train.network.channels.begin());
            }
            read(n, "kernel", cfg.train.network.kernel, "train.network");
            if (cfg.train.network.kernel % 2 == 0) throw ConfigError("config: 'train.network.kernel' must be odd");
            std::vector<std::size_t> pool;
            read(n, "pool", pool, "train.network");
            if (n.contains("pool")) {
                if (pool.size() != 2 || pool[0] == 0 || pool[1] == 0)
                    throw ConfigError("config: 'train.network.pool' needs two positive sizes");
                cfg.train.network.pool_h = pool[0];
                cfg.train.network.pool_w = pool[1];
            }
        }
    }
    if (cfg.n_runs < 2) throw ConfigError("config: 'train.n_runs' must be >= 2");
    cfg.train.validate();
    read(root, "output_dir", cfg.output_dir, "root");
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": invalid JSON: " + e.what());
    }
    return parse_experiment_config(j);
}

// ---------------------------------------------------------------------------
// Dataset loading

/// Audio and labels in memory, clips aligned with manifest.records.
struct LoadedDataset {
    DatasetManifest manifest;
    std::vector<AudioClip> clips;
    std::vector<AudioClip> distractors;
};

inline std::vector<AudioClip> load_distractors(const DatasetSource& src) {
    std::vector<AudioClip> out;
    if (src.distractor_manifest.empty()) return out;
    const auto t = csv::read_file(src.distractor_manifest);
    const auto c = t.require("fname", src.distractor_manifest);
    const std::string root =
        src.distractor_root.empty() ? fs::path(src.distractor_manifest).parent_path().string() : src.distractor_root;
    for (const auto& row : t.rows) {
        auto pcm = wav::read((fs::path(root) / row[c]).string());
        out.push_back({std::move(pcm.samples), static_cast<double>(pcm.sample_rate), row[c]});
    }
    return out;
}

inline LoadedDataset load_dataset(const DatasetSource& src) {
    LoadedDataset out;
    if (src.synthetic) {
        auto ds = gen_synthetic_dataset(*src.synthetic);
        out.manifest = std::move(ds.manifest);
        out.clips = std::move(ds.clips);
        out.distractors = std::move(ds.distractors);
        return out;
    }
    out.manifest = load_manifest(src.manifest, src.audio_root);
    for (auto& r : out.manifest.records) {
        out.clips.push_back(read_clip(out.manifest, r));
        r.duration = out.clips.back().duration();
    }
    out.distractors = load_distractors(src);
    return out;
}

/// Applies `spec` to the noisy-origin training records; everything else is left as is.
inline std::pair<LoadedDataset, ProvenanceLog> apply_noise(const LoadedDataset& data, const NoiseSpec& spec) {
    std::vector<std::size_t> idx;
    std::vector<AudioClip> clips;
    std::vector<LabelRecord> records;
    for (std::size_t i = 0; i < data.manifest.records.size(); ++i) {
        const auto& r = data.manifest.records[i];
        if (r.split == Split::Train && r.origin == Origin::Noisy) {
            idx.push_back(i);
            clips.push_back(data.clips[i]);
            records.push_back(r);
        }
    }
    auto res = inject_noise(clips, records, spec, data.distractors, data.manifest.n_classes());
    LoadedDataset out = data;
    for (std::size_t j = 0; j < idx.size(); ++j) {
        out.clips[idx[j]] = std::move(res.clips[j]);
        out.manifest.records[idx[j]] = std::move(res.records[j]);
    }
    return {std::move(out), std::move(res.provenance)};
}

/// Log-mel features for every clip, computed on up to `jobs` threads. Output order and values do
/// not depend on the job count.
inline std::vector<LogMelMatrix> extract_all(const std::vector<AudioClip>& clips, const FeatureConfig& cfg,
                                             std::size_t jobs = 1) {
    const auto fb = mel_filterbank(cfg);
    std::vector<LogMelMatrix> out(clips.size());
    std::vector<std::string> errors(clips.size());
    auto work = [&](std::size_t i) {
        try {
            out[i] = logmel_from_power(stft_power(clips[i], cfg), fb, cfg, clips[i].clip_id);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    };
    jobs = std::max<std::size_t>(1, std::min(jobs, clips.size()));
    if (jobs == 1) {
        for (std::size_t i = 0; i < clips.size(); ++i) work(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t j = 0; j < jobs; ++j)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < clips.size(); i = next++) work(i);
            });
        for (auto& t : pool) t.join();
    }
    for (std::size_t i = 0; i < errors.size(); ++i)
        if (!errors[i].empty()) throw DataError(clips[i].clip_id + ": " + errors[i]);
    return out;
}

/// Training pool for `subset` and the full test split as ClipFeatures.
inline ExperimentData make_experiment_data(const DatasetManifest& manifest, const std::vector<LogMelMatrix>& features,
                                           const FeatureConfig& fcfg, Subset subset) {
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) pos[manifest.records[i].clip_id] = i;
    ExperimentData d;
    d.n_classes = manifest.n_classes();
    d.features = fcfg;
    d.class_names = manifest.class_names;
    auto to_clip = [&](const LabelRecord& r) {
        return ClipFeatures{r.clip_id, features.at(pos.at(r.clip_id)), r.class_index, r.origin};
    };
    for (const auto& r : select_subset(manifest, subset).records) d.train.push_back(to_clip(r));
    for (const auto& r : manifest.records)
        if (r.split == Split::Test) d.test.push_back(to_clip(r));
    return d;
}

// ---------------------------------------------------------------------------
// Reports

inline std::string fmt_fixed(double v, int digits) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

inline std::string report_key(Subset subset, const losses::LossConfig& loss) {
    return to_string(subset) + "__" + loss.label();
}

inline const std::vector<std::string>& report_csv_header() {
    static const std::vector<std::string> h{"subset", "loss", "family", "beta", "q", "m", "l", "selective", "n_runs",
                                            "mean", "ci95", "accuracies", "batch_size", "initial_lr", "plateau_window",
                                            "patience", "val_fraction", "max_epochs", "seed", "network"};
    return h;
}

inline std::vector<std::string> report_csv_row(const RunReport& r) {
    const auto& c = r.config;
    std::string accs;
    for (std::size_t i = 0; i < r.accuracies.size(); ++i) accs += (i ? ";" : "") + fmt_fixed(r.accuracies[i], 6);
    const auto& n = c.network;
    const std::string net = std::to_string(n.channels[0]) + "-" + std::to_string(n.channels[1]) + "-" +
                            std::to_string(n.channels[2]) + "/k" + std::to_string(n.kernel) + "/p" +
                            std::to_string(n.pool_h) + "x" + std::to_string(n.pool_w);
    return {to_string(c.subset),
            c.loss.label(),
            losses::to_string(c.loss.family),
            fmt_fixed(c.loss.beta, 4),
            fmt_fixed(c.loss.q, 4),
            fmt_fixed(c.loss.m, 4),
            fmt_fixed(c.loss.l, 4),
            c.loss.selective ? "1" : "0",
            std::to_string(r.n_runs),
            fmt_fixed(r.mean, 6),
            fmt_fixed(r.ci95, 6),
            accs,
            std::to_string(c.batch_size),
            fmt_fixed(c.initial_lr, 8),
            std::to_string(c.plateau_window),
            std::to_string(c.patience),
            fmt_fixed(c.val_fraction, 4),
            std::to_string(c.max_epochs),
            std::to_string(c.seed),
            net};
}

inline std::string format_report_csv(const std::vector<RunReport>& reports) {
    std::string out = csv::join(report_csv_header()) + "\n";
    for (const auto& r : reports) out += csv::join(report_csv_row(r)) + "\n";
    return out;
}

/// One summary row of a report CSV, as read back by the `report` command.
struct ReportRow {
    std::string subset, loss;
    double mean = 0.0, ci95 = 0.0;
    std::size_t n_runs = 0;
};

inline std::vector<ReportRow> parse_report_csv(const std::string& path) {
    const auto t = csv::read_file(path);
    const auto cs = t.require("subset", path), cl = t.require("loss", path), cm = t.require("mean", path),
               cc = t.require("ci95", path), cn = t.require("n_runs", path);
    std::vector<ReportRow> rows;
    for (const auto& r : t.rows) rows.push_back({r[cs], r[cl], std::stod(r[cm]), std::stod(r[cc]), std::stoul(r[cn])});
    return rows;
}

/// Accuracy table in percent, "mean±ci" per cell, losses as rows and subsets as columns.
inline std::string format_report_table(const std::vector<ReportRow>& rows) {
    std::vector<std::string> subsets{"all", "noisy", "noisy_small", "clean"};
    std::vector<std::string> extra_subsets, loss_order;
    std::map<std::pair<std::string, std::string>, std::string> cells;
    for (const auto& r : rows) {
        if (std::find(subsets.begin(), subsets.end(), r.subset) == subsets.end() &&
            std::find(extra_subsets.begin(), extra_subsets.end(), r.subset) == extra_subsets.end())
            extra_subsets.push_back(r.subset);
        if (std::find(loss_order.begin(), loss_order.end(), r.loss) == loss_order.end()) loss_order.push_back(r.loss);
        cells[{r.loss, r.subset}] = fmt_fixed(100.0 * r.mean, 1) + "±" + fmt_fixed(100.0 * r.ci95, 1);
    }
    subsets.insert(subsets.end(), extra_subsets.begin(), extra_subsets.end());
    std::vector<std::string> used;
    for (const auto& s : subsets)
        if (std::any_of(rows.begin(), rows.end(), [&](const ReportRow& r) { return r.subset == s; })) used.push_back(s);

    std::size_t w0 = 8;
    for (const auto& l : loss_order) w0 = std::max(w0, l.size());
    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(w0 + 2)) << "approach";
    for (const auto& s : used) out << std::setw(14) << s;
    out << "\n";
    for (const auto& l : loss_order) {
        out << std::setw(static_cast<int>(w0 + 2)) << l;
        for (const auto& s : used) {
            auto it = cells.find({l, s});
            const std::string cell = it == cells.end() ? "--" : it->second;
            // "±" is two bytes in UTF-8; pad by display width.
            const std::size_t width = cell.size() - (cell.find("±") != std::string::npos ? 1 : 0);
            out << cell << std::string(width < 14 ? 14 - width : 1, ' ');
        }
        out << "\n";
    }
    out << "(accuracy %, mean±95% CI)\n";
    return out.str();
}

inline std::vector<ReportRow> to_rows(const std::vector<RunReport>& reports) {
    std::vector<ReportRow> rows;
    for (const auto& r : reports) rows.push_back({to_string(r.config.subset), r.config.loss.label(), r.mean, r.ci95, r.n_runs});
    return rows;
}

// ---------------------------------------------------------------------------
// Commands

struct CommandOptions {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output_dir;
    std::size_t jobs = 1;
    bool force = false;
};

inline void apply_overrides(ExperimentConfig& cfg, const CommandOptions& opt) {
    if (opt.seed) cfg.train.seed = *opt.seed;
    if (opt.output_dir) cfg.output_dir = *opt.output_dir;
}

inline void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

struct SynthSummary {
    std::size_t clips = 0, distractors = 0;
};

/// Writes a synthetic dataset as WAV files plus manifest.csv and distractors.csv.
inline SynthSummary cmd_synth_data(const ExperimentConfig& cfg) {
    if (!cfg.dataset.synthetic) throw ConfigError("synth-data: config needs 'dataset.synthetic'");
    const auto ds = gen_synthetic_dataset(*cfg.dataset.synthetic);
    const fs::path out(cfg.output_dir);
    fs::create_directories(out / "audio");
    fs::create_directories(out / "distractors");
    for (const auto& c : ds.clips)
        wav::write((out / "audio" / c.clip_id).string(), c.samples, static_cast<std::uint32_t>(c.sample_rate));
    std::string dcsv = "fname\n";
    for (const auto& d : ds.distractors) {
        wav::write((out / "distractors" / d.clip_id).string(), d.samples, static_cast<std::uint32_t>(d.sample_rate));
        dcsv += d.clip_id + "\n";
    }
    write_text(out / "manifest.csv", format_manifest(ds.manifest));
    write_text(out / "distractors.csv", dcsv);
    return {ds.clips.size(), ds.distractors.size()};
}

struct FeatureSummary {
    std::size_t computed = 0, skipped = 0;
    std::vector<std::string> errors;  // one message per failed clip, naming the file
};

inline fs::path feature_cache_path(const fs::path& output_dir, const std::string& clip_id) {
    return output_dir / "features" / (clip_id + ".logmel");
}

/// One cache file per clip under output_dir/features. Entries newer than their source audio are
/// skipped unless `force` is set. Unreadable clips are reported and do not stop the others.
inline FeatureSummary cmd_features(const ExperimentConfig& cfg, const CommandOptions& opt) {
    FeatureSummary summary;
    const fs::path out(cfg.output_dir);
    fs::create_directories(out / "features");
    cfg.features.validate();
    const auto fb = mel_filterbank(cfg.features);

    std::vector<LabelRecord> records;
    std::vector<AudioClip> synthetic_clips;
    DatasetManifest manifest;
    if (cfg.dataset.synthetic) {
        auto ds = gen_synthetic_dataset(*cfg.dataset.synthetic);
        manifest = std::move(ds.manifest);
        synthetic_clips = std::move(ds.clips);
    } else {
        manifest = load_manifest(cfg.dataset.manifest, cfg.dataset.audio_root);
    }

    std::vector<int> status(manifest.records.size(), 0);  // 0 skipped, 1 computed, 2 failed
    std::vector<std::string> messages(manifest.records.size());
    auto work = [&](std::size_t i) {
        const auto& r = manifest.records[i];
        const auto cache = feature_cache_path(out, r.clip_id);
        try {
            if (!opt.force && fs::exists(cache)) {
                if (cfg.dataset.synthetic) return;
                const auto src = fs::path(manifest.audio_path(r));
                if (fs::exists(src) && fs::last_write_time(cache) >= fs::last_write_time(src)) return;
            }
            const AudioClip clip = cfg.dataset.synthetic ? synthetic_clips[i] : read_clip(manifest, r);
            const auto m = logmel_from_power(stft_power(clip, cfg.features), fb, cfg.features, clip.clip_id);
            fs::create_directories(cache.parent_path());
            write_feature_cache(cache.string(), m);
            status[i] = 1;
        } catch (const std::exception& e) {
            status[i] = 2;
            messages[i] = manifest.audio_path(r) + ": " + e.what();
        }
    };
    const std::size_t jobs = std::max<std::size_t>(1, std::min(opt.jobs, manifest.records.size()));
    if (jobs <= 1) {
        for (std::size_t i = 0; i < manifest.records.size(); ++i) work(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t j = 0; j < jobs; ++j)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < manifest.records.size(); i = next++) work(i);
            });
        for (auto& t : pool) t.join();
    }
    for (std::size_t i = 0; i < status.size(); ++i) {
        if (status[i] == 0) ++summary.skipped;
        if (status[i] == 1) ++summary.computed;
        if (status[i] == 2) summary.errors.push_back(messages[i]);
    }
    return summary;
}

struct InjectSummary {
    std::size_t corrupted_records = 0;  // noisy-origin records passed to the injector
    NoiseReport report;
};

/// Corrupts the noisy-origin training records and writes audio/, manifest.csv, provenance.csv,
/// noise_report.txt and noise_report.csv under output_dir.
inline InjectSummary cmd_inject(const ExperimentConfig& cfg) {
    if (!cfg.noise) throw ConfigError("inject-noise: config needs a 'noise' section");
    const auto data = load_dataset(cfg.dataset);
    auto [noisy, log] = apply_noise(data, *cfg.noise);
    const fs::path out(cfg.output_dir);
    fs::create_directories(out / "audio");
    for (const auto& c : noisy.clips)
        wav::write((out / "audio" / c.clip_id).string(), c.samples, static_cast<std::uint32_t>(c.sample_rate));
    noisy.manifest.audio_root = (out / "audio").string();
    write_text(out / "manifest.csv", format_manifest(noisy.manifest));
    write_text(out / "provenance.csv", format_provenance_csv(log));
    InjectSummary s;
    s.corrupted_records = log.size();
    if (!log.empty()) {
        s.report = noise_report(log);
        write_text(out / "noise_report.txt", format_noise_report(s.report));
        write_text(out / "noise_report.csv", format_noise_report_csv(s.report));
    }
    return s;
}

/// Features for every clip, reusing output_dir/features caches when no noise is injected.
inline std::vector<LogMelMatrix> features_for_run(const ExperimentConfig& cfg, const LoadedDataset& data, bool use_cache,
                                                  std::size_t jobs) {
    if (!use_cache) return extract_all(data.clips, cfg.features, jobs);
    std::vector<LogMelMatrix> out(data.clips.size());
    std::vector<AudioClip> missing;
    std::vector<std::size_t> missing_idx;
    for (std::size_t i = 0; i < data.clips.size(); ++i) {
        const auto p = feature_cache_path(cfg.output_dir, data.clips[i].clip_id);
        bool ok = false;
        if (fs::exists(p)) {
            try {
                out[i] = read_feature_cache(p.string(), data.clips[i].clip_id);
                ok = out[i].n_mels == cfg.features.n_mels &&
                     out[i].n_frames == frame_count(data.clips[i].samples.size(), cfg.features.hop);
            } catch (const DataError&) {
                ok = false;
            }
        }
        if (!ok) {
            missing.push_back(data.clips[i]);
            missing_idx.push_back(i);
        }
    }
    auto computed = extract_all(missing, cfg.features, jobs);
    for (std::size_t j = 0; j < missing_idx.size(); ++j) out[missing_idx[j]] = std::move(computed[j]);
    return out;
}

/// (subset, loss) pairs a run covers. Robust losses are skipped on the clean subset, which has no
/// noisy-origin data.
inline std::vector<std::pair<Subset, losses::LossConfig>> run_grid(const ExperimentConfig& cfg) {
    std::vector<std::pair<Subset, losses::LossConfig>> grid;
    for (auto subset : cfg.subsets)
        for (const auto& loss : cfg.losses) {
            if (subset == Subset::Clean && loss.family != losses::Family::CCE) continue;
            grid.emplace_back(subset, loss);
        }
    return grid;
}

/// Runs every pair of run_grid() and writes reports, histories, checkpoints and validation curves.
inline std::vector<RunReport> cmd_run(const ExperimentConfig& cfg, const CommandOptions& opt) {
    const fs::path out(cfg.output_dir);
    auto data = load_dataset(cfg.dataset);
    if (cfg.noise) {
        auto [noisy, log] = apply_noise(data, *cfg.noise);
        data = std::move(noisy);
        write_text(out / "provenance.csv", format_provenance_csv(log));
    }
    const auto feats = features_for_run(cfg, data, !cfg.noise.has_value(), opt.jobs);

    std::vector<RunReport> reports;
    std::optional<Subset> loaded;
    ExperimentData exp_data;
    for (const auto& [subset, loss] : run_grid(cfg)) {
        {
            if (loaded != subset) {
                exp_data = make_experiment_data(data.manifest, feats, cfg.features, subset);
                loaded = subset;
            }
            TrainConfig tc = cfg.train;
            tc.loss = loss;
            tc.subset = subset;
            const std::string key = report_key(subset, loss);
            fs::create_directories(out / "checkpoints");
            auto report = run_experiment(exp_data, tc, cfg.n_runs, opt.jobs, [&](const RunOutcome& o) {
                auto model = o.trained.model;
                save_checkpoint((out / "checkpoints" / (key + "__run" + std::to_string(o.run) + ".ckpt")).string(), model,
                                static_cast<std::uint32_t>(o.trained.best_epoch));
            });
            std::vector<svg::Series> curves;
            for (std::size_t r = 0; r < report.histories.size(); ++r) {
                write_text(out / "histories" / (key + "__run" + std::to_string(r) + ".csv"),
                           format_history_csv(report.histories[r]));
                svg::Series s{"run " + std::to_string(r), {}, {}};
                for (const auto& e : report.histories[r]) {
                    s.x.push_back(static_cast<double>(e.epoch));
                    s.y.push_back(e.val_accuracy);
                }
                curves.push_back(std::move(s));
            }
            write_text(out / "curves" / (key + ".svg"),
                       svg::line_plot(curves, key + " validation accuracy", "epoch", "accuracy"));
            write_text(out / "reports" / (key + ".csv"), format_report_csv({report}));
            reports.push_back(std::move(report));
        }
    }
    write_text(out / "report.csv", format_report_csv(reports));
    write_text(out / "report.txt", format_report_table(to_rows(reports)));
    return reports;
}

}  // namespace sednoise
