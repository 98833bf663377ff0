#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <atomic>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "sednoise/dataset.hpp"
#include "sednoise/errors.hpp"
#include "sednoise/features.hpp"
#include "sednoise/losses.hpp"
#include "sednoise/nn/network.hpp"
#include "sednoise/nn/optim.hpp"
#include "sednoise/random.hpp"
#include "sednoise/stats.hpp"

namespace sednoise {

/// Log-mel features of one clip together with its observed label and origin.
struct ClipFeatures {
    std::string clip_id;
    LogMelMatrix logmel;
    std::size_t label = 0;
    Origin origin = Origin::Clean;
};

struct TrainConfig {
    std::size_t batch_size = 64;
    double initial_lr = 1e-3;
    std::size_t plateau_window = 5;
    std::size_t patience = 15;
    double val_fraction = 0.15;
    std::size_t max_epochs = 200;
    std::uint64_t seed = 0;
    losses::LossConfig loss;
    Subset subset = Subset::All;
    nn::NetworkSpec network;

    void validate() const {
        if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
        if (!(initial_lr >= 0.0)) throw ConfigError("train: initial_lr must be >= 0");
        if (plateau_window < 1) throw ConfigError("train: plateau_window must be >= 1");
        if (patience < 1) throw ConfigError("train: patience must be >= 1");
        if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("train: val_fraction must lie in (0,1)");
        if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
        loss.validate();
    }
};

// ---------------------------------------------------------------------------
// Validation split

/// Per class, round(fraction * n) items (at least one) go to validation. Returns indices of the
/// validation items in input order.
inline std::vector<std::size_t> stratified_val_indices(std::span<const std::size_t> labels, double fraction,
                                                       std::uint64_t seed,
                                                       const std::vector<std::string>& class_names = {}) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("validation fraction must lie in (0,1)");
    std::map<std::size_t, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    std::vector<std::size_t> val;
    for (auto& [label, idx] : by_class) {
        if (idx.size() < 2) {
            const std::string name = label < class_names.size() ? class_names[label] : std::to_string(label);
            throw DataError("validation split: class '" + name + "' has fewer than 2 records");
        }
        const auto n_val = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::lround(fraction * static_cast<double>(idx.size()))), 1, idx.size() - 1);
        auto rng = seeded_rng(seed, label);
        std::shuffle(idx.begin(), idx.end(), rng);
        val.insert(val.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    }
    std::sort(val.begin(), val.end());
    return val;
}

template <typename Item>
std::pair<std::vector<Item>, std::vector<Item>> partition_by_indices(const std::vector<Item>& items,
                                                                     const std::vector<std::size_t>& val_idx) {
    std::vector<bool> is_val(items.size(), false);
    for (auto i : val_idx) is_val[i] = true;
    std::pair<std::vector<Item>, std::vector<Item>> out;
    for (std::size_t i = 0; i < items.size(); ++i) (is_val[i] ? out.second : out.first).push_back(items[i]);
    return out;
}

/// (train, validation) partition of `records`; both halves keep input order.
inline std::pair<std::vector<LabelRecord>, std::vector<LabelRecord>> stratified_val_split(
    const std::vector<LabelRecord>& records, double fraction, std::uint64_t seed,
    const std::vector<std::string>& class_names = {}) {
    std::vector<std::size_t> labels;
    for (const auto& r : records) labels.push_back(r.class_index);
    return partition_by_indices(records, stratified_val_indices(labels, fraction, seed, class_names));
}

// ---------------------------------------------------------------------------
// Patches and standardization

/// All patches of a clip set, flattened to one contiguous buffer.
struct PatchBank {
    std::size_t n_mels = 0, frames = 0;
    std::vector<float> values;
    std::vector<std::size_t> labels;
    std::vector<Origin> origins;
    std::vector<std::size_t> clip_of;      // patch -> clip index
    std::vector<std::size_t> clip_offset;  // clip -> first patch; size n_clips + 1

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t patch_size() const noexcept { return n_mels * frames; }
    std::size_t n_clips() const noexcept { return clip_offset.empty() ? 0 : clip_offset.size() - 1; }
    std::span<const float> patch(std::size_t i) const {
        return std::span<const float>(values).subspan(i * patch_size(), patch_size());
    }
};

inline PatchBank make_patch_bank(const std::vector<ClipFeatures>& clips, const FeatureConfig& cfg) {
    PatchBank bank;
    bank.n_mels = cfg.n_mels;
    bank.frames = cfg.patch_frames();
    bank.clip_offset.push_back(0);
    for (std::size_t c = 0; c < clips.size(); ++c) {
        if (clips[c].logmel.n_mels != cfg.n_mels)
            throw ShapeError("clip " + clips[c].clip_id + ": log-mel has " + std::to_string(clips[c].logmel.n_mels) +
                             " bands, feature config expects " + std::to_string(cfg.n_mels));
        for (auto& p : patchify(clips[c].logmel, clips[c].label, cfg)) {
            bank.values.insert(bank.values.end(), p.values.begin(), p.values.end());
            bank.labels.push_back(clips[c].label);
            bank.origins.push_back(clips[c].origin);
            bank.clip_of.push_back(c);
        }
        bank.clip_offset.push_back(bank.labels.size());
    }
    return bank;
}

/// Per mel band zero-mean / unit-variance scaling fitted on training patches.
struct Standardizer {
    std::vector<float> mean, stddev;

    static Standardizer fit(const PatchBank& bank) {
        if (bank.size() == 0) throw ArgumentError("standardizer: no training patches");
        Standardizer s;
        s.mean.assign(bank.n_mels, 0.0f);
        s.stddev.assign(bank.n_mels, 1.0f);
        const double count = static_cast<double>(bank.size() * bank.frames);
        for (std::size_t j = 0; j < bank.n_mels; ++j) {
            double sum = 0.0, sq = 0.0;
            for (std::size_t p = 0; p < bank.size(); ++p) {
                const float* row = bank.values.data() + p * bank.patch_size() + j * bank.frames;
                for (std::size_t t = 0; t < bank.frames; ++t) sum += row[t];
            }
            const double m = sum / count;
            for (std::size_t p = 0; p < bank.size(); ++p) {
                const float* row = bank.values.data() + p * bank.patch_size() + j * bank.frames;
                for (std::size_t t = 0; t < bank.frames; ++t) sq += (row[t] - m) * (row[t] - m);
            }
            const double sd = std::sqrt(sq / count);
            s.mean[j] = static_cast<float>(m);
            s.stddev[j] = static_cast<float>(sd > 1e-8 ? sd : 1.0);
        }
        return s;
    }

    void apply(std::span<float> patch, std::size_t frames) const {
        for (std::size_t j = 0; j < mean.size(); ++j)
            for (std::size_t t = 0; t < frames; ++t) {
                float& v = patch[j * frames + t];
                v = (v - mean[j]) / stddev[j];
            }
    }

    void apply(PatchBank& bank) const {
        if (bank.n_mels != mean.size()) throw ShapeError("standardizer: band count mismatch");
        for (std::size_t p = 0; p < bank.size(); ++p)
            apply(std::span<float>(bank.values).subspan(p * bank.patch_size(), bank.patch_size()), bank.frames);
    }
};

// ---------------------------------------------------------------------------
// Prediction

struct ClipPrediction {
    std::vector<double> probabilities;
    std::size_t predicted = 0;
};

/// Renormalised per-class geometric mean of patch probability vectors; ties go to the lowest class.
inline ClipPrediction aggregate_geometric(const std::vector<std::vector<double>>& patch_probs) {
    if (patch_probs.empty()) throw ArgumentError("predict_clip: no patches");
    const std::size_t k = patch_probs.front().size();
    ClipPrediction out;
    out.probabilities.assign(k, 0.0);
    for (const auto& p : patch_probs) {
        if (p.size() != k) throw ShapeError("predict_clip: patch predictions differ in length");
        for (std::size_t c = 0; c < k; ++c) out.probabilities[c] += std::log(p[c] + 1e-12);
    }
    double total = 0.0;
    for (auto& g : out.probabilities) {
        g = std::exp(g / static_cast<double>(patch_probs.size()));
        total += g;
    }
    for (auto& g : out.probabilities) g /= total;
    out.predicted = static_cast<std::size_t>(
        std::max_element(out.probabilities.begin(), out.probabilities.end()) - out.probabilities.begin());
    return out;
}

/// Trained network plus the feature scaling it expects.
struct Model {
    nn::Network<float> network;
    Standardizer standardizer;
};

/// Inference-mode softmax outputs for patches [first, first + count) of a standardized bank.
inline std::vector<std::vector<double>> predict_patches(nn::Network<float>& net, const PatchBank& bank, std::size_t first,
                                                        std::size_t count, std::size_t chunk = 64) {
    std::vector<std::vector<double>> out;
    out.reserve(count);
    for (std::size_t start = first; start < first + count; start += chunk) {
        const std::size_t n = std::min(chunk, first + count - start);
        nn::Tensor4<float> x({n, 1, bank.n_mels, bank.frames});
        std::copy(bank.values.begin() + static_cast<std::ptrdiff_t>(start * bank.patch_size()),
                  bank.values.begin() + static_cast<std::ptrdiff_t>((start + n) * bank.patch_size()), x.data());
        const auto y = net.forward(x, nn::Mode::Infer);
        for (std::size_t i = 0; i < n; ++i) {
            auto row = y.sample(i);
            out.emplace_back(row.begin(), row.end());
        }
    }
    return out;
}

/// Clip-level prediction from raw (unstandardized) patches.
inline ClipPrediction predict_clip(Model& model, const std::vector<LogMelPatch>& patches) {
    if (patches.empty()) throw ArgumentError("predict_clip: no patches");
    PatchBank bank;
    bank.n_mels = patches.front().n_mels;
    bank.frames = patches.front().n_frames;
    for (const auto& p : patches) {
        bank.values.insert(bank.values.end(), p.values.begin(), p.values.end());
        bank.labels.push_back(p.label);
    }
    model.standardizer.apply(bank);
    return aggregate_geometric(predict_patches(model.network, bank, 0, bank.size()));
}

/// Fraction of clips whose aggregated prediction matches the label. `predict` maps a clip index
/// of the bank to per-patch probability vectors.
template <typename PatchPredictor>
double clip_accuracy(const PatchBank& bank, const std::vector<std::size_t>& clip_labels, PatchPredictor&& predict) {
    if (bank.n_clips() == 0) throw ArgumentError("evaluate: empty test set");
    std::size_t correct = 0;
    for (std::size_t c = 0; c < bank.n_clips(); ++c)
        if (aggregate_geometric(predict(c)).predicted == clip_labels[c]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(bank.n_clips());
}

inline double evaluate_standardized(nn::Network<float>& net, const PatchBank& bank, const std::vector<std::size_t>& labels) {
    if (bank.n_clips() == 0) throw ArgumentError("evaluate: empty test set");
    const auto all = predict_patches(net, bank, 0, bank.size());
    return clip_accuracy(bank, labels, [&](std::size_t c) {
        return std::vector<std::vector<double>>(all.begin() + static_cast<std::ptrdiff_t>(bank.clip_offset[c]),
                                                all.begin() + static_cast<std::ptrdiff_t>(bank.clip_offset[c + 1]));
    });
}

inline double evaluate(Model& model, const std::vector<ClipFeatures>& clips, const FeatureConfig& cfg) {
    if (clips.empty()) throw ArgumentError("evaluate: empty test set");
    auto bank = make_patch_bank(clips, cfg);
    model.standardizer.apply(bank);
    std::vector<std::size_t> labels;
    for (const auto& c : clips) labels.push_back(c.label);
    return evaluate_standardized(model.network, bank, labels);
}

// ---------------------------------------------------------------------------
// Training

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_accuracy = 0.0;
    double learning_rate = 0.0;

    bool operator==(const EpochRecord&) const = default;
};
using History = std::vector<EpochRecord>;

inline std::string format_history_csv(const History& h) {
    std::ostringstream out;
    out << "epoch,train_loss,val_accuracy,learning_rate\n";
    out.precision(9);
    for (const auto& e : h) out << e.epoch << ',' << e.train_loss << ',' << e.val_accuracy << ',' << e.learning_rate << '\n';
    return out.str();
}

struct TrainResult {
    Model model;
    History history;
    std::size_t best_epoch = 0;
};

/// Minibatch training with Adam, learning-rate halving on validation plateaus, early stopping,
/// and restoration of the best validation epoch's weights.
inline TrainResult train(nn::Network<float> network, const std::vector<ClipFeatures>& train_clips,
                         const std::vector<ClipFeatures>& val_clips, const FeatureConfig& fcfg, const TrainConfig& cfg) {
    cfg.validate();
    if (train_clips.empty()) throw ArgumentError("train: no training clips");
    if (val_clips.empty()) throw ArgumentError("train: no validation clips");

    auto bank = make_patch_bank(train_clips, fcfg);
    const auto standardizer = Standardizer::fit(bank);
    standardizer.apply(bank);
    auto val_bank = make_patch_bank(val_clips, fcfg);
    standardizer.apply(val_bank);
    std::vector<std::size_t> val_labels;
    for (const auto& c : val_clips) val_labels.push_back(c.label);

    const auto out_shape = network.output_shape({1, 1, bank.n_mels, bank.frames});
    const std::size_t n_classes = out_shape.c;
    for (auto l : bank.labels)
        if (l >= n_classes) throw ArgumentError("train: label " + std::to_string(l) + " exceeds network outputs");

    nn::Adam<float> adam(nn::AdamConfig{cfg.initial_lr});
    nn::PlateauHalver plateau(cfg.initial_lr, cfg.plateau_window);
    std::mt19937_64 shuffle_rng(splitmix64(cfg.seed ^ 0x5AFF1Eu));
    std::vector<std::size_t> order(bank.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult result;
    std::vector<double> val_history;
    std::vector<float> best_state = network.snapshot();
    double best_acc = -1.0;

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const double lr = plateau.learning_rate();
        adam.set_learning_rate(lr);
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t b = std::min(cfg.batch_size, order.size() - start);
            nn::Tensor4<float> x({b, 1, bank.n_mels, bank.frames});
            std::vector<std::size_t> labels(b);
            std::vector<Origin> origins(b);
            for (std::size_t i = 0; i < b; ++i) {
                const std::size_t p = order[start + i];
                const auto src = bank.patch(p);
                std::copy(src.begin(), src.end(), x.sample(i).begin());
                labels[i] = bank.labels[p];
                origins[i] = bank.origins[p];
            }
            const auto probs = network.forward(x, nn::Mode::Train);
            const auto batch = losses::selective_batch_loss<float>(probs.span(), n_classes, labels, origins, cfg.loss);
            if (!std::isfinite(batch.total))
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(n_batches) + " (loss family " + losses::to_string(cfg.loss.family) + ")");
            loss_sum += static_cast<double>(batch.total);
            ++n_batches;
            network.zero_grad();
            network.backward(nn::Tensor4<float>(probs.shape(), batch.grad));
            try {
                adam.step(network.params());
            } catch (const NumericError& e) {
                throw NumericError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(n_batches - 1) + ": " +
                                   e.what());
            }
        }

        const double val_acc = evaluate_standardized(network, val_bank, val_labels);
        result.history.push_back({epoch, loss_sum / static_cast<double>(n_batches), val_acc, lr});
        val_history.push_back(val_acc);
        if (val_acc > best_acc) {
            best_acc = val_acc;
            best_state = network.snapshot();
            result.best_epoch = epoch;
        }
        plateau.update(val_acc);
        if (nn::early_stopper(val_history, cfg.patience) == nn::StopDecision::Stop) break;
    }

    network.restore(best_state);
    result.model = Model{std::move(network), standardizer};
    return result;
}

// ---------------------------------------------------------------------------
// Multi-run experiments

struct ExperimentData {
    std::vector<ClipFeatures> train;  // training pool for the chosen subset
    std::vector<ClipFeatures> test;
    std::size_t n_classes = 0;
    FeatureConfig features;
    std::vector<std::string> class_names;
};

struct RunOutcome {
    std::size_t run = 0;
    std::uint64_t seed = 0;
    double accuracy = 0.0;
    TrainResult trained;
};

struct RunReport {
    TrainConfig config;
    std::vector<double> accuracies;
    double mean = 0.0;
    double ci95 = 0.0;
    std::size_t n_runs = 0;
    std::vector<History> histories;
    std::vector<std::size_t> best_epochs;
};

/// Thrown when a run fails; carries the accuracies of runs that finished.
class ExperimentError : public Error {
  public:
    ExperimentError(ErrorKind kind, const std::string& what, std::vector<double> partial)
        : Error(kind, what), partial_(std::move(partial)) {}
    const std::vector<double>& partial_results() const noexcept { return partial_; }

  private:
    std::vector<double> partial_;
};

/// One training run: stratified validation split, fresh network, train, test.
inline RunOutcome run_once(const ExperimentData& data, const TrainConfig& cfg, std::size_t run) {
    TrainConfig rc = cfg;
    rc.seed = cfg.seed + run;
    std::vector<std::size_t> labels;
    for (const auto& c : data.train) labels.push_back(c.label);
    const auto val_idx = stratified_val_indices(labels, rc.val_fraction, rc.seed, data.class_names);
    auto [tr, val] = partition_by_indices(data.train, val_idx);
    auto net = nn::build_baseline<float>(data.features.n_mels, data.features.patch_frames(), data.n_classes, rc.network,
                                         rc.seed);
    RunOutcome out;
    out.run = run;
    out.seed = rc.seed;
    out.trained = train(std::move(net), tr, val, data.features, rc);
    out.accuracy = evaluate(out.trained.model, data.test, data.features);
    return out;
}

/// Runs seeds seed, seed+1, ... and reports mean and Student-t 95% half-width. With jobs > 1,
/// runs execute on worker threads; results do not depend on the job count.
inline RunReport run_experiment(const ExperimentData& data, const TrainConfig& cfg, std::size_t n_runs = 7,
                                std::size_t jobs = 1,
                                const std::function<void(const RunOutcome&)>& on_run = {}) {
    if (n_runs < 2) throw ConfigError("run_experiment: need at least 2 runs");
    cfg.validate();
    if (data.test.empty()) throw ArgumentError("run_experiment: empty test set");

    std::vector<std::optional<RunOutcome>> outcomes(n_runs);
    std::vector<std::string> errors(n_runs);
    std::vector<ErrorKind> kinds(n_runs, ErrorKind::Numeric);
    std::mutex callback_mutex;
    auto work = [&](std::size_t r) {
        try {
            outcomes[r] = run_once(data, cfg, r);
            if (on_run) {
                std::lock_guard<std::mutex> lock(callback_mutex);
                on_run(*outcomes[r]);
                outcomes[r]->trained.model = Model{};
            }
        } catch (const Error& e) {
            errors[r] = e.what();
            kinds[r] = e.kind();
        } catch (const std::exception& e) {
            errors[r] = e.what();
        }
    };

    jobs = std::max<std::size_t>(1, std::min(jobs, n_runs));
    if (jobs == 1) {
        for (std::size_t r = 0; r < n_runs; ++r) work(r);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (std::size_t j = 0; j < jobs; ++j)
            pool.emplace_back([&] {
                for (std::size_t r = next++; r < n_runs; r = next++) work(r);
            });
        for (auto& t : pool) t.join();
    }

    RunReport report;
    report.config = cfg;
    report.n_runs = n_runs;
    for (std::size_t r = 0; r < n_runs; ++r) {
        if (!outcomes[r]) {
            std::vector<double> partial;
            for (const auto& o : outcomes)
                if (o) partial.push_back(o->accuracy);
            throw ExperimentError(kinds[r], "run " + std::to_string(r) + " failed: " + errors[r], partial);
        }
        report.accuracies.push_back(outcomes[r]->accuracy);
        report.histories.push_back(outcomes[r]->trained.history);
        report.best_epochs.push_back(outcomes[r]->trained.best_epoch);
    }
    report.mean = stats::mean(report.accuracies);
    report.ci95 = stats::ci95_halfwidth(report.accuracies);
    return report;
}

}  // namespace sednoise
