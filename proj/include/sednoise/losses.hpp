#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sednoise/errors.hpp"
#include "sednoise/types.hpp"

namespace sednoise::losses {

/// Predictions are clamped to [kMinProbability, 1] before any log or power.
inline constexpr double kMinProbability = 1e-7;

enum class Family { CCE, Soft, Lq, MaskMax, MaskStat };
using sednoise::Origin;

inline std::string to_string(Family f) {
    switch (f) {
        case Family::CCE: return "cce";
        case Family::Soft: return "soft";
        case Family::Lq: return "lq";
        case Family::MaskMax: return "mask_max";
        case Family::MaskStat: return "mask_stat";
    }
    return "?";
}

inline Family family_from_string(const std::string& s) {
    if (s == "cce") return Family::CCE;
    if (s == "soft") return Family::Soft;
    if (s == "lq") return Family::Lq;
    if (s == "mask_max") return Family::MaskMax;
    if (s == "mask_stat") return Family::MaskStat;
    throw ConfigError("unknown loss family '" + s + "' (expected cce, soft, lq, mask_max, mask_stat)");
}

struct LossConfig {
    Family family = Family::CCE;
    double beta = 1.0;   // soft bootstrapping weight on the given label
    double q = 0.7;      // Lq exponent
    double m = 1.0;      // max-fraction threshold
    double l = 0.0;      // median + l * sigma threshold
    bool selective = false;
    // Soft bootstrapping only: treat the bootstrapped target as a constant when differentiating.
    bool soft_constant_target = false;

    void validate() const {
        switch (family) {
            case Family::CCE: break;
            case Family::Soft:
                if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("soft bootstrapping: beta must lie in [0,1]");
                break;
            case Family::Lq:
                if (!(q > 0.0 && q <= 1.0)) throw ConfigError("lq: q must lie in (0,1]; use cce for the q->0 limit");
                break;
            case Family::MaskMax:
                if (!(m >= 0.0 && m <= 1.0)) throw ConfigError("mask_max: m must lie in [0,1]");
                break;
            case Family::MaskStat:
                if (!(l >= 0.0)) throw ConfigError("mask_stat: l must be >= 0");
                break;
        }
    }

    /// Short label such as "lq_q0.7" used in file names and reports.
    std::string label() const;
};

namespace detail {
inline std::string trim_number(double v) {
    std::string s = std::to_string(v);
    s.erase(s.find_last_not_of('0') + 1);
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
}
}  // namespace detail

inline std::string LossConfig::label() const {
    std::string base;
    switch (family) {
        case Family::CCE: base = "cce"; break;
        case Family::Soft: base = "soft_beta" + detail::trim_number(beta); break;
        case Family::Lq: base = "lq_q" + detail::trim_number(q); break;
        case Family::MaskMax: base = "mask_max_m" + detail::trim_number(m); break;
        case Family::MaskStat: base = "mask_stat_l" + detail::trim_number(l); break;
    }
    if (selective && family != Family::CCE) base += "_sel";
    return base;
}

template <typename T>
struct LossResult {
    T loss{};
    std::vector<T> grad;  // d loss / d prediction
};

namespace detail {

template <typename T>
T clamp_prob(T p) {
    return std::clamp(p, static_cast<T>(kMinProbability), T(1));
}

inline void check_label(std::size_t label, std::size_t k) {
    if (label >= k)
        throw ArgumentError("label " + std::to_string(label) + " out of range for " + std::to_string(k) + " classes");
}

}  // namespace detail

/// Categorical cross-entropy against a one-hot target given by its class index.
template <typename T>
LossResult<T> cce(std::span<const T> pred, std::size_t label) {
    detail::check_label(label, pred.size());
    LossResult<T> r{T(0), std::vector<T>(pred.size(), T(0))};
    const T pc = detail::clamp_prob(pred[label]);
    r.loss = -std::log(pc);
    r.grad[label] = -T(1) / pc;
    return r;
}

/// -sum_k [beta*y_k + (1-beta)*p_k] log p_k. The default gradient differentiates
/// through both occurrences of p; `constant_target` freezes the bracket.
template <typename T>
LossResult<T> soft_bootstrap(std::span<const T> pred, std::size_t label, double beta, bool constant_target = false) {
    if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("soft bootstrapping: beta must lie in [0,1]");
    detail::check_label(label, pred.size());
    const T b = static_cast<T>(beta);
    LossResult<T> r{T(0), std::vector<T>(pred.size(), T(0))};
    for (std::size_t k = 0; k < pred.size(); ++k) {
        const T p = detail::clamp_prob(pred[k]);
        const T y = k == label ? T(1) : T(0);
        const T target = b * y + (T(1) - b) * p;
        const T lp = std::log(p);
        r.loss -= target * lp;
        if (constant_target)
            r.grad[k] = -target / p;
        else
            r.grad[k] = -b * y / p - (T(1) - b) * (lp + T(1));
    }
    return r;
}

/// (1 - p_c^q) / q. q = 0 is rejected; the q -> 0 limit is cce().
template <typename T>
LossResult<T> lq_loss(std::span<const T> pred, std::size_t label, double q) {
    if (!(q > 0.0 && q <= 1.0)) throw ConfigError("lq: q must lie in (0,1]; use cce for the q->0 limit");
    detail::check_label(label, pred.size());
    LossResult<T> r{T(0), std::vector<T>(pred.size(), T(0))};
    const T pc = detail::clamp_prob(pred[label]);
    const T qq = static_cast<T>(q);
    r.loss = (T(1) - std::pow(pc, qq)) / qq;
    r.grad[label] = -std::pow(pc, qq - T(1));
    return r;
}

template <typename T>
struct BatchStats {
    T max{}, median{}, stddev{};
};

/// Max, median (mean of the two central order statistics for even sizes) and
/// population standard deviation.
template <typename T>
BatchStats<T> batch_stats(std::span<const T> losses) {
    if (losses.empty()) throw ArgumentError("batch statistics of an empty batch");
    std::vector<T> sorted(losses.begin(), losses.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t b = sorted.size();
    BatchStats<T> s;
    s.max = sorted.back();
    s.median = b % 2 == 1 ? sorted[b / 2] : (sorted[b / 2 - 1] + sorted[b / 2]) / T(2);
    double mean = 0.0;
    for (T v : losses) mean += static_cast<double>(v);
    mean /= static_cast<double>(b);
    double var = 0.0;
    for (T v : losses) var += (static_cast<double>(v) - mean) * (static_cast<double>(v) - mean);
    s.stddev = static_cast<T>(std::sqrt(var / static_cast<double>(b)));
    return s;
}

struct MaskResult {
    std::vector<std::size_t> kept;
    double threshold = 0.0;
    bool fallback = false;  // every sample would have been discarded, so all were kept
};

/// Threshold per-sample losses and return the indices kept (loss <= t). When `origins`
/// is non-empty and `cfg.selective` is set, only noisy-origin samples may be discarded.
template <typename T>
MaskResult mask_threshold(std::span<const T> losses, const LossConfig& cfg, std::span<const Origin> origins = {}) {
    if (losses.empty()) throw ArgumentError("mask_threshold: empty batch");
    if (!origins.empty() && origins.size() != losses.size())
        throw ArgumentError("mask_threshold: origin flags do not match batch size");
    MaskResult r;
    if (cfg.family == Family::MaskMax) {
        r.threshold = cfg.m * static_cast<double>(batch_stats(losses).max);
    } else if (cfg.family == Family::MaskStat) {
        if (losses.size() < 2) throw ArgumentError("mask_threshold: median+l*sigma needs at least 2 samples");
        const auto s = batch_stats(losses);
        r.threshold = static_cast<double>(s.median) + cfg.l * static_cast<double>(s.stddev);
    } else {
        throw ConfigError("mask_threshold: family " + to_string(cfg.family) + " is not a masking family");
    }
    const bool protect_clean = cfg.selective && !origins.empty();
    for (std::size_t i = 0; i < losses.size(); ++i) {
        const bool susceptible = !protect_clean || origins[i] == Origin::Noisy;
        if (!susceptible || static_cast<double>(losses[i]) <= r.threshold) r.kept.push_back(i);
    }
    if (r.kept.empty()) {
        r.kept.resize(losses.size());
        std::iota(r.kept.begin(), r.kept.end(), std::size_t{0});
        r.fallback = true;
    }
    return r;
}

template <typename T>
struct BatchLoss {
    T total{};
    std::vector<T> grad;  // B x K, d total / d prediction
    std::vector<T> per_sample;
    std::vector<bool> kept;
};

/// Mean loss over contributing samples of a B x K prediction batch, applying the robust
/// family to noisy-origin samples only when `cfg.selective` is set.
template <typename T>
BatchLoss<T> selective_batch_loss(std::span<const T> pred, std::size_t n_classes, std::span<const std::size_t> labels,
                                  std::span<const Origin> origins, const LossConfig& cfg) {
    const std::size_t b = labels.size();
    if (b == 0) throw ArgumentError("selective_batch_loss: empty batch");
    if (n_classes == 0 || pred.size() != b * n_classes)
        throw ArgumentError("selective_batch_loss: prediction size does not match batch x classes");
    if (origins.size() != b) throw ArgumentError("selective_batch_loss: origin flags do not match batch size");
    for (auto o : origins)
        if (o != Origin::Clean && o != Origin::Noisy) throw ArgumentError("selective_batch_loss: unknown origin flag");
    cfg.validate();

    BatchLoss<T> out{T(0), std::vector<T>(pred.size(), T(0)), std::vector<T>(b, T(0)), std::vector<bool>(b, true)};
    std::vector<std::vector<T>> grads(b);
    for (std::size_t i = 0; i < b; ++i) {
        auto p = pred.subspan(i * n_classes, n_classes);
        const bool robust = !cfg.selective || origins[i] == Origin::Noisy;
        LossResult<T> r;
        switch (cfg.family) {
            case Family::Soft:
                r = robust ? soft_bootstrap(p, labels[i], cfg.beta, cfg.soft_constant_target) : cce(p, labels[i]);
                break;
            case Family::Lq:
                r = robust ? lq_loss(p, labels[i], cfg.q) : cce(p, labels[i]);
                break;
            default:
                r = cce(p, labels[i]);
                break;
        }
        out.per_sample[i] = r.loss;
        grads[i] = std::move(r.grad);
    }

    if ((cfg.family == Family::MaskMax || cfg.family == Family::MaskStat) && b >= 2) {
        const auto m = mask_threshold<T>(out.per_sample, cfg, origins);
        std::fill(out.kept.begin(), out.kept.end(), false);
        for (auto i : m.kept) out.kept[i] = true;
    }

    std::size_t n_kept = 0;
    for (std::size_t i = 0; i < b; ++i) n_kept += out.kept[i] ? 1 : 0;
    const T scale = T(1) / static_cast<T>(n_kept);
    for (std::size_t i = 0; i < b; ++i) {
        if (!out.kept[i]) continue;
        out.total += out.per_sample[i];
        for (std::size_t k = 0; k < n_classes; ++k) out.grad[i * n_classes + k] = grads[i][k] * scale;
    }
    out.total *= scale;
    return out;
}

}  // namespace sednoise::losses
