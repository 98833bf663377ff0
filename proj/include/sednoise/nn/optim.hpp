#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "sednoise/errors.hpp"
#include "sednoise/nn/layers.hpp"

namespace sednoise::nn {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adam with bias correction. Moment buffers are created lazily on the first step
/// and must keep matching the parameter list afterwards.
template <typename T>
class Adam {
  public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    double learning_rate() const noexcept { return cfg_.learning_rate; }
    void set_learning_rate(double lr) noexcept { cfg_.learning_rate = lr; }
    std::uint64_t step_count() const noexcept { return step_; }
    const AdamConfig& config() const noexcept { return cfg_; }

    void step(std::span<ParamRef<T>> params) {
        if (m_.empty()) {
            for (const auto& p : params) {
                m_.emplace_back(p.value.size(), 0.0);
                v_.emplace_back(p.value.size(), 0.0);
            }
        }
        if (m_.size() != params.size()) throw ShapeError("Adam: parameter list changed between steps");
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (m_[i].size() != params[i].value.size() || params[i].grad.size() != params[i].value.size())
                throw ShapeError("Adam: shape mismatch for parameter " + params[i].name);
            for (T g : params[i].grad)
                if (!std::isfinite(static_cast<double>(g)))
                    throw NumericError("Adam: non-finite gradient in parameter " + params[i].name);
        }

        ++step_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& m = m_[i];
            auto& v = v_[i];
            auto value = params[i].value;
            auto grad = params[i].grad;
            for (std::size_t j = 0; j < value.size(); ++j) {
                const double g = static_cast<double>(grad[j]);
                m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
                v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
                const double mhat = m[j] / bc1;
                const double vhat = v[j] / bc2;
                value[j] = static_cast<T>(static_cast<double>(value[j]) -
                                          cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon));
            }
        }
    }

    void step(std::vector<ParamRef<T>> params) { step(std::span<ParamRef<T>>(params)); }

  private:
    AdamConfig cfg_;
    std::uint64_t step_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

/// Halves the learning rate after `window` consecutive epochs without a strict
/// improvement of the best validation accuracy. The stall counter restarts after each halving.
class PlateauHalver {
  public:
    PlateauHalver(double initial_lr, std::size_t window = 5) : lr_(initial_lr), window_(window) {}

    /// Feeds one epoch's validation accuracy and returns the learning rate to use next.
    double update(double val_accuracy) {
        if (!seen_ || val_accuracy > best_) {
            best_ = val_accuracy;
            seen_ = true;
            stall_ = 0;
        } else if (++stall_ >= window_) {
            lr_ /= 2.0;
            stall_ = 0;
        }
        return lr_;
    }

    double learning_rate() const noexcept { return lr_; }

  private:
    double lr_;
    std::size_t window_;
    double best_ = 0.0;
    bool seen_ = false;
    std::size_t stall_ = 0;
};

/// Learning rate after replaying a full validation history through PlateauHalver.
inline double plateau_halver(std::span<const double> history, double initial_lr, std::size_t window = 5) {
    PlateauHalver h(initial_lr, window);
    for (double a : history) h.update(a);
    return h.learning_rate();
}

enum class StopDecision { Continue, Stop };

/// Stop once `patience` consecutive epochs pass without strict improvement over the best value.
inline StopDecision early_stopper(std::span<const double> history, std::size_t patience = 15) {
    if (history.empty()) return StopDecision::Continue;
    double best = history[0];
    std::size_t since = 0;
    for (std::size_t i = 1; i < history.size(); ++i) {
        if (history[i] > best) {
            best = history[i];
            since = 0;
        } else {
            ++since;
        }
    }
    return since >= patience ? StopDecision::Stop : StopDecision::Continue;
}

}  // namespace sednoise::nn
