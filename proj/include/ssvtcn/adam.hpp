#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ssvtcn/errors.hpp"
#include "ssvtcn/tensor.hpp"

namespace ssvtcn {

struct AdamConfig {
    double lr = 0.005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    std::size_t step_count = 0;

    explicit AdamState(std::size_t n = 0)
        : first_moment(n, 0.0), second_moment(n, 0.0) {}
};

// One bias-corrected Adam update: params -= lr * m_hat / (sqrt(v_hat) + eps).
inline void adam_step(std::vector<double>& params, const std::vector<double>& grads,
                      AdamState& state, const AdamConfig& cfg) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
        params.size() != state.second_moment.size()) {
        throw shape_error("adam_step: parameter/gradient/moment sizes disagree");
    }
    if (!(cfg.lr > 0.0) || cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 ||
        cfg.beta2 >= 1.0) {
        throw config_error("adam_step: lr must be > 0 and betas in [0, 1)");
    }
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.first_moment[i] = cfg.beta1 * state.first_moment[i] + (1.0 - cfg.beta1) * g;
        state.second_moment[i] = cfg.beta2 * state.second_moment[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = state.first_moment[i] / bc1;
        const double v_hat = state.second_moment[i] / bc2;
        params[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
}

// Optimizer over a fixed set of parameter tensors, one moment pair each.
class AdamOptimizer {
public:
    AdamOptimizer(std::vector<TensorPtr> params, AdamConfig cfg)
        : params_(std::move(params)), cfg_(cfg) {
        states_.reserve(params_.size());
        for (const auto& p : params_) {
            states_.emplace_back(p->size());
        }
    }

    void zero_grad() {
        for (auto& p : params_) {
            p->zero_grad();
        }
    }

    void step() {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            adam_step(params_[i]->values, params_[i]->grad, states_[i], cfg_);
        }
    }

    const AdamConfig& config() const { return cfg_; }

private:
    std::vector<TensorPtr> params_;
    std::vector<AdamState> states_;
    AdamConfig cfg_;
};

}  // namespace ssvtcn
