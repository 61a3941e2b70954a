#include "ggsa/adam.hpp"

#include <cmath>

namespace ggsa::models {

AdamState::AdamState(AdamConfig cfg, const ParamStore& params) : cfg_(cfg) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& [name, t] : params.items()) {
        m_.emplace_back(t->values.size(), 0.0);
        v_.emplace_back(t->values.size(), 0.0);
    }
}

void adam_step(AdamState& state, ParamStore& params,
               const std::vector<std::vector<double>>& grads) {
    auto& items = params.items();
    if (grads.size() != items.size() || state.m_.size() != items.size()) {
        fail(ErrorKind::Dimension, "adam_step: gradient/parameter count mismatch");
    }
    const auto& cfg = state.cfg_;
    state.step_ += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step_));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step_));

    for (std::size_t k = 0; k < items.size(); ++k) {
        auto& [name, t] = items[k];
        const auto& g = grads[k];
        if (g.size() != t->values.size()) {
            fail(ErrorKind::Dimension, "adam_step: gradient shape mismatch for " + name);
        }
        auto& m = state.m_[k];
        auto& v = state.v_[k];
        std::vector<double> next(t->values);
        for (std::size_t i = 0; i < g.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            next[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
        t = ad::Tensor::make(t->shape, std::move(next), true);
    }
}

void adam_step_from_grads(AdamState& state, ParamStore& params) {
    std::vector<std::vector<double>> grads;
    grads.reserve(params.size());
    for (const auto& [name, t] : params.items()) {
        if (!t->has_grad()) {
            fail(ErrorKind::Contract, "parameter " + name + " has no gradient");
        }
        grads.push_back(t->grad);
    }
    adam_step(state, params, grads);
}

} // namespace ggsa::models
