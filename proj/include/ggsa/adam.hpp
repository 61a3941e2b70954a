#pragma once

#include <cstdint>
#include <vector>

#include "ggsa/params.hpp"

namespace ggsa::models {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second moment buffers aligned with a ParamStore's order.
class AdamState {
public:
    AdamState(AdamConfig cfg, const ParamStore& params);

    const AdamConfig& config() const { return cfg_; }
    std::int64_t step_count() const { return step_; }
    const std::vector<std::vector<double>>& first_moments() const { return m_; }
    const std::vector<std::vector<double>>& second_moments() const { return v_; }

    friend void adam_step(AdamState& state, ParamStore& params,
                          const std::vector<std::vector<double>>& grads);

private:
    AdamConfig cfg_;
    std::int64_t step_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

// Bias-corrected Adam update. `grads` must be aligned with `params` (one
// buffer per parameter, same sizes). Parameters are replaced by fresh
// tensors; the state advances by one step.
void adam_step(AdamState& state, ParamStore& params,
               const std::vector<std::vector<double>>& grads);

// Pulls each parameter's populated grad buffer and applies the update.
void adam_step_from_grads(AdamState& state, ParamStore& params);

} // namespace ggsa::models
