#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nl2lf/model.hpp"

namespace nl2lf::training {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update in place; step is the 1-based update count.
void adam_update(std::span<float> param, std::span<const float> grad, std::span<float> m, std::span<float> v,
                 std::int64_t step, const AdamConfig& cfg);

class Adam {
 public:
  Adam(const model::Parameters<float>& params, AdamConfig cfg);

  // Applies one update from the current gradients; parameters without a
  // gradient are left alone.
  void step(model::Parameters<float>& params);

  std::int64_t steps() const { return step_; }
  const AdamConfig& config() const { return cfg_; }
  std::vector<std::vector<float>>& first_moments() { return m_; }
  std::vector<std::vector<float>>& second_moments() { return v_; }
  const std::vector<std::vector<float>>& first_moments() const { return m_; }
  const std::vector<std::vector<float>>& second_moments() const { return v_; }
  void set_steps(std::int64_t step) { step_ = step; }

 private:
  AdamConfig cfg_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  std::int64_t step_ = 0;
};

double global_grad_norm(const model::Parameters<float>& params);

// Rescales every gradient so the global norm is at most max_norm; returns the
// norm before clipping.
double clip_grad_norm(model::Parameters<float>& params, double max_norm);

}  // namespace nl2lf::training
