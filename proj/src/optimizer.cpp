#include "nl2lf/optimizer.hpp"

#include <cmath>
#include <utility>

#include "nl2lf/errors.hpp"

namespace nl2lf::training {

void adam_update(std::span<float> param, std::span<const float> grad, std::span<float> m, std::span<float> v,
                 std::int64_t step, const AdamConfig& cfg) {
  if (step < 1) throw ParameterError("adam_update: step is 1-based");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  const auto b1 = static_cast<float>(cfg.beta1), b2 = static_cast<float>(cfg.beta2);
  const auto lr = static_cast<float>(cfg.learning_rate / c1);
  const auto inv_c2 = static_cast<float>(1.0 / c2);
  const auto eps = static_cast<float>(cfg.eps);
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = b1 * m[i] + (1.0f - b1) * grad[i];
    v[i] = b2 * v[i] + (1.0f - b2) * grad[i] * grad[i];
    param[i] -= lr * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
  }
}

Adam::Adam(const model::Parameters<float>& params, AdamConfig cfg) : cfg_(cfg) {
  for (const auto& [name, t] : params.items()) {
    m_.emplace_back(t->size(), 0.0f);
    v_.emplace_back(t->size(), 0.0f);
  }
}

void Adam::step(model::Parameters<float>& params) {
  const auto& items = params.items();
  if (items.size() != m_.size()) throw ParameterError("Adam: parameter set changed since construction");
  ++step_;
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto& t = *items[i].second;
    if (!t.has_grad()) continue;
    adam_update(t.data(), std::as_const(t).grad(), m_[i], v_[i], step_, cfg_);
  }
}

double global_grad_norm(const model::Parameters<float>& params) {
  double sq = 0.0;
  for (const auto& [name, t] : params.items()) {
    for (float g : std::as_const(*t).grad()) sq += static_cast<double>(g) * g;
  }
  return std::sqrt(sq);
}

double clip_grad_norm(model::Parameters<float>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const auto factor = static_cast<float>(max_norm / norm);
    for (const auto& [name, t] : params.items()) {
      if (!t->has_grad()) continue;
      for (auto& g : t->grad()) g *= factor;
    }
  }
  return norm;
}

}  // namespace nl2lf::training
