#include "groupforge/optimizer.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "groupforge/error.hpp"

namespace groupforge {

std::string_view to_string(Schedule schedule) {
  switch (schedule) {
    case Schedule::kCosine: return "cosine";
    case Schedule::kLinear: return "linear";
    case Schedule::kConstant: return "constant";
  }
  return "constant";
}

Schedule parse_schedule(std::string_view name) {
  if (name == "cosine") return Schedule::kCosine;
  if (name == "linear") return Schedule::kLinear;
  if (name == "constant") return Schedule::kConstant;
  throw ConfigError(fmt::format("unknown schedule '{}' (expected cosine|linear|constant)", name));
}

double schedule_factor(Schedule schedule, std::size_t epoch, std::size_t total_epochs) {
  if (total_epochs == 0) return 1.0;
  const double t = static_cast<double>(epoch) / static_cast<double>(total_epochs);
  switch (schedule) {
    case Schedule::kCosine: return 0.5 * (1.0 + std::cos(std::numbers::pi * t));
    case Schedule::kLinear: return 1.0 - t;
    case Schedule::kConstant: return 1.0;
  }
  return 1.0;
}

AdamW::AdamW(std::size_t parameter_count, AdamWConfig config)
    : config_(config), m_(parameter_count, 0.0), v_(parameter_count, 0.0) {}

void AdamW::step(std::span<double> params, std::span<const double> grads, double lr_scale) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw Error("AdamW: parameter/gradient size mismatch");
  ++step_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double lr = config_.learning_rate * lr_scale;
  const double decay = 1.0 - lr * config_.weight_decay;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_));

  for (std::size_t k = 0; k < params.size(); ++k) {
    const double g = grads[k];
    m_[k] = b1 * m_[k] + (1.0 - b1) * g;
    v_[k] = b2 * v_[k] + (1.0 - b2) * g * g;
    const double m_hat = m_[k] / bc1;
    const double v_hat = v_[k] / bc2;
    params[k] = params[k] * decay - lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
  }
}

}  // namespace groupforge
