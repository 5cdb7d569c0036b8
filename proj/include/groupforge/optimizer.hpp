#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace groupforge {

enum class Schedule { kCosine, kLinear, kConstant };

std::string_view to_string(Schedule schedule);
Schedule parse_schedule(std::string_view name);

/// Learning-rate multiplier for 0-based `epoch` out of `total_epochs`.
/// cosine: (1 + cos(pi * e / E)) / 2, linear: 1 - e / E, constant: 1.
double schedule_factor(Schedule schedule, std::size_t epoch, std::size_t total_epochs);

struct AdamWConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Schedule schedule = Schedule::kCosine;
};

/// Adam with decoupled weight decay:
///   p <- p - lr * wd * p
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
/// where lr already includes the schedule factor.
class AdamW {
 public:
  AdamW(std::size_t parameter_count, AdamWConfig config);

  void step(std::span<double> params, std::span<const double> grads, double lr_scale = 1.0);

  std::uint64_t step_count() const noexcept { return step_; }
  const AdamWConfig& config() const noexcept { return config_; }
  std::span<const double> first_moment() const noexcept { return m_; }
  std::span<const double> second_moment() const noexcept { return v_; }

 private:
  AdamWConfig config_;
  std::uint64_t step_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

}  // namespace groupforge
