#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "groupforge/groups.hpp"
#include "groupforge/random.hpp"

namespace groupforge {

enum class StrategyKind { kNone, kSubsetting, kUpsampling, kUpweighting, kMixture };

std::string_view to_string(StrategyKind kind);
/// Parses none|subsetting|upsampling|upweighting|mixture.
StrategyKind parse_strategy_kind(std::string_view name);

struct BalancingStrategy {
  StrategyKind kind = StrategyKind::kNone;
  /// Target class-imbalance ratio; required iff kind == kMixture.
  std::optional<double> mixture_ratio;

  /// `none`, `upsampling`, ... or `mixture-<ratio>`.
  std::string label() const;
};

/// Sampling distribution over the active examples. probabilities[k] belongs to
/// active_indices[k].
struct SamplingPlan {
  IndexSet active_indices;
  std::vector<double> probabilities;

  std::size_t size() const noexcept { return active_indices.size(); }
  friend bool operator==(const SamplingPlan&, const SamplingPlan&) = default;
};

/// Per-example loss multipliers over the whole dataset.
struct WeightPlan {
  std::vector<double> weights;
  friend bool operator==(const WeightPlan&, const WeightPlan&) = default;
};

/// Every class reduced to the size of the smallest class, uniformly at random
/// within each class. Result is sorted.
IndexSet subset_balanced(const GroupPartition& partition, Rng& rng);

/// Classes larger than min_y |Omega_y| are cut to round(r * min), at least 1.
/// Accepts r in [1, ratio + kRatioSlack]; a request within the slack above the
/// dataset ratio keeps everything.
IndexSet subset_to_ratio(const GroupPartition& partition, double r, Rng& rng);

/// Tolerance for ratios quoted to two decimals (e.g. 3.31 for 3682/1113).
inline constexpr double kRatioSlack = 0.005;

/// Class-balanced in expectation: p_i = 1 / (|Y| * |active cap Omega_y|).
SamplingPlan upsampling_plan(const GroupPartition& partition, const IndexSet& active);

/// Uniform 1 / |active| over the active set.
SamplingPlan uniform_plan(const IndexSet& active);

/// gamma_y = max_y' |Omega_y'| / |Omega_y|, broadcast to each example.
WeightPlan upweighting_plan(const GroupPartition& partition);

struct MixturePlan {
  IndexSet active;
  SamplingPlan plan;
};

/// subset_to_ratio followed by upsampling_plan on the retained examples.
MixturePlan mixture_plan(const GroupPartition& partition, double r, Rng& rng);

/// Draws i.i.d. example indices with replacement from a SamplingPlan.
class MinibatchSampler {
 public:
  explicit MinibatchSampler(const SamplingPlan& plan);

  std::vector<std::size_t> draw(std::size_t batch_size, Rng& rng);
  void draw_into(std::span<std::size_t> out, Rng& rng);

 private:
  IndexSet active_;
  std::discrete_distribution<std::size_t> distribution_;
};

std::vector<std::size_t> draw_minibatch(const SamplingPlan& plan, std::size_t batch_size, Rng& rng);

/// Resolved training inputs for one strategy: the sampling plan, and the
/// weight plan when the strategy reweights the loss.
struct ResolvedStrategy {
  SamplingPlan plan;
  std::optional<WeightPlan> weights;
};

/// `rng` is consumed only by strategies that subset.
ResolvedStrategy resolve_strategy(const BalancingStrategy& strategy,
                                  const GroupPartition& partition, Rng& rng);

}  // namespace groupforge
