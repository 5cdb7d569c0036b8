#include "groupforge/balancing.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>

#include <fmt/format.h>

#include "groupforge/error.hpp"

namespace groupforge {

std::string_view to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::kNone: return "none";
    case StrategyKind::kSubsetting: return "subsetting";
    case StrategyKind::kUpsampling: return "upsampling";
    case StrategyKind::kUpweighting: return "upweighting";
    case StrategyKind::kMixture: return "mixture";
  }
  return "none";
}

StrategyKind parse_strategy_kind(std::string_view name) {
  if (name == "none") return StrategyKind::kNone;
  if (name == "subsetting") return StrategyKind::kSubsetting;
  if (name == "upsampling") return StrategyKind::kUpsampling;
  if (name == "upweighting") return StrategyKind::kUpweighting;
  if (name == "mixture") return StrategyKind::kMixture;
  throw ConfigError(fmt::format(
      "unknown strategy '{}' (expected none|subsetting|upsampling|upweighting|mixture)", name));
}

std::string BalancingStrategy::label() const {
  if (kind == StrategyKind::kMixture && mixture_ratio)
    return fmt::format("mixture-{}", *mixture_ratio);
  return std::string(to_string(kind));
}

IndexSet subset_to_ratio(const GroupPartition& partition, double r, Rng& rng) {
  const double ratio = class_imbalance_ratio(partition);
  if (!(r >= 1.0) || r > ratio + kRatioSlack)
    throw Error(fmt::format("mixture ratio {} outside [1, {:.4f}]", r, ratio));

  const auto sizes = partition.class_sizes();
  const std::size_t smallest = *std::min_element(sizes.begin(), sizes.end());
  const auto target = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(r * static_cast<double>(smallest))));

  IndexSet kept;
  for (const auto& members : partition.omega_y) {
    const std::size_t keep = std::min(members.size(), target);
    // Selection sampling keeps the input order, so each class block stays sorted.
    std::sample(members.begin(), members.end(), std::back_inserter(kept), keep, rng);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

IndexSet subset_balanced(const GroupPartition& partition, Rng& rng) {
  return subset_to_ratio(partition, 1.0, rng);
}

SamplingPlan upsampling_plan(const GroupPartition& partition, const IndexSet& active) {
  const int num_classes = partition.schema.num_classes;
  std::vector<int> label_of(partition.num_examples(), -1);
  for (int y = 0; y < num_classes; ++y)
    for (std::size_t i : partition.omega_y[y]) label_of[i] = y;

  std::vector<std::size_t> active_per_class(num_classes, 0);
  for (std::size_t i : active) {
    if (i >= label_of.size()) throw Error(fmt::format("active index {} out of range", i));
    ++active_per_class[label_of[i]];
  }
  for (int y = 0; y < num_classes; ++y)
    if (active_per_class[y] == 0) throw Error(fmt::format("class {} has no active examples", y));

  SamplingPlan plan;
  plan.active_indices = active;
  plan.probabilities.reserve(active.size());
  for (std::size_t i : active) {
    const double denom =
        static_cast<double>(num_classes) * static_cast<double>(active_per_class[label_of[i]]);
    plan.probabilities.push_back(1.0 / denom);
  }
  return plan;
}

SamplingPlan uniform_plan(const IndexSet& active) {
  if (active.empty()) throw Error("uniform plan over an empty index set");
  SamplingPlan plan;
  plan.active_indices = active;
  plan.probabilities.assign(active.size(), 1.0 / static_cast<double>(active.size()));
  return plan;
}

WeightPlan upweighting_plan(const GroupPartition& partition) {
  const auto sizes = partition.class_sizes();
  for (std::size_t y = 0; y < sizes.size(); ++y)
    if (sizes[y] == 0) throw Error(fmt::format("class {} has no examples", y));
  const std::size_t largest = *std::max_element(sizes.begin(), sizes.end());

  WeightPlan plan;
  plan.weights.assign(partition.num_examples(), 1.0);
  for (std::size_t y = 0; y < sizes.size(); ++y) {
    const double gamma = static_cast<double>(largest) / static_cast<double>(sizes[y]);
    for (std::size_t i : partition.omega_y[y]) plan.weights[i] = gamma;
  }
  return plan;
}

MixturePlan mixture_plan(const GroupPartition& partition, double r, Rng& rng) {
  MixturePlan out;
  out.active = subset_to_ratio(partition, r, rng);
  out.plan = upsampling_plan(partition, out.active);
  return out;
}

MinibatchSampler::MinibatchSampler(const SamplingPlan& plan)
    : active_(plan.active_indices),
      distribution_(plan.probabilities.begin(), plan.probabilities.end()) {
  if (active_.empty() || active_.size() != plan.probabilities.size())
    throw Error("sampling plan is empty or inconsistent");
}

void MinibatchSampler::draw_into(std::span<std::size_t> out, Rng& rng) {
  for (auto& slot : out) slot = active_[distribution_(rng)];
}

std::vector<std::size_t> MinibatchSampler::draw(std::size_t batch_size, Rng& rng) {
  std::vector<std::size_t> batch(batch_size);
  draw_into(batch, rng);
  return batch;
}

std::vector<std::size_t> draw_minibatch(const SamplingPlan& plan, std::size_t batch_size,
                                        Rng& rng) {
  if (batch_size == 0) throw Error("batch size must be at least 1");
  return MinibatchSampler(plan).draw(batch_size, rng);
}

ResolvedStrategy resolve_strategy(const BalancingStrategy& strategy,
                                  const GroupPartition& partition, Rng& rng) {
  IndexSet all(partition.num_examples());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

  ResolvedStrategy out;
  switch (strategy.kind) {
    case StrategyKind::kNone:
      out.plan = uniform_plan(all);
      break;
    case StrategyKind::kSubsetting:
      out.plan = upsampling_plan(partition, subset_balanced(partition, rng));
      break;
    case StrategyKind::kUpsampling:
      out.plan = upsampling_plan(partition, all);
      break;
    case StrategyKind::kUpweighting:
      out.plan = uniform_plan(all);
      out.weights = upweighting_plan(partition);
      break;
    case StrategyKind::kMixture:
      if (!strategy.mixture_ratio) throw ConfigError("mixture strategy requires mixture_ratio");
      out.plan = mixture_plan(partition, *strategy.mixture_ratio, rng).plan;
      break;
  }
  return out;
}

}  // namespace groupforge
