#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <gtest/gtest.h>

#include "groupforge/balancing.hpp"
#include "groupforge/error.hpp"
#include "test_util.hpp"

namespace groupforge {
namespace {

const GroupSchema kTwoByTwo{2, 2};

GroupPartition waterbirds_partition() {
  static const auto data = testing::dataset_with_group_counts(kTwoByTwo, {3498, 184, 56, 1057});
  return build_partition(data, kTwoByTwo);
}

GroupPartition class_partition(const std::vector<std::size_t>& counts) {
  const auto data = testing::dataset_with_class_counts(counts);
  return build_partition(data, {static_cast<int>(counts.size()), 1});
}

std::vector<std::size_t> class_counts(const GroupPartition& p, const IndexSet& active) {
  std::vector<std::size_t> counts(p.schema.num_classes, 0);
  for (int y = 0; y < p.schema.num_classes; ++y)
    for (std::size_t i : active)
      if (std::binary_search(p.omega_y[y].begin(), p.omega_y[y].end(), i)) ++counts[y];
  return counts;
}

TEST(StrategyNames, ParseAndLabel) {
  for (auto k : {StrategyKind::kNone, StrategyKind::kSubsetting, StrategyKind::kUpsampling,
                 StrategyKind::kUpweighting, StrategyKind::kMixture})
    EXPECT_EQ(parse_strategy_kind(to_string(k)), k);
  EXPECT_THROW(parse_strategy_kind("oversample"), ConfigError);
  EXPECT_EQ((BalancingStrategy{StrategyKind::kMixture, 2.0}).label(), "mixture-2");
  EXPECT_EQ((BalancingStrategy{StrategyKind::kMixture, 3.31}).label(), "mixture-3.31");
  EXPECT_EQ((BalancingStrategy{StrategyKind::kUpweighting, {}}).label(), "upweighting");
}

TEST(SubsetBalanced, WaterbirdsCounts) {
  const auto p = waterbirds_partition();
  Rng rng(1);
  const auto active = subset_balanced(p, rng);
  EXPECT_EQ(active.size(), 2226u);
  EXPECT_EQ(class_counts(p, active), (std::vector<std::size_t>{1113, 1113}));
  EXPECT_TRUE(std::is_sorted(active.begin(), active.end()));
  EXPECT_EQ(std::adjacent_find(active.begin(), active.end()), active.end());
}

TEST(SubsetBalanced, BalancedIsNoOp) {
  const auto p = class_partition({500, 500});
  Rng rng(1);
  const auto active = subset_balanced(p, rng);
  IndexSet all(1000);
  std::iota(all.begin(), all.end(), 0);
  EXPECT_EQ(active, all);
}

TEST(SubsetBalanced, SameSeedSameSubset) {
  const auto p = waterbirds_partition();
  Rng a(42), b(42), c(43);
  const auto first = subset_balanced(p, a);
  EXPECT_EQ(first, subset_balanced(p, b));
  EXPECT_NE(first, subset_balanced(p, c));
}

TEST(SubsetToRatio, RatioTwo) {
  const auto p = waterbirds_partition();
  Rng rng(5);
  EXPECT_EQ(class_counts(p, subset_to_ratio(p, 2.0, rng)), (std::vector<std::size_t>{2226, 1113}));
}

TEST(SubsetToRatio, Endpoints) {
  const auto p = waterbirds_partition();
  Rng a(9), b(9);
  EXPECT_EQ(class_counts(p, subset_to_ratio(p, 1.0, a)), class_counts(p, subset_balanced(p, b)));
  Rng c(9);
  EXPECT_EQ(subset_to_ratio(p, 3.31, c).size(), 4795u);
  Rng d(9);
  EXPECT_EQ(subset_to_ratio(p, 3682.0 / 1113.0, d).size(), 4795u);
}

TEST(SubsetToRatio, RejectsOutOfRange) {
  const auto p = waterbirds_partition();
  Rng rng(1);
  EXPECT_THROW(subset_to_ratio(p, 0.5, rng), Error);
  EXPECT_THROW(subset_to_ratio(p, 3.4, rng), Error);
  EXPECT_THROW(subset_to_ratio(p, std::nan(""), rng), Error);
}

TEST(SubsetToRatio, MonotoneInRatioAndWithinSlack) {
  const auto p = class_partition({785, 100, 310});
  double prev_r = 1.0;
  std::vector<std::size_t> prev = class_counts(p, [&] {
    Rng rng(3);
    return subset_to_ratio(p, 1.0, rng);
  }());
  for (double r = 1.25; r <= 7.85; r += 0.35) {
    Rng rng(3);
    const auto counts = class_counts(p, subset_to_ratio(p, r, rng));
    EXPECT_EQ(counts[1], 100u);  // smallest class kept whole
    for (std::size_t y = 0; y < counts.size(); ++y) EXPECT_LE(prev[y], counts[y]) << r;
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    EXPECT_LE(static_cast<double>(*hi), r * static_cast<double>(*lo) + 1.0);
    prev = counts;
    prev_r = r;
  }
  EXPECT_GT(prev_r, 1.0);
}

TEST(UpsamplingPlan, WaterbirdsProbabilities) {
  const auto p = waterbirds_partition();
  IndexSet all(p.num_examples());
  std::iota(all.begin(), all.end(), 0);
  const auto plan = upsampling_plan(p, all);
  ASSERT_EQ(plan.size(), 4795u);
  for (std::size_t k = 0; k < plan.size(); ++k) {
    const bool landbird = plan.active_indices[k] < 3682;
    EXPECT_DOUBLE_EQ(plan.probabilities[k], landbird ? 0.5 / 3682 : 0.5 / 1113);
  }
  EXPECT_NEAR(std::accumulate(plan.probabilities.begin(), plan.probabilities.end(), 0.0), 1.0,
              1e-12);
}

TEST(UpsamplingPlan, SingleClassIsUniform) {
  const auto p = class_partition({37});
  IndexSet all(37);
  std::iota(all.begin(), all.end(), 0);
  const auto plan = upsampling_plan(p, all);
  for (double q : plan.probabilities) EXPECT_EQ(q, 1.0 / 37);
  EXPECT_EQ(plan, uniform_plan(all));
}

TEST(UpsamplingPlan, ClassWithoutActiveExamplesThrows) {
  const auto p = class_partition({5, 5});
  EXPECT_THROW(upsampling_plan(p, {0, 1, 2}), Error);
}

TEST(UpsamplingPlan, ExpectedClassFrequencyIsExact) {
  const auto p = class_partition({600, 300, 200});
  IndexSet all(1100);
  std::iota(all.begin(), all.end(), 0);
  const auto plan = upsampling_plan(p, all);
  std::vector<double> mass(3, 0.0);
  for (std::size_t k = 0; k < plan.size(); ++k)
    mass[k < 600 ? 0 : (k < 900 ? 1 : 2)] += plan.probabilities[k];
  for (double m : mass) EXPECT_NEAR(m, 1.0 / 3, 1e-12);
}

TEST(UpweightingPlan, Examples) {
  const auto wb = upweighting_plan(waterbirds_partition());
  EXPECT_EQ(wb.weights.front(), 1.0);
  EXPECT_EQ(wb.weights.back(), 3682.0 / 1113.0);
  EXPECT_NEAR(wb.weights.back(), 3.308, 5e-4);

  for (double w : upweighting_plan(class_partition({500, 500})).weights) EXPECT_EQ(w, 1.0);

  const auto three = upweighting_plan(class_partition({600, 300, 200}));
  EXPECT_EQ(three.weights[0], 1.0);
  EXPECT_EQ(three.weights[600], 2.0);
  EXPECT_EQ(three.weights[900], 3.0);
  for (double w : three.weights) EXPECT_GE(w, 1.0);
}

TEST(UpweightingPlan, EmptyClassThrows) {
  LabeledDataset data(Matrix(2, 1), {0, 0}, {0, 0});
  EXPECT_THROW(upweighting_plan(build_partition(data, {2, 1})), Error);
}

// Exact summation: sum_i p_i l_i under upsampling vs sum_i w_i l_i / sum_i w_i
// under uniform sampling with upweighting.
TEST(Balancing, UpsamplingAndUpweightingAgreeInExpectation) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> loss_dist(0.0, 5.0);
  for (const auto& counts : std::vector<std::vector<std::size_t>>{
           {3682, 1113}, {785, 100}, {600, 300, 200}, {7, 1, 3, 19}}) {
    const auto p = class_partition(counts);
    IndexSet all(p.num_examples());
    std::iota(all.begin(), all.end(), 0);
    const auto plan = upsampling_plan(p, all);
    const auto weights = upweighting_plan(p).weights;
    std::vector<double> loss(all.size());
    for (double& l : loss) l = loss_dist(rng);

    double upsampled = 0.0, weighted = 0.0, weight_sum = 0.0;
    for (std::size_t i = 0; i < all.size(); ++i) {
      upsampled += plan.probabilities[i] * loss[i];
      weighted += weights[i] * loss[i];
      weight_sum += weights[i];
    }
    EXPECT_NEAR(upsampled, weighted / weight_sum, 1e-10 * std::max(1.0, upsampled));
  }
}

TEST(MixturePlan, RatioOneIsUniformOverBalancedSubset) {
  const auto p = waterbirds_partition();
  Rng rng(2);
  const auto mix = mixture_plan(p, 1.0, rng);
  EXPECT_EQ(mix.active.size(), 2226u);
  for (double q : mix.plan.probabilities) EXPECT_EQ(q, 1.0 / 2226);
}

TEST(MixturePlan, OriginalRatioEqualsUpsampling) {
  const auto p = waterbirds_partition();
  IndexSet all(p.num_examples());
  std::iota(all.begin(), all.end(), 0);
  const auto upsampled = upsampling_plan(p, all);
  for (double r : {3.31, 3682.0 / 1113.0}) {
    Rng rng(2);
    const auto mix = mixture_plan(p, r, rng);
    EXPECT_EQ(mix.active, all);
    EXPECT_EQ(mix.plan, upsampled);
  }
}

TEST(MixturePlan, RatioTwo) {
  const auto p = waterbirds_partition();
  Rng rng(8);
  const auto mix = mixture_plan(p, 2.0, rng);
  EXPECT_EQ(mix.active.size(), 3339u);
  for (std::size_t k = 0; k < mix.active.size(); ++k) {
    const bool landbird = mix.active[k] < 3682;
    EXPECT_DOUBLE_EQ(mix.plan.probabilities[k], landbird ? 0.5 / 2226 : 0.5 / 1113);
  }
}

TEST(MixturePlan, ReproducibleUnderSeed) {
  const auto p = waterbirds_partition();
  Rng a(77), b(77);
  const auto x = mixture_plan(p, 1.7, a);
  const auto y = mixture_plan(p, 1.7, b);
  EXPECT_EQ(x.active, y.active);
  EXPECT_EQ(x.plan, y.plan);
}

TEST(DrawMinibatch, PointMass) {
  SamplingPlan plan{{3, 8, 11}, {0.0, 1.0, 0.0}};
  Rng rng(1);
  EXPECT_EQ(draw_minibatch(plan, 6, rng), (std::vector<std::size_t>(6, 8)));
}

TEST(DrawMinibatch, UniformFrequencies) {
  const auto plan = uniform_plan({0, 1, 2, 3});
  Rng rng(123);
  MinibatchSampler sampler(plan);
  std::vector<std::size_t> hits(4, 0);
  constexpr std::size_t kDraws = 100000;
  for (std::size_t i : sampler.draw(kDraws, rng)) ++hits[i];
  for (auto h : hits) EXPECT_NEAR(static_cast<double>(h) / kDraws, 0.25, 0.01);
}

TEST(DrawMinibatch, SameSeedSameSequence) {
  const auto p = waterbirds_partition();
  IndexSet all(p.num_examples());
  std::iota(all.begin(), all.end(), 0);
  const auto plan = upsampling_plan(p, all);
  Rng a(5), b(5);
  MinibatchSampler sa(plan), sb(plan);
  for (int step = 0; step < 20; ++step) EXPECT_EQ(sa.draw(32, a), sb.draw(32, b));
}

TEST(DrawMinibatch, UpsamplingBalancesClasses) {
  const auto p = class_partition({785, 100});
  IndexSet all(885);
  std::iota(all.begin(), all.end(), 0);
  Rng rng(99);
  const auto batch = draw_minibatch(upsampling_plan(p, all), 200000, rng);
  const auto minority = std::count_if(batch.begin(), batch.end(), [](auto i) { return i >= 785; });
  EXPECT_NEAR(static_cast<double>(minority) / batch.size(), 0.5, 0.005);
}

TEST(ResolveStrategy, KindsMapToPlans) {
  const auto p = waterbirds_partition();
  IndexSet all(p.num_examples());
  std::iota(all.begin(), all.end(), 0);
  Rng rng(4);

  auto none = resolve_strategy({StrategyKind::kNone, {}}, p, rng);
  EXPECT_EQ(none.plan, uniform_plan(all));
  EXPECT_FALSE(none.weights);

  auto up = resolve_strategy({StrategyKind::kUpsampling, {}}, p, rng);
  EXPECT_EQ(up.plan, upsampling_plan(p, all));

  auto weighted = resolve_strategy({StrategyKind::kUpweighting, {}}, p, rng);
  EXPECT_EQ(weighted.plan, uniform_plan(all));
  ASSERT_TRUE(weighted.weights);
  EXPECT_EQ(*weighted.weights, upweighting_plan(p));

  auto subset = resolve_strategy({StrategyKind::kSubsetting, {}}, p, rng);
  EXPECT_EQ(subset.plan.size(), 2226u);
  for (double q : subset.plan.probabilities) EXPECT_EQ(q, 1.0 / 2226);

  EXPECT_THROW(resolve_strategy({StrategyKind::kMixture, {}}, p, rng), Error);
}

TEST(ResolveStrategy, BalancedDataMakesStrategiesCoincide) {
  const auto p = class_partition({400, 400});
  Rng rng(4);
  const auto baseline = resolve_strategy({StrategyKind::kNone, {}}, p, rng);
  for (auto kind : {StrategyKind::kSubsetting, StrategyKind::kUpsampling,
                    StrategyKind::kUpweighting}) {
    const auto r = resolve_strategy({kind, {}}, p, rng);
    EXPECT_EQ(r.plan, baseline.plan) << to_string(kind);
    if (r.weights)
      for (double w : r.weights->weights) EXPECT_EQ(w, 1.0);
  }
}

}  // namespace
}  // namespace groupforge
