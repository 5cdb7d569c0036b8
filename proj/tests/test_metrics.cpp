#include <algorithm>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "groupforge/error.hpp"
#include "groupforge/metrics.hpp"
#include "test_util.hpp"

namespace groupforge {
namespace {

const GroupSchema kTwoByTwo{2, 2};

GroupAccuracies counts(std::vector<std::size_t> correct, std::vector<std::size_t> total) {
  return {std::move(correct), std::move(total)};
}

TEST(PerGroupAccuracy, CountsAndAbsentGroups) {
  // groups: 0 x4, 1 x2, 2 x0, 3 x1
  LabeledDataset data(Matrix(7, 1), {0, 0, 0, 0, 0, 0, 1}, {0, 0, 0, 0, 1, 1, 1});
  const auto p = build_partition(data, kTwoByTwo);
  const std::vector<int> all_right{0, 0, 0, 0, 0, 0, 1};
  const auto perfect = per_group_accuracy(all_right, data, p);
  for (int g : {0, 1, 3}) EXPECT_EQ(perfect.accuracy(g), 1.0);
  EXPECT_FALSE(perfect.accuracy(2).has_value());
  EXPECT_FALSE(perfect.present(2));

  const std::vector<int> one_miss{0, 1, 0, 0, 0, 0, 1};
  EXPECT_EQ(per_group_accuracy(one_miss, data, p).accuracy(0), 0.75);

  EXPECT_THROW(per_group_accuracy(std::vector<int>{0}, data, p), Error);
}

TEST(WorstGroupAccuracy, Examples) {
  const auto acc = counts({95, 60, 70, 90}, {100, 100, 100, 100});
  const auto w = worst_group_accuracy(acc);
  EXPECT_EQ(w.value, 0.6);
  EXPECT_EQ(w.id, 1);

  const auto uniform = worst_group_accuracy(counts({5, 5, 5, 5}, {10, 10, 10, 10}));
  EXPECT_EQ(uniform.id, 0);
  EXPECT_EQ(uniform.value, 0.5);
  const auto tied = worst_group_accuracy(counts({8, 4, 8, 8}, {10, 5, 10, 10}));
  EXPECT_EQ(tied.id, 0);
  EXPECT_EQ(tied.value, 0.8);

  const auto single = worst_group_accuracy(counts({0, 3, 0, 0}, {0, 4, 0, 0}));
  EXPECT_EQ(single.id, 1);
  EXPECT_EQ(single.value, 0.75);

  EXPECT_THROW(worst_group_accuracy(counts({0, 0}, {0, 0})), Error);
}

TEST(WorstClassAccuracy, Examples) {
  const auto two = worst_class_accuracy(counts({9, 7}, {10, 10}), GroupSchema{2, 1});
  EXPECT_EQ(two.value, 0.7);
  EXPECT_EQ(two.id, 1);

  // Class 0 pools groups at 1.0 and 0.5 of equal size.
  const auto pooled = worst_class_accuracy(counts({10, 5, 10, 10}, {10, 10, 10, 10}), kTwoByTwo);
  EXPECT_EQ(pooled.value, 0.75);
  EXPECT_EQ(pooled.id, 0);

  // A class with one nonempty group takes that group's accuracy.
  const auto lone = worst_class_accuracy(counts({9, 9, 3, 0}, {10, 10, 4, 0}), kTwoByTwo);
  EXPECT_EQ(lone.value, 0.75);
  EXPECT_EQ(lone.id, 1);
}

TEST(AverageAccuracy, Examples) {
  const auto acc = counts({9, 8, 7, 95}, {10, 10, 10, 100});
  const std::vector<double> wb{.730, .038, .012, .220};
  EXPECT_NEAR(average_accuracy(acc, wb), 0.9048, 1e-12);

  const auto perfect = counts({3, 1, 2, 9}, {3, 1, 2, 9});
  EXPECT_EQ(average_accuracy(perfect, wb), 1.0);
  EXPECT_EQ(average_accuracy(perfect), 1.0);

  EXPECT_EQ(average_accuracy(counts({1, 3}, {2, 6})), 0.5);

  // Weights on absent groups are dropped and the rest renormalized.
  const auto gap = counts({1, 0}, {2, 0});
  EXPECT_EQ(average_accuracy(gap, std::vector<double>{0.25, 0.75}), 0.5);

  EXPECT_THROW(average_accuracy(acc, std::vector<double>{1, 2}), Error);
  EXPECT_THROW(average_accuracy(acc, std::vector<double>{1, -1, 0, 0}), Error);
  EXPECT_THROW(average_accuracy(gap, std::vector<double>{0, 1}), Error);
}

TEST(IntraClassDisparity, SignConvention) {
  const auto data = testing::dataset_with_group_counts(kTwoByTwo, {20, 5, 5, 20});
  const auto designation = build_partition(data, kTwoByTwo);
  EXPECT_NEAR(intra_class_disparity(counts({95, 60, 0, 0}, {100, 100, 1, 1}), designation, 0), 0.35,
              1e-15);
  EXPECT_EQ(intra_class_disparity(counts({1, 1, 5, 5}, {2, 2, 10, 10}), designation, 1), 0.0);
  EXPECT_NEAR(intra_class_disparity(counts({1, 1, 9, 7}, {2, 2, 10, 10}), designation, 1), -0.2,
              1e-15);
  EXPECT_THROW(intra_class_disparity(counts({1, 1, 0, 7}, {2, 2, 0, 10}), designation, 1), Error);
}

TEST(MetricsProperties, WgaBelowAverageBelowBest) {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<std::size_t> size(0, 40);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    GroupAccuracies acc;
    const std::size_t groups = 1 + rng() % 6;
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t n = size(rng);
      acc.total.push_back(n);
      acc.correct.push_back(n == 0 ? 0 : rng() % (n + 1));
    }
    if (std::all_of(acc.total.begin(), acc.total.end(), [](auto n) { return n == 0; }))
      acc.total[0] = acc.correct[0] = 1;
    std::vector<double> weights(groups);
    for (double& w : weights) w = unit(rng);
    weights[rng() % groups] += 0.1;
    for (std::size_t g = 0; g < groups; ++g)
      if (acc.total[g] > 0) weights[g] += 1e-3;  // some mass on a present group

    double best = 0.0;
    for (std::size_t g = 0; g < groups; ++g)
      if (auto a = acc.accuracy(static_cast<int>(g))) best = std::max(best, *a);
    const double wga = worst_group_accuracy(acc).value;
    for (double avg : {average_accuracy(acc), average_accuracy(acc, weights)}) {
      EXPECT_LE(wga, avg + 1e-15);
      EXPECT_LE(avg, best + 1e-15);
    }
  }
}

TEST(MetricsProperties, WorstClassAtLeastWorstGroup) {
  std::mt19937_64 rng(47);
  for (int trial = 0; trial < 1000; ++trial) {
    const GroupSchema schema{2 + static_cast<int>(rng() % 3), 1 + static_cast<int>(rng() % 3)};
    const std::size_t m = 5 + rng() % 60;
    std::vector<int> y(m), s(m), pred(m);
    for (std::size_t i = 0; i < m; ++i) {
      y[i] = static_cast<int>(rng() % schema.num_classes);
      s[i] = static_cast<int>(rng() % schema.num_spurious);
      pred[i] = rng() % 3 == 0 ? static_cast<int>(rng() % schema.num_classes) : y[i];
    }
    const LabeledDataset data(Matrix(m, 1), y, s);
    const auto p = build_partition(data, schema);
    const auto acc = per_group_accuracy(pred, data, p);
    EXPECT_GE(worst_class_accuracy(pred, data, p).value, worst_group_accuracy(acc).value);
  }
}

TEST(MetricsProperties, PermutingGroupsPermutesArgmin) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    GroupAccuracies acc;
    for (int g = 0; g < 5; ++g) {
      acc.total.push_back(1000);
      acc.correct.push_back(rng() % 1001);
    }
    std::vector<int> perm(5);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    GroupAccuracies permuted{std::vector<std::size_t>(5), std::vector<std::size_t>(5)};
    for (int g = 0; g < 5; ++g) {
      permuted.correct[perm[g]] = acc.correct[g];
      permuted.total[perm[g]] = acc.total[g];
    }
    const auto a = worst_group_accuracy(acc);
    const auto b = worst_group_accuracy(permuted);
    EXPECT_EQ(a.value, b.value);
    // With ties the id may move to another minimizer; compare values there.
    EXPECT_EQ(*permuted.accuracy(perm[a.id]), b.value);
  }
}

}  // namespace
}  // namespace groupforge
