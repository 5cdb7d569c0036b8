#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "groupforge/groups.hpp"

namespace groupforge {

/// Correct/total counts per group on an evaluation set. Groups with no
/// examples are absent: accuracy() returns nullopt and they never take part
/// in a minimum.
struct GroupAccuracies {
  std::vector<std::size_t> correct;
  std::vector<std::size_t> total;

  std::size_t num_groups() const noexcept { return total.size(); }
  bool present(int g) const { return total.at(g) > 0; }
  std::optional<double> accuracy(int g) const;
  std::vector<std::optional<double>> accuracies() const;
};

/// A minimum (or maximum) together with the id attaining it.
struct Extremum {
  double value = 0.0;
  int id = -1;
};

GroupAccuracies per_group_accuracy(std::span<const int> predictions,
                                   const LabeledDataset& dataset,
                                   const GroupPartition& partition);

/// Minimum over present groups; ties to the smaller id.
Extremum worst_group_accuracy(const GroupAccuracies& acc);

/// Minimum per-class accuracy, pooling the counts of every group of the class.
Extremum worst_class_accuracy(const GroupAccuracies& acc, const GroupSchema& schema);
Extremum worst_class_accuracy(std::span<const int> predictions, const LabeledDataset& dataset,
                              const GroupPartition& partition);

/// Without weights: pooled correct / total. With weights: sum_g w_g acc_g,
/// after renormalizing the weights over present groups.
double average_accuracy(const GroupAccuracies& acc,
                        std::optional<std::span<const double>> weights = std::nullopt);

/// Acc(g_maj(y)) - Acc(g_min(y)), where the min/maj designation comes from
/// `designation` (normally the training partition).
double intra_class_disparity(const GroupAccuracies& acc, const GroupPartition& designation, int y);

}  // namespace groupforge
