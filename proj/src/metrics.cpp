#include "groupforge/metrics.hpp"

#include <fmt/format.h>

#include "groupforge/error.hpp"

namespace groupforge {

std::optional<double> GroupAccuracies::accuracy(int g) const {
  if (total.at(g) == 0) return std::nullopt;
  return static_cast<double>(correct[g]) / static_cast<double>(total[g]);
}

std::vector<std::optional<double>> GroupAccuracies::accuracies() const {
  std::vector<std::optional<double>> out(num_groups());
  for (std::size_t g = 0; g < out.size(); ++g) out[g] = accuracy(static_cast<int>(g));
  return out;
}

GroupAccuracies per_group_accuracy(std::span<const int> predictions,
                                   const LabeledDataset& dataset,
                                   const GroupPartition& partition) {
  if (predictions.size() != dataset.size())
    throw Error(fmt::format("{} predictions for {} examples", predictions.size(), dataset.size()));
  if (partition.num_examples() != dataset.size())
    throw Error("partition does not belong to this dataset");

  GroupAccuracies acc;
  const int groups = partition.schema.num_groups();
  acc.correct.assign(groups, 0);
  acc.total.assign(groups, 0);
  for (int g = 0; g < groups; ++g) {
    for (std::size_t i : partition.omega_g[g]) {
      ++acc.total[g];
      if (predictions[i] == dataset.class_labels()[i]) ++acc.correct[g];
    }
  }
  return acc;
}

Extremum worst_group_accuracy(const GroupAccuracies& acc) {
  Extremum worst;
  for (std::size_t g = 0; g < acc.num_groups(); ++g) {
    const auto a = acc.accuracy(static_cast<int>(g));
    if (!a) continue;
    if (worst.id < 0 || *a < worst.value) worst = {*a, static_cast<int>(g)};
  }
  if (worst.id < 0) throw Error("worst-group accuracy needs at least one nonempty group");
  return worst;
}

Extremum worst_class_accuracy(const GroupAccuracies& acc, const GroupSchema& schema) {
  if (acc.num_groups() != static_cast<std::size_t>(schema.num_groups()))
    throw Error("group accuracies do not match the schema");
  Extremum worst;
  for (int y = 0; y < schema.num_classes; ++y) {
    std::size_t correct = 0;
    std::size_t total = 0;
    for (int s = 0; s < schema.num_spurious; ++s) {
      correct += acc.correct[schema.group_id(y, s)];
      total += acc.total[schema.group_id(y, s)];
    }
    if (total == 0) continue;
    const double a = static_cast<double>(correct) / static_cast<double>(total);
    if (worst.id < 0 || a < worst.value) worst = {a, y};
  }
  if (worst.id < 0) throw Error("worst-class accuracy needs at least one nonempty class");
  return worst;
}

Extremum worst_class_accuracy(std::span<const int> predictions, const LabeledDataset& dataset,
                              const GroupPartition& partition) {
  return worst_class_accuracy(per_group_accuracy(predictions, dataset, partition),
                              partition.schema);
}

double average_accuracy(const GroupAccuracies& acc, std::optional<std::span<const double>> weights) {
  if (!weights) {
    std::size_t correct = 0;
    std::size_t total = 0;
    for (std::size_t g = 0; g < acc.num_groups(); ++g) {
      correct += acc.correct[g];
      total += acc.total[g];
    }
    if (total == 0) throw Error("average accuracy over an empty evaluation set");
    return static_cast<double>(correct) / static_cast<double>(total);
  }

  if (weights->size() != acc.num_groups())
    throw Error(fmt::format("{} weights for {} groups", weights->size(), acc.num_groups()));
  double mass = 0.0;
  double sum = 0.0;
  for (std::size_t g = 0; g < acc.num_groups(); ++g) {
    const double w = (*weights)[g];
    if (w < 0.0) throw Error(fmt::format("negative weight {} for group {}", w, g));
    const auto a = acc.accuracy(static_cast<int>(g));
    if (!a) continue;
    mass += w;
    sum += w * *a;
  }
  if (!(mass > 0.0)) throw Error("weights put no mass on a nonempty group");
  return sum / mass;
}

double intra_class_disparity(const GroupAccuracies& acc, const GroupPartition& designation,
                             int y) {
  const auto pair = intra_class_min_maj(designation, y);
  const auto maj = acc.accuracy(pair.g_maj);
  const auto min = acc.accuracy(pair.g_min);
  if (!maj || !min)
    throw Error(fmt::format("class {}: group {} or {} has no evaluation examples", y, pair.g_maj,
                            pair.g_min));
  return *maj - *min;
}

}  // namespace groupforge
