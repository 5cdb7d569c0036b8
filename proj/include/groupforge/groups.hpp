#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "groupforge/matrix.hpp"

namespace groupforge {

using IndexSet = std::vector<std::size_t>;

/// Groups are the Cartesian product of classes and spurious attributes,
/// numbered row-major: g = y * num_spurious + s.
struct GroupSchema {
  int num_classes = 2;
  int num_spurious = 2;

  int num_groups() const noexcept { return num_classes * num_spurious; }
  int group_id(int y, int s) const noexcept { return y * num_spurious + s; }
  int class_of(int g) const noexcept { return g / num_spurious; }
  int spurious_of(int g) const noexcept { return g % num_spurious; }

  friend bool operator==(const GroupSchema&, const GroupSchema&) = default;
};

/// Feature rows with a class label and a spurious-attribute label per row.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  /// Throws groupforge::Error when the row count disagrees with either label
  /// array, when the matrix is empty, or when a label is negative.
  LabeledDataset(Matrix features, std::vector<int> class_labels,
                 std::vector<int> spurious_labels);

  std::size_t size() const noexcept { return features_.rows(); }
  std::size_t dim() const noexcept { return features_.cols(); }

  const Matrix& features() const noexcept { return features_; }
  const std::vector<int>& class_labels() const noexcept { return class_labels_; }
  const std::vector<int>& spurious_labels() const noexcept { return spurious_labels_; }

  /// Smallest schema that holds every label.
  GroupSchema inferred_schema() const;

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;

 private:
  Matrix features_;
  std::vector<int> class_labels_;
  std::vector<int> spurious_labels_;
};

struct GroupPartition {
  GroupSchema schema;
  std::vector<IndexSet> omega_g;  // per group, sorted
  std::vector<IndexSet> omega_y;  // per class, sorted
  /// Largest group of each class; -1 for an empty class.
  std::vector<int> majority_group_per_class;
  /// Nonempty groups that are not the majority group of their class.
  std::vector<bool> minority;

  std::size_t num_examples() const noexcept;
  std::size_t group_size(int g) const { return omega_g.at(g).size(); }
  std::size_t class_size(int y) const { return omega_y.at(y).size(); }
  std::vector<std::size_t> class_sizes() const;
  std::vector<std::size_t> group_sizes() const;

  friend bool operator==(const GroupPartition&, const GroupPartition&) = default;
};

/// Throws LabelRangeError carrying the first offending row.
GroupPartition build_partition(const LabeledDataset& dataset, const GroupSchema& schema);

/// Same construction from bare label arrays.
GroupPartition build_partition(const std::vector<int>& class_labels,
                               const std::vector<int>& spurious_labels,
                               const GroupSchema& schema);

/// max_y |Omega_y| / min_y |Omega_y|. Throws if any class is empty.
double class_imbalance_ratio(const GroupPartition& partition);

struct MinMajPair {
  int g_min = -1;
  int g_maj = -1;
  /// True when the class has a single nonempty group or its groups tie.
  bool degenerate = false;
};

/// Minority and majority groups within class y. Ties go to the smaller id.
MinMajPair intra_class_min_maj(const GroupPartition& partition, int y);

// CSV persistence. Header is `class,spurious,<p>_0,...,<p>_{n-1}` where the
// column prefix <p> is `x` for raw inputs and `z` for exported features.

void write_dataset_csv(const std::filesystem::path& path, const LabeledDataset& dataset,
                       std::string_view column_prefix = "x");
std::string dataset_to_csv(const LabeledDataset& dataset, std::string_view column_prefix = "x");

/// Accepts any feature column prefix. Throws groupforge::Error on malformed
/// input, naming the offending line.
LabeledDataset read_dataset_csv(const std::filesystem::path& path);
LabeledDataset parse_dataset_csv(std::string_view text);

}  // namespace groupforge
