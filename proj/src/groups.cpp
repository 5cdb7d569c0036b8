#include "groupforge/groups.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "groupforge/error.hpp"

namespace groupforge {

LabeledDataset::LabeledDataset(Matrix features, std::vector<int> class_labels,
                               std::vector<int> spurious_labels)
    : features_(std::move(features)),
      class_labels_(std::move(class_labels)),
      spurious_labels_(std::move(spurious_labels)) {
  if (features_.rows() == 0 || features_.cols() == 0)
    throw Error("dataset needs at least one row and one feature column");
  if (class_labels_.size() != features_.rows() || spurious_labels_.size() != features_.rows())
    throw Error(fmt::format("dataset has {} rows but {} class labels and {} spurious labels",
                            features_.rows(), class_labels_.size(), spurious_labels_.size()));
  for (std::size_t i = 0; i < class_labels_.size(); ++i) {
    if (class_labels_[i] < 0 || spurious_labels_[i] < 0)
      throw LabelRangeError(i, fmt::format("negative label at example {}", i));
  }
}

GroupSchema LabeledDataset::inferred_schema() const {
  GroupSchema schema{0, 0};
  for (int y : class_labels_) schema.num_classes = std::max(schema.num_classes, y + 1);
  for (int s : spurious_labels_) schema.num_spurious = std::max(schema.num_spurious, s + 1);
  return schema;
}

std::size_t GroupPartition::num_examples() const noexcept {
  std::size_t total = 0;
  for (const auto& g : omega_g) total += g.size();
  return total;
}

std::vector<std::size_t> GroupPartition::class_sizes() const {
  std::vector<std::size_t> sizes;
  sizes.reserve(omega_y.size());
  for (const auto& y : omega_y) sizes.push_back(y.size());
  return sizes;
}

std::vector<std::size_t> GroupPartition::group_sizes() const {
  std::vector<std::size_t> sizes;
  sizes.reserve(omega_g.size());
  for (const auto& g : omega_g) sizes.push_back(g.size());
  return sizes;
}

GroupPartition build_partition(const std::vector<int>& class_labels,
                               const std::vector<int>& spurious_labels,
                               const GroupSchema& schema) {
  if (schema.num_classes < 1 || schema.num_spurious < 1)
    throw Error("schema needs at least one class and one spurious value");
  if (class_labels.size() != spurious_labels.size())
    throw Error("class and spurious label arrays differ in length");

  GroupPartition p;
  p.schema = schema;
  p.omega_g.resize(schema.num_groups());
  p.omega_y.resize(schema.num_classes);
  for (std::size_t i = 0; i < class_labels.size(); ++i) {
    const int y = class_labels[i];
    const int s = spurious_labels[i];
    if (y < 0 || y >= schema.num_classes)
      throw LabelRangeError(i, fmt::format("example {}: class label {} outside [0, {})", i, y,
                                           schema.num_classes));
    if (s < 0 || s >= schema.num_spurious)
      throw LabelRangeError(i, fmt::format("example {}: spurious label {} outside [0, {})", i, s,
                                           schema.num_spurious));
    p.omega_g[schema.group_id(y, s)].push_back(i);
    p.omega_y[y].push_back(i);
  }

  p.majority_group_per_class.assign(schema.num_classes, -1);
  p.minority.assign(schema.num_groups(), false);
  for (int y = 0; y < schema.num_classes; ++y) {
    if (p.omega_y[y].empty()) continue;
    int best = schema.group_id(y, 0);
    for (int s = 1; s < schema.num_spurious; ++s) {
      const int g = schema.group_id(y, s);
      if (p.omega_g[g].size() > p.omega_g[best].size()) best = g;
    }
    p.majority_group_per_class[y] = best;
    for (int s = 0; s < schema.num_spurious; ++s) {
      const int g = schema.group_id(y, s);
      p.minority[g] = g != best && !p.omega_g[g].empty();
    }
  }
  return p;
}

GroupPartition build_partition(const LabeledDataset& dataset, const GroupSchema& schema) {
  return build_partition(dataset.class_labels(), dataset.spurious_labels(), schema);
}

double class_imbalance_ratio(const GroupPartition& partition) {
  std::size_t largest = 0;
  std::size_t smallest = 0;
  for (int y = 0; y < partition.schema.num_classes; ++y) {
    const std::size_t n = partition.class_size(y);
    if (n == 0) throw Error(fmt::format("class {} has no examples", y));
    largest = y == 0 ? n : std::max(largest, n);
    smallest = y == 0 ? n : std::min(smallest, n);
  }
  return static_cast<double>(largest) / static_cast<double>(smallest);
}

MinMajPair intra_class_min_maj(const GroupPartition& partition, int y) {
  const auto& schema = partition.schema;
  if (y < 0 || y >= schema.num_classes)
    throw Error(fmt::format("class {} outside [0, {})", y, schema.num_classes));
  if (partition.class_size(y) == 0) throw Error(fmt::format("class {} has no examples", y));

  MinMajPair pair;
  pair.g_maj = partition.majority_group_per_class[y];
  int nonempty = 0;
  for (int s = 0; s < schema.num_spurious; ++s) {
    const int g = schema.group_id(y, s);
    const std::size_t n = partition.group_size(g);
    if (n == 0) continue;
    ++nonempty;
    if (pair.g_min < 0 || n < partition.group_size(pair.g_min)) pair.g_min = g;
  }
  pair.degenerate = nonempty < 2 || pair.g_min == pair.g_maj;
  return pair;
}

std::string dataset_to_csv(const LabeledDataset& dataset, std::string_view column_prefix) {
  fmt::memory_buffer out;
  fmt::format_to(std::back_inserter(out), "class,spurious");
  for (std::size_t j = 0; j < dataset.dim(); ++j)
    fmt::format_to(std::back_inserter(out), ",{}_{}", column_prefix, j);
  out.push_back('\n');
  const Matrix& x = dataset.features();
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    fmt::format_to(std::back_inserter(out), "{},{}", dataset.class_labels()[i],
                   dataset.spurious_labels()[i]);
    for (double v : x.row(i)) fmt::format_to(std::back_inserter(out), ",{}", v);
    out.push_back('\n');
  }
  return fmt::to_string(out);
}

void write_dataset_csv(const std::filesystem::path& path, const LabeledDataset& dataset,
                       std::string_view column_prefix) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw Error(fmt::format("cannot open {} for writing", path.string()));
  file << dataset_to_csv(dataset, column_prefix);
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line_no) {
  T value{};
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last)
    throw Error(fmt::format("line {}: cannot parse '{}'", line_no, field));
  return value;
}

}  // namespace

LabeledDataset parse_dataset_csv(std::string_view text) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  auto next_line = [&](std::string_view& line) {
    while (pos < text.size()) {
      std::size_t end = text.find('\n', pos);
      if (end == std::string_view::npos) end = text.size();
      line = text.substr(pos, end - pos);
      pos = end + 1;
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (!line.empty()) return true;
    }
    return false;
  };

  std::string_view line;
  if (!next_line(line)) throw Error("empty dataset file");
  const auto header = split_fields(line);
  if (header.size() < 3 || header[0] != "class" || header[1] != "spurious")
    throw Error("header must start with `class,spurious` followed by feature columns");
  const std::size_t dim = header.size() - 2;

  std::vector<double> values;
  std::vector<int> classes;
  std::vector<int> spurious;
  while (next_line(line)) {
    const auto fields = split_fields(line);
    if (fields.size() != header.size())
      throw Error(fmt::format("line {}: expected {} fields, found {}", line_no, header.size(),
                              fields.size()));
    classes.push_back(parse_number<int>(fields[0], line_no));
    spurious.push_back(parse_number<int>(fields[1], line_no));
    for (std::size_t j = 0; j < dim; ++j) values.push_back(parse_number<double>(fields[j + 2], line_no));
  }
  Matrix features(classes.size(), dim);
  std::copy(values.begin(), values.end(), features.data().begin());
  return LabeledDataset(std::move(features), std::move(classes), std::move(spurious));
}

LabeledDataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw Error(fmt::format("cannot open {}", path.string()));
  std::ostringstream buffer;
  buffer << file.rdbuf();
  return parse_dataset_csv(buffer.str());
}

}  // namespace groupforge
