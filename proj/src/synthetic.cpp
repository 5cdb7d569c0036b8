#include "groupforge/synthetic.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "groupforge/error.hpp"

namespace groupforge {

void validate(const SyntheticSpec& spec) {
  const auto& schema = spec.schema;
  if (schema.num_classes < 1 || schema.num_spurious < 1)
    throw Error("synthetic spec needs at least one class and one spurious value");
  if (spec.group_proportions.size() != static_cast<std::size_t>(schema.num_groups()))
    throw Error(fmt::format("expected {} group proportions, got {}", schema.num_groups(),
                            spec.group_proportions.size()));
  double total = 0.0;
  for (double p : spec.group_proportions) {
    if (!(p >= 0.0)) throw Error("group proportions must be nonnegative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw Error(fmt::format("group proportions sum to {}, not 1", total));
  if (spec.d_core < 1 || spec.d_spur < 1) throw Error("d_core and d_spur must be at least 1");
  if (schema.num_classes > 2 && spec.d_core < static_cast<std::size_t>(schema.num_classes))
    throw Error("one-hot class directions need d_core >= num_classes");
  if (schema.num_spurious > 2 && spec.d_spur < static_cast<std::size_t>(schema.num_spurious))
    throw Error("one-hot spurious directions need d_spur >= num_spurious");
  if (!(spec.sigma > 0.0)) throw Error("sigma must be positive");
  if (spec.m < static_cast<std::size_t>(schema.num_groups()))
    throw Error("m must be at least the number of groups");
}

namespace {

// Mean of coordinate j for label `label` out of `count` labels.
double mean_component(int label, int count, std::size_t j, double mu) {
  if (count == 2) return label == 1 ? mu : -mu;
  if (count > 2) return static_cast<std::size_t>(label) == j ? mu : 0.0;
  return 0.0;
}

}  // namespace

LabeledDataset generate(const SyntheticSpec& spec, Rng& rng) {
  validate(spec);
  const auto& schema = spec.schema;
  const std::size_t dim = spec.d_core + spec.d_spur;

  std::discrete_distribution<int> pick_group(spec.group_proportions.begin(),
                                             spec.group_proportions.end());
  std::normal_distribution<double> noise(0.0, spec.sigma);

  Matrix features(spec.m, dim);
  std::vector<int> classes(spec.m);
  std::vector<int> spurious(spec.m);
  for (std::size_t i = 0; i < spec.m; ++i) {
    const int g = pick_group(rng);
    const int y = schema.class_of(g);
    const int s = schema.spurious_of(g);
    classes[i] = y;
    spurious[i] = s;
    auto row = features.row(i);
    for (std::size_t j = 0; j < spec.d_core; ++j)
      row[j] = mean_component(y, schema.num_classes, j, spec.mu_core) + noise(rng);
    for (std::size_t j = 0; j < spec.d_spur; ++j)
      row[spec.d_core + j] =
          mean_component(s, schema.num_spurious, j, spec.mu_spur) + noise(rng);
  }
  return LabeledDataset(std::move(features), std::move(classes), std::move(spurious));
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"waterbirds-like", "celeba-like",
                                              "civilcomments-like", "multinli-like"};
  return names;
}

SyntheticSpec preset(std::string_view name) {
  SyntheticSpec spec;
  if (name == "waterbirds-like") {
    spec.group_proportions = {0.730, 0.038, 0.012, 0.220};
  } else if (name == "celeba-like") {
    spec.group_proportions = {0.440, 0.411, 0.141, 0.009};
  } else if (name == "civilcomments-like") {
    spec.group_proportions = {0.551, 0.336, 0.047, 0.066};
  } else if (name == "multinli-like") {
    spec.schema = GroupSchema{3, 2};
    spec.group_proportions = {0.279, 0.054, 0.327, 0.007, 0.323, 0.010};
  } else {
    throw Error(fmt::format("unknown preset '{}'", name));
  }
  // Table shares are rounded to three decimals and need not sum to one.
  const double total =
      std::accumulate(spec.group_proportions.begin(), spec.group_proportions.end(), 0.0);
  for (double& p : spec.group_proportions) p /= total;
  return spec;
}

}  // namespace groupforge
