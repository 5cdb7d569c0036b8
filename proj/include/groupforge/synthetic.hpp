#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "groupforge/groups.hpp"
#include "groupforge/random.hpp"

namespace groupforge {

/// Gaussian mean-shift generator. Each example draws a group, then a core
/// block centred on the class direction and a spurious block centred on the
/// spurious-attribute direction, both with isotropic noise sigma.
///
/// Direction of a label l among L values: L == 2 gives (2l - 1) * 1_d, L > 2
/// gives the one-hot axis e_l (requires d >= L), L == 1 gives 0.
struct SyntheticSpec {
  GroupSchema schema;
  std::vector<double> group_proportions;
  std::size_t d_core = 5;
  std::size_t d_spur = 5;
  double mu_core = 1.0;
  double mu_spur = 2.0;
  double sigma = 1.0;
  std::size_t m = 10000;
};

/// Throws groupforge::Error describing the first violated invariant.
void validate(const SyntheticSpec& spec);

LabeledDataset generate(const SyntheticSpec& spec, Rng& rng);

/// waterbirds-like | celeba-like | civilcomments-like | multinli-like.
/// Proportions follow the published training-split group shares,
/// renormalized to sum to one.
SyntheticSpec preset(std::string_view name);

const std::vector<std::string>& preset_names();

}  // namespace groupforge
