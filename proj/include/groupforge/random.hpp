#pragma once

#include <cstdint>
#include <random>

namespace groupforge {

using Rng = std::mt19937_64;

/// Independent random streams derived from one experiment seed. Each
/// stochastic procedure of a run draws from its own stream so that, for
/// example, the subset drawn for mixture balancing never shifts the
/// minibatch sequence.
enum class Stream : std::uint64_t {
  kTrainData = 1,
  kTestData = 2,
  kInit = 3,
  kSubset = 4,
  kBatches = 5,
};

/// splitmix64 finalizer over (seed, stream).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, Stream stream) {
  return Rng(derive_seed(seed, static_cast<std::uint64_t>(stream)));
}

}  // namespace groupforge
