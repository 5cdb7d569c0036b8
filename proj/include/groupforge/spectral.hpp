#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "groupforge/groups.hpp"
#include "groupforge/matrix.hpp"
#include "groupforge/metrics.hpp"

namespace groupforge {

/// Penultimate features z_i with their labels and group partition.
struct FeatureBank {
  LabeledDataset data;
  GroupPartition partition;

  FeatureBank(LabeledDataset features, const GroupSchema& schema);

  const Matrix& features() const noexcept { return data.features(); }
  std::size_t dim() const noexcept { return data.dim(); }
};

/// (1/|rows|) sum_i (z_i - mean)(z_i - mean)^T over the listed rows.
Matrix covariance(const Matrix& features, std::span<const std::size_t> rows);

Matrix group_covariance(const FeatureBank& bank, int g);
Matrix class_covariance(const FeatureBank& bank, int y);

struct EigenDecomposition {
  std::vector<double> values;  // descending
  Matrix vectors;              // column k pairs with values[k]
  int sweeps = 0;
};

/// Cyclic Jacobi on (A + A^T) / 2. Sweeps until the off-diagonal Frobenius
/// norm is at most 1e-12 * ||A||_F, or 100 sweeps.
EigenDecomposition eigendecompose_symmetric(const Matrix& a);

/// Eigenvalues of a covariance matrix, descending, with values in
/// [-1e-10 * max(1, lambda_1), 0) clamped to zero. Anything more negative
/// is treated as a solver failure and throws.
std::vector<double> covariance_spectrum(const Matrix& cov);

struct SpectrumSet {
  /// Top min(k, d) eigenvalues; empty for an empty group or class.
  std::vector<std::vector<double>> per_group;
  std::vector<std::vector<double>> per_class;
};

SpectrumSet top_k_spectrum(const FeatureBank& bank, std::size_t k);

/// rho(y) = lambda_1(g_min(y)) / lambda_1(g_maj(y)) with the min/maj
/// designation taken from `designation` (defaults to the bank's own
/// partition). Absent when a class is empty, either group has fewer than two
/// feature rows, or either top eigenvalue is zero.
std::vector<std::optional<double>> intra_class_rho(
    const FeatureBank& bank, const GroupPartition* designation = nullptr);

struct Correspondence {
  int rho_class = -1;
  int disparity_class = -1;
  bool match = false;

  /// "(a, b)".
  std::string tuple() const;
};

/// Argmax of rho against argmax of disparity over classes where both are
/// defined; ties to the smaller class. nullopt when no class qualifies.
std::optional<Correspondence> correspondence_report(
    std::span<const std::optional<double>> rho, std::span<const std::optional<double>> disparity);

struct SpectralTrial {
  std::string label;
  SpectrumSet spectra;
  std::vector<std::optional<double>> rho;
  std::vector<std::optional<double>> disparity;  // empty when no predictions
  std::optional<Correspondence> correspondence;
};

struct MeanStd {
  std::optional<double> mean;
  std::optional<double> std;  // sample standard deviation, 0 for one trial
  std::size_t count = 0;
};

MeanStd mean_std(std::span<const std::optional<double>> values);

struct SpectralReport {
  std::size_t k = 10;
  GroupSchema schema;
  std::vector<SpectralTrial> trials;
};

/// Spectra, rho and (when `test_accuracy` is given) disparity and
/// correspondence for one bank.
SpectralTrial analyze_bank(const FeatureBank& bank, std::size_t k, std::string label,
                           const GroupPartition* designation = nullptr,
                           const GroupAccuracies* test_accuracy = nullptr);

/// JSON document: per-trial top-k arrays, rho, disparity and correspondence
/// tuples, plus per-class rho mean/std and per-group mean spectra across
/// trials.
std::string spectral_report_json(const SpectralReport& report, const std::string& config_json = {});

}  // namespace groupforge
