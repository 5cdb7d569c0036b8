#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "groupforge/balancing.hpp"
#include "groupforge/groups.hpp"
#include "groupforge/metrics.hpp"
#include "groupforge/model.hpp"
#include "groupforge/spectral.hpp"
#include "groupforge/synthetic.hpp"
#include "groupforge/train.hpp"

namespace groupforge {

enum class Recipe { kCollapse, kMixtureAblation, kScalingSweep, kSpectralReport };

std::string_view to_string(Recipe recipe);
Recipe parse_recipe(std::string_view name);

struct SpectralOptions {
  std::size_t k = 10;
  /// External feature bank; when set no training happens.
  std::optional<std::string> features_csv;
  /// Strategy used to train the models whose features are analysed.
  std::optional<BalancingStrategy> strategy;
};

struct ExperimentConfig {
  Recipe recipe = Recipe::kCollapse;
  std::optional<std::string> preset;
  SyntheticSpec dataset;
  std::size_t test_size = 0;       // 0: same as dataset.m
  std::uint64_t data_seed = 0;     // train/test data are shared across trials
  std::vector<StrategyKind> strategies;
  std::optional<double> mixture_ratio;
  std::vector<double> mixture_ratios;
  std::vector<std::size_t> widths;  // 0 = linear sentinel
  ModelConfig model;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  TrainConfig train;
  SpectralOptions spectral;
  std::string output_dir = "out";
};

/// Parses and validates a JSON config. Unknown keys, missing recipe fields,
/// out-of-range values: ConfigError.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Fully resolved config (defaults filled in) as pretty-printed JSON.
std::string config_to_json(const ExperimentConfig& config);

/// One (strategy, model, seed) training run.
struct CellResult {
  std::string key;  // output subdirectory under the recipe root
  BalancingStrategy strategy;
  ModelConfig model;
  std::uint64_t seed = 0;
  TrainResult run;
  double final_worst_class_acc = 0.0;
};

struct ExperimentResult {
  Recipe recipe = Recipe::kCollapse;
  GroupSchema schema;
  LabeledDataset train_set;
  LabeledDataset test_set;
  double class_ratio = 1.0;
  std::vector<CellResult> cells;
  std::string summary_csv;
  std::string runs_csv;
  std::string report_json;
};

struct RunOptions {
  std::size_t jobs = 1;
  /// Include a `# generated:` timestamp line in output headers.
  bool timestamp = true;
};

/// Runs the configured recipe entirely in memory.
ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

ExperimentResult run_collapse(const ExperimentConfig& config, const RunOptions& options = {});
ExperimentResult run_mixture_ablation(const ExperimentConfig& config, const RunOptions& options = {});
ExperimentResult run_scaling_sweep(const ExperimentConfig& config, const RunOptions& options = {});
ExperimentResult run_spectral_report(const ExperimentConfig& config, const RunOptions& options = {});

/// Writes `<dir>/<recipe>/<key>/seed<k>/trace.csv` (plus train_groups.csv and
/// params.gfm) for every cell, and summary.csv, runs.csv, report.json at the
/// recipe root.
void write_experiment(const ExperimentResult& result, const ExperimentConfig& config,
                      const std::filesystem::path& dir, const RunOptions& options = {});

/// Spectral analysis of one trained cell on the experiment's test set, with
/// minority/majority designations taken from the training partition.
SpectralTrial analyze_cell(const ExperimentResult& result, const CellResult& cell, std::size_t k);

/// `# ` prefixed provenance block: recipe, optional timestamp, resolved config.
std::string provenance_header(const ExperimentConfig& config, bool timestamp);

}  // namespace groupforge
