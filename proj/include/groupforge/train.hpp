#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "groupforge/balancing.hpp"
#include "groupforge/groups.hpp"
#include "groupforge/model.hpp"
#include "groupforge/optimizer.hpp"

namespace groupforge {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  AdamWConfig optimizer;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  /// Accuracy over the active training set.
  double train_acc = 0.0;
  std::vector<std::optional<double>> test_group_acc;
  double wga = 0.0;
  int worst_group = -1;
  double avg_acc = 0.0;
  /// Per-group accuracy over the active training set, for inspecting which
  /// groups the model memorizes.
  std::vector<std::optional<double>> train_group_acc;
};

struct TrainTrace {
  std::size_t num_groups = 0;
  std::vector<EpochRecord> epochs;

  const EpochRecord& final_epoch() const { return epochs.back(); }
  /// Largest WGA over epochs, earliest epoch on ties.
  const EpochRecord& peak_wga_epoch() const;
};

struct TrainResult {
  ModelParams params;
  TrainTrace trace;
  SamplingPlan plan;  // the plan actually used, including the active set
};

/// Trains from a seeded initialization under `strategy`, evaluating on `test`
/// after every epoch. One epoch is ceil(|active| / batch_size) minibatches
/// drawn with replacement from the strategy's plan. Upweighted losses are
/// normalized by the batch weight sum. Throws DivergenceError on a
/// non-finite loss.
TrainResult train(const LabeledDataset& train_set, const LabeledDataset& test_set,
                  const GroupSchema& schema, const BalancingStrategy& strategy,
                  const ModelConfig& model, const TrainConfig& config);

/// First 1-based epoch whose training accuracy is exactly 1.
std::optional<std::size_t> interpolation_epoch(const TrainTrace& trace);

/// `epoch,train_loss,train_acc,acc_g0,...,acc_gK,wga,avg_acc`; absent groups
/// are left empty. `preamble` lines are emitted first, verbatim.
std::string trace_to_csv(const TrainTrace& trace, const std::string& preamble = {});

/// `epoch,train_acc_g0,...,train_acc_gK`.
std::string train_group_accuracy_csv(const TrainTrace& trace, const std::string& preamble = {});

}  // namespace groupforge
