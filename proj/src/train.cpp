#include "groupforge/train.hpp"

#include <cmath>
#include <iterator>

#include <fmt/format.h>

#include "groupforge/error.hpp"
#include "groupforge/metrics.hpp"
#include "groupforge/random.hpp"

namespace groupforge {

const EpochRecord& TrainTrace::peak_wga_epoch() const {
  if (epochs.empty()) throw Error("empty trace");
  const EpochRecord* best = &epochs.front();
  for (const auto& rec : epochs)
    if (rec.wga > best->wga) best = &rec;
  return *best;
}

namespace {

// Accuracy of `params` over the rows listed in `active`, overall and per group.
void active_set_accuracy(const ModelParams& params, const LabeledDataset& data,
                         const GroupSchema& schema, const IndexSet& active, EpochRecord& rec) {
  std::vector<std::size_t> correct(schema.num_groups(), 0);
  std::vector<std::size_t> total(schema.num_groups(), 0);
  std::size_t hits = 0;
  Matrix rows(active.size(), data.dim());
  for (std::size_t k = 0; k < active.size(); ++k) {
    const auto src = data.features().row(active[k]);
    std::copy(src.begin(), src.end(), rows.row(k).begin());
  }
  const auto pred = predict(params, rows);
  for (std::size_t k = 0; k < active.size(); ++k) {
    const std::size_t i = active[k];
    const int g = schema.group_id(data.class_labels()[i], data.spurious_labels()[i]);
    ++total[g];
    if (pred[k] == data.class_labels()[i]) {
      ++correct[g];
      ++hits;
    }
  }
  rec.train_acc = static_cast<double>(hits) / static_cast<double>(active.size());
  rec.train_group_acc.assign(schema.num_groups(), std::nullopt);
  for (int g = 0; g < schema.num_groups(); ++g)
    if (total[g] > 0)
      rec.train_group_acc[g] = static_cast<double>(correct[g]) / static_cast<double>(total[g]);
}

}  // namespace

TrainResult train(const LabeledDataset& train_set, const LabeledDataset& test_set,
                  const GroupSchema& schema, const BalancingStrategy& strategy,
                  const ModelConfig& model, const TrainConfig& config) {
  if (config.batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (config.epochs == 0) throw ConfigError("epochs must be at least 1");
  if (train_set.dim() != test_set.dim()) throw Error("train and test feature dimensions differ");

  const GroupPartition train_partition = build_partition(train_set, schema);
  const GroupPartition test_partition = build_partition(test_set, schema);

  Rng init_rng = make_rng(config.seed, Stream::kInit);
  Rng subset_rng = make_rng(config.seed, Stream::kSubset);
  Rng batch_rng = make_rng(config.seed, Stream::kBatches);

  TrainResult result;
  ResolvedStrategy resolved = resolve_strategy(strategy, train_partition, subset_rng);
  result.plan = resolved.plan;
  result.params = ModelParams::initialize(model, train_set.dim(),
                                          static_cast<std::size_t>(schema.num_classes), init_rng);
  result.trace.num_groups = static_cast<std::size_t>(schema.num_groups());

  AdamW optimizer(result.params.parameter_count(), config.optimizer);
  MinibatchSampler sampler(resolved.plan);
  const std::size_t active = resolved.plan.size();
  const std::size_t steps = (active + config.batch_size - 1) / config.batch_size;

  std::vector<std::size_t> batch(config.batch_size);
  std::vector<double> batch_weights;
  if (resolved.weights) batch_weights.resize(config.batch_size);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr_scale = schedule_factor(config.optimizer.schedule, epoch - 1, config.epochs);
    double loss_sum = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
      sampler.draw_into(batch, batch_rng);
      if (resolved.weights)
        for (std::size_t b = 0; b < batch.size(); ++b)
          batch_weights[b] = resolved.weights->weights[batch[b]];
      const LossGradient lg = backward(result.params, train_set, batch, batch_weights);
      if (!std::isfinite(lg.loss))
        throw DivergenceError(epoch, fmt::format("non-finite training loss at epoch {}", epoch));
      loss_sum += lg.loss;
      optimizer.step(result.params.values(), lg.grads, lr_scale);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(steps);
    active_set_accuracy(result.params, train_set, schema, resolved.plan.active_indices, rec);

    const auto test_pred = predict(result.params, test_set.features());
    const GroupAccuracies acc = per_group_accuracy(test_pred, test_set, test_partition);
    rec.test_group_acc = acc.accuracies();
    const Extremum worst = worst_group_accuracy(acc);
    rec.wga = worst.value;
    rec.worst_group = worst.id;
    rec.avg_acc = average_accuracy(acc);
    result.trace.epochs.push_back(std::move(rec));
  }
  return result;
}

std::optional<std::size_t> interpolation_epoch(const TrainTrace& trace) {
  for (const auto& rec : trace.epochs)
    if (rec.train_acc == 1.0) return rec.epoch;
  return std::nullopt;
}

namespace {

void put_optional(fmt::memory_buffer& out, const std::optional<double>& v) {
  out.push_back(',');
  if (v) fmt::format_to(std::back_inserter(out), "{}", *v);
}

}  // namespace

std::string trace_to_csv(const TrainTrace& trace, const std::string& preamble) {
  fmt::memory_buffer out;
  fmt::format_to(std::back_inserter(out), "{}epoch,train_loss,train_acc", preamble);
  for (std::size_t g = 0; g < trace.num_groups; ++g)
    fmt::format_to(std::back_inserter(out), ",acc_g{}", g);
  fmt::format_to(std::back_inserter(out), ",wga,avg_acc\n");
  for (const auto& rec : trace.epochs) {
    fmt::format_to(std::back_inserter(out), "{},{},{}", rec.epoch, rec.train_loss, rec.train_acc);
    for (const auto& a : rec.test_group_acc) put_optional(out, a);
    fmt::format_to(std::back_inserter(out), ",{},{}\n", rec.wga, rec.avg_acc);
  }
  return fmt::to_string(out);
}

std::string train_group_accuracy_csv(const TrainTrace& trace, const std::string& preamble) {
  fmt::memory_buffer out;
  fmt::format_to(std::back_inserter(out), "{}epoch", preamble);
  for (std::size_t g = 0; g < trace.num_groups; ++g)
    fmt::format_to(std::back_inserter(out), ",train_acc_g{}", g);
  out.push_back('\n');
  for (const auto& rec : trace.epochs) {
    fmt::format_to(std::back_inserter(out), "{}", rec.epoch);
    for (const auto& a : rec.train_group_acc) put_optional(out, a);
    out.push_back('\n');
  }
  return fmt::to_string(out);
}

}  // namespace groupforge
