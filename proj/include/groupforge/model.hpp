#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "groupforge/groups.hpp"
#include "groupforge/matrix.hpp"
#include "groupforge/random.hpp"

namespace groupforge {

enum class Architecture { kLinear = 0, kOneHidden = 1 };

struct ModelConfig {
  Architecture architecture = Architecture::kOneHidden;
  std::size_t hidden_width = 64;

  /// Width 0 is the linear sentinel used by scaling sweeps.
  static ModelConfig from_width(std::size_t width) {
    return width == 0 ? ModelConfig{Architecture::kLinear, 0}
                      : ModelConfig{Architecture::kOneHidden, width};
  }
};

/// Classifier parameters in one flat buffer, in declaration order:
///   linear:     W (K x n), b (K)
///   one_hidden: W1 (h x n), b1 (h), W2 (K x h), b2 (K)
/// Gradients share the same layout.
class ModelParams {
 public:
  ModelParams() = default;
  ModelParams(const ModelConfig& config, std::size_t input_dim, std::size_t output_dim);

  /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for every weight and bias.
  static ModelParams initialize(const ModelConfig& config, std::size_t input_dim,
                                std::size_t output_dim, Rng& rng);

  Architecture architecture() const noexcept { return architecture_; }
  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t hidden_width() const noexcept { return hidden_width_; }
  std::size_t output_dim() const noexcept { return output_dim_; }
  /// Dimension of the penultimate representation z.
  std::size_t feature_dim() const noexcept {
    return architecture_ == Architecture::kLinear ? input_dim_ : hidden_width_;
  }
  std::size_t parameter_count() const noexcept { return values_.size(); }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  // Views into the flat buffer. For the linear architecture the hidden
  // blocks are empty and head_* refer to W and b.
  std::span<const double> hidden_weights() const { return block(0, hidden_weight_count()); }
  std::span<const double> hidden_bias() const {
    return block(hidden_weight_count(), hidden_bias_count());
  }
  std::span<const double> head_weights() const { return block(head_offset(), head_weight_count()); }
  std::span<const double> head_bias() const {
    return block(head_offset() + head_weight_count(), output_dim_);
  }
  std::span<double> hidden_weights() { return mutable_block(0, hidden_weight_count()); }
  std::span<double> hidden_bias() {
    return mutable_block(hidden_weight_count(), hidden_bias_count());
  }
  std::span<double> head_weights() { return mutable_block(head_offset(), head_weight_count()); }
  std::span<double> head_bias() {
    return mutable_block(head_offset() + head_weight_count(), output_dim_);
  }

  std::size_t hidden_weight_count() const noexcept {
    return architecture_ == Architecture::kLinear ? 0 : hidden_width_ * input_dim_;
  }
  std::size_t hidden_bias_count() const noexcept {
    return architecture_ == Architecture::kLinear ? 0 : hidden_width_;
  }
  std::size_t head_offset() const noexcept { return hidden_weight_count() + hidden_bias_count(); }
  std::size_t head_weight_count() const noexcept { return output_dim_ * feature_dim(); }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  std::span<const double> block(std::size_t offset, std::size_t count) const {
    return std::span<const double>(values_).subspan(offset, count);
  }
  std::span<double> mutable_block(std::size_t offset, std::size_t count) {
    return std::span<double>(values_).subspan(offset, count);
  }

  Architecture architecture_ = Architecture::kLinear;
  std::size_t input_dim_ = 0;
  std::size_t hidden_width_ = 0;
  std::size_t output_dim_ = 0;
  std::vector<double> values_;
};

struct ForwardResult {
  std::vector<double> logits;
  std::vector<double> features;  // penultimate z
};

/// Throws groupforge::Error on a dimension mismatch.
ForwardResult forward(const ModelParams& params, std::span<const double> x);

/// Numerically stable softmax.
std::vector<double> softmax(std::span<const double> logits);

/// gamma * -log softmax(logits)[y], via log-sum-exp with max subtraction.
double weighted_cross_entropy(std::span<const double> logits, int y, double gamma = 1.0);

struct LossGradient {
  double loss = 0.0;          // sum_i w_i l_i / sum_i w_i
  std::vector<double> grads;  // layout of ModelParams::values()
};

/// Exact gradient of the weight-normalized batch loss. `weights` is either
/// empty (all ones) or one weight per batch entry.
LossGradient backward(const ModelParams& params, const LabeledDataset& data,
                      std::span<const std::size_t> batch, std::span<const double> weights = {});

/// Same loss without the gradient.
double batch_loss(const ModelParams& params, const LabeledDataset& data,
                  std::span<const std::size_t> batch, std::span<const double> weights = {});

/// Argmax class per row of `inputs` (ties to the smaller class).
std::vector<int> predict(const ModelParams& params, const Matrix& inputs);

/// Penultimate features, one row per input row.
Matrix extract_features(const ModelParams& params, const Matrix& inputs);

// Binary persistence: "GFM1", then architecture, input_dim, hidden_width,
// output_dim as little-endian int32, then parameters as little-endian float64
// in declaration order.
std::vector<unsigned char> serialize_params(const ModelParams& params);
ModelParams deserialize_params(std::span<const unsigned char> bytes);
void save_params(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_params(const std::filesystem::path& path);

}  // namespace groupforge
