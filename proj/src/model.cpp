#include "groupforge/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "groupforge/error.hpp"

namespace groupforge {

ModelParams::ModelParams(const ModelConfig& config, std::size_t input_dim,
                         std::size_t output_dim)
    : architecture_(config.architecture),
      input_dim_(input_dim),
      hidden_width_(config.architecture == Architecture::kLinear ? 0 : config.hidden_width),
      output_dim_(output_dim) {
  if (input_dim == 0 || output_dim == 0) throw Error("model dimensions must be positive");
  if (architecture_ == Architecture::kOneHidden && hidden_width_ == 0)
    throw Error("one_hidden architecture needs a positive width");
  values_.assign(head_offset() + head_weight_count() + output_dim_, 0.0);
}

ModelParams ModelParams::initialize(const ModelConfig& config, std::size_t input_dim,
                                    std::size_t output_dim, Rng& rng) {
  ModelParams params(config, input_dim, output_dim);
  auto fill = [&rng](std::span<double> block, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : block) v = dist(rng);
  };
  fill(params.hidden_weights(), input_dim);
  fill(params.hidden_bias(), input_dim);
  fill(params.head_weights(), params.feature_dim());
  fill(params.head_bias(), params.feature_dim());
  return params;
}

namespace {

// logits = W v + b with W stored row-major (rows x v.size()).
void affine(std::span<const double> w, std::span<const double> b, std::span<const double> v,
            std::span<double> out) {
  const std::size_t cols = v.size();
  for (std::size_t r = 0; r < out.size(); ++r) {
    const double* wr = w.data() + r * cols;
    double acc = b[r];
    for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * v[c];
    out[r] = acc;
  }
}

void check_input(const ModelParams& params, std::size_t dim) {
  if (dim != params.input_dim())
    throw Error(fmt::format("input has dimension {}, model expects {}", dim, params.input_dim()));
}

// Scratch buffers for one forward/backward pass.
struct Workspace {
  explicit Workspace(const ModelParams& p)
      : hidden(p.hidden_width()), logits(p.output_dim()), delta(p.output_dim()),
        dz(p.hidden_width()) {}
  std::vector<double> hidden;  // pre-activation, then rectified in place
  std::vector<double> logits;
  std::vector<double> delta;
  std::vector<double> dz;
};

std::span<const double> run_forward(const ModelParams& params, std::span<const double> x,
                                    Workspace& ws) {
  if (params.architecture() == Architecture::kLinear) {
    affine(params.head_weights(), params.head_bias(), x, ws.logits);
    return x;
  }
  affine(params.hidden_weights(), params.hidden_bias(), x, ws.hidden);
  for (double& h : ws.hidden) h = h > 0.0 ? h : 0.0;
  affine(params.head_weights(), params.head_bias(), ws.hidden, ws.logits);
  return ws.hidden;
}

double log_sum_exp(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - top);
  return top + std::log(sum);
}

int argmax(std::span<const double> values) {
  return static_cast<int>(std::max_element(values.begin(), values.end()) - values.begin());
}

double total_weight(std::span<const std::size_t> batch, std::span<const double> weights) {
  if (weights.empty()) return static_cast<double>(batch.size());
  if (weights.size() != batch.size()) throw Error("one weight per batch entry is required");
  double sum = 0.0;
  for (double w : weights) sum += w;
  return sum;
}

}  // namespace

ForwardResult forward(const ModelParams& params, std::span<const double> x) {
  check_input(params, x.size());
  Workspace ws(params);
  const auto z = run_forward(params, x, ws);
  return ForwardResult{ws.logits, std::vector<double>(z.begin(), z.end())};
}

std::vector<double> softmax(std::span<const double> logits) {
  const double lse = log_sum_exp(logits);
  std::vector<double> p(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) p[k] = std::exp(logits[k] - lse);
  return p;
}

double weighted_cross_entropy(std::span<const double> logits, int y, double gamma) {
  if (y < 0 || static_cast<std::size_t>(y) >= logits.size())
    throw Error(fmt::format("label {} outside [0, {})", y, logits.size()));
  return gamma * (log_sum_exp(logits) - logits[y]);
}

LossGradient backward(const ModelParams& params, const LabeledDataset& data,
                      std::span<const std::size_t> batch, std::span<const double> weights) {
  if (batch.empty()) throw Error("backward needs a nonempty batch");
  check_input(params, data.dim());
  const double norm = total_weight(batch, weights);

  LossGradient out;
  out.grads.assign(params.parameter_count(), 0.0);
  if (norm <= 0.0) return out;

  const std::size_t n = params.input_dim();
  const std::size_t h = params.hidden_width();
  const std::size_t k_out = params.output_dim();
  const std::size_t fdim = params.feature_dim();
  const bool linear = params.architecture() == Architecture::kLinear;
  const auto w_head = params.head_weights();

  std::span<double> g_all(out.grads);
  auto g_w1 = g_all.subspan(0, params.hidden_weight_count());
  auto g_b1 = g_all.subspan(params.hidden_weight_count(), params.hidden_bias_count());
  auto g_w2 = g_all.subspan(params.head_offset(), params.head_weight_count());
  auto g_b2 = g_all.subspan(params.head_offset() + params.head_weight_count(), k_out);

  Workspace ws(params);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const double w = weights.empty() ? 1.0 : weights[b];
    const std::size_t i = batch[b];
    const auto x = data.features().row(i);
    const int y = data.class_labels()[i];
    const auto z = run_forward(params, x, ws);

    const double lse = log_sum_exp(ws.logits);
    out.loss += w * (lse - ws.logits[y]);
    if (w == 0.0) continue;

    const double scale = w / norm;
    for (std::size_t k = 0; k < k_out; ++k)
      ws.delta[k] = scale * (std::exp(ws.logits[k] - lse) - (static_cast<int>(k) == y ? 1.0 : 0.0));

    for (std::size_t k = 0; k < k_out; ++k) {
      const double d = ws.delta[k];
      g_b2[k] += d;
      double* row = g_w2.data() + k * fdim;
      for (std::size_t j = 0; j < fdim; ++j) row[j] += d * z[j];
    }
    if (linear) continue;

    for (std::size_t j = 0; j < h; ++j) {
      if (ws.hidden[j] <= 0.0) {
        ws.dz[j] = 0.0;
        continue;
      }
      double acc = 0.0;
      for (std::size_t k = 0; k < k_out; ++k) acc += w_head[k * h + j] * ws.delta[k];
      ws.dz[j] = acc;
    }
    for (std::size_t j = 0; j < h; ++j) {
      const double d = ws.dz[j];
      if (d == 0.0) continue;
      g_b1[j] += d;
      double* row = g_w1.data() + j * n;
      for (std::size_t c = 0; c < n; ++c) row[c] += d * x[c];
    }
  }
  out.loss /= norm;
  return out;
}

double batch_loss(const ModelParams& params, const LabeledDataset& data,
                  std::span<const std::size_t> batch, std::span<const double> weights) {
  if (batch.empty()) throw Error("loss needs a nonempty batch");
  check_input(params, data.dim());
  const double norm = total_weight(batch, weights);
  if (norm <= 0.0) return 0.0;
  Workspace ws(params);
  double loss = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const double w = weights.empty() ? 1.0 : weights[b];
    const std::size_t i = batch[b];
    run_forward(params, data.features().row(i), ws);
    loss += weighted_cross_entropy(ws.logits, data.class_labels()[i], w);
  }
  return loss / norm;
}

std::vector<int> predict(const ModelParams& params, const Matrix& inputs) {
  check_input(params, inputs.cols());
  Workspace ws(params);
  std::vector<int> out(inputs.rows());
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    run_forward(params, inputs.row(i), ws);
    out[i] = argmax(ws.logits);
  }
  return out;
}

Matrix extract_features(const ModelParams& params, const Matrix& inputs) {
  check_input(params, inputs.cols());
  Workspace ws(params);
  Matrix out(inputs.rows(), params.feature_dim());
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    const auto z = run_forward(params, inputs.row(i), ws);
    std::copy(z.begin(), z.end(), out.row(i).begin());
  }
  return out;
}

namespace {

constexpr unsigned char kMagic[4] = {'G', 'F', 'M', '1'};

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<unsigned char>(v >> s));
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int s = 0; s < 64; s += 8) out.push_back(static_cast<unsigned char>(v >> s));
}

std::uint64_t get_le(std::span<const unsigned char> bytes, std::size_t offset, int width) {
  std::uint64_t v = 0;
  for (int b = 0; b < width; ++b) v |= static_cast<std::uint64_t>(bytes[offset + b]) << (8 * b);
  return v;
}

}  // namespace

std::vector<unsigned char> serialize_params(const ModelParams& params) {
  std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, static_cast<std::uint32_t>(params.architecture()));
  put_u32(out, static_cast<std::uint32_t>(params.input_dim()));
  put_u32(out, static_cast<std::uint32_t>(params.hidden_width()));
  put_u32(out, static_cast<std::uint32_t>(params.output_dim()));
  for (double v : params.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

ModelParams deserialize_params(std::span<const unsigned char> bytes) {
  constexpr std::size_t kHeader = 4 + 4 * 4;
  if (bytes.size() < kHeader || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin()))
    throw Error("not a GFM1 parameter file");
  const auto arch = static_cast<std::int32_t>(get_le(bytes, 4, 4));
  const auto input_dim = static_cast<std::int32_t>(get_le(bytes, 8, 4));
  const auto hidden = static_cast<std::int32_t>(get_le(bytes, 12, 4));
  const auto output_dim = static_cast<std::int32_t>(get_le(bytes, 16, 4));
  if (arch != 0 && arch != 1) throw Error(fmt::format("unknown architecture code {}", arch));
  if (input_dim <= 0 || output_dim <= 0 || hidden < 0) throw Error("invalid dimensions in header");

  ModelConfig config{static_cast<Architecture>(arch), static_cast<std::size_t>(hidden)};
  ModelParams params(config, static_cast<std::size_t>(input_dim),
                     static_cast<std::size_t>(output_dim));
  if (bytes.size() != kHeader + 8 * params.parameter_count())
    throw Error(fmt::format("expected {} parameters, file holds {} bytes of payload",
                            params.parameter_count(), bytes.size() - kHeader));
  auto values = params.values();
  for (std::size_t k = 0; k < values.size(); ++k)
    values[k] = std::bit_cast<double>(get_le(bytes, kHeader + 8 * k, 8));
  return params;
}

void save_params(const std::filesystem::path& path, const ModelParams& params) {
  const auto bytes = serialize_params(params);
  std::ofstream file(path, std::ios::binary);
  if (!file) throw Error(fmt::format("cannot open {} for writing", path.string()));
  file.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ModelParams load_params(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw Error(fmt::format("cannot open {}", path.string()));
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(file)),
                                   std::istreambuf_iterator<char>());
  return deserialize_params(bytes);
}

}  // namespace groupforge
