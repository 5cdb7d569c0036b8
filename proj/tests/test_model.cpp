#include <cmath>
#include <filesystem>
#include <numeric>

#include <gtest/gtest.h>

#include "groupforge/error.hpp"
#include "groupforge/model.hpp"
#include "oracles.hpp"

namespace groupforge {
namespace {

TEST(ModelParams, LayoutAndCounts) {
  const ModelParams linear(ModelConfig::from_width(0), 4, 3);
  EXPECT_EQ(linear.parameter_count(), 4u * 3 + 3);
  EXPECT_EQ(linear.feature_dim(), 4u);
  EXPECT_TRUE(linear.hidden_weights().empty());

  const ModelParams mlp(ModelConfig::from_width(16), 10, 2);
  EXPECT_EQ(mlp.parameter_count(), 16u * 10 + 16 + 2 * 16 + 2);
  EXPECT_EQ(mlp.feature_dim(), 16u);
  EXPECT_EQ(mlp.head_offset(), 176u);

  EXPECT_THROW(ModelParams(ModelConfig{Architecture::kOneHidden, 0}, 3, 2), Error);
  EXPECT_THROW(ModelParams(ModelConfig::from_width(0), 0, 2), Error);
}

TEST(ModelParams, InitializationIsBoundedAndSeeded) {
  Rng a(1), b(1);
  const auto p = ModelParams::initialize(ModelConfig::from_width(32), 9, 2, a);
  EXPECT_EQ(p, ModelParams::initialize(ModelConfig::from_width(32), 9, 2, b));
  for (double v : p.hidden_weights()) EXPECT_LE(std::abs(v), 1.0 / 3.0);
  for (double v : p.head_weights()) EXPECT_LE(std::abs(v), 1.0 / std::sqrt(32.0));
}

TEST(Forward, LinearIdentityPicksColumn) {
  ModelParams p(ModelConfig::from_width(0), 3, 3);
  auto w = p.head_weights();
  const double entries[9] = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::copy(std::begin(entries), std::end(entries), w.begin());
  const std::vector<double> e1{1, 0, 0};
  const auto out = forward(p, e1);
  EXPECT_EQ(out.logits, (std::vector<double>{1, 4, 7}));
  EXPECT_EQ(out.features, e1);
}

TEST(Forward, ZeroHiddenLayerGivesHeadBias) {
  ModelParams p(ModelConfig::from_width(5), 3, 2);
  p.head_bias()[0] = 0.25;
  p.head_bias()[1] = -1.5;
  for (double& v : p.head_weights()) v = 7.0;
  const auto out = forward(p, std::vector<double>{3, -2, 1});
  EXPECT_EQ(out.features, std::vector<double>(5, 0.0));
  EXPECT_EQ(out.logits, (std::vector<double>{0.25, -1.5}));
}

TEST(Forward, DimensionMismatchThrows) {
  ModelParams p(ModelConfig::from_width(0), 3, 2);
  EXPECT_THROW(forward(p, std::vector<double>{1, 2}), Error);
}

TEST(Softmax, SumsToOne) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 50; ++t) {
    auto inst = oracle::random_gradient_instance(rng);
    const auto logits = forward(inst.params, inst.data.features().row(0)).logits;
    const auto p = softmax(logits);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
  }
  const auto extreme = softmax(std::vector<double>{1000, -1000, 0});
  EXPECT_NEAR(extreme[0], 1.0, 1e-15);
}

TEST(WeightedCrossEntropy, Examples) {
  const std::vector<double> flat{0, 0};
  EXPECT_NEAR(weighted_cross_entropy(flat, 0), std::log(2.0), 1e-15);
  EXPECT_NEAR(weighted_cross_entropy(flat, 0, 3.31), 3.31 * std::log(2.0), 1e-15);
  const double confident = weighted_cross_entropy(std::vector<double>{1000, 0}, 0);
  EXPECT_TRUE(std::isfinite(confident));
  EXPECT_NEAR(confident, 0.0, 1e-300);
  EXPECT_NEAR(weighted_cross_entropy(std::vector<double>{1000, 0}, 1), 1000.0, 1e-9);
  EXPECT_THROW(weighted_cross_entropy(flat, 2), Error);
}

TEST(Backward, SingleExampleLinearGradientIsOuterProduct) {
  ModelParams p(ModelConfig::from_width(0), 3, 2);
  const double w[] = {0.3, -0.2, 0.1, 0.5, 0.4, -0.6};
  std::copy(std::begin(w), std::end(w), p.head_weights().begin());
  p.head_bias()[0] = 0.05;
  Matrix x(1, 3);
  x(0, 0) = 1.5;
  x(0, 1) = -0.5;
  x(0, 2) = 2.0;
  LabeledDataset data(x, {1}, {0});
  const std::vector<std::size_t> batch{0};
  const auto grad = backward(p, data, batch);

  const auto probs = softmax(forward(p, x.row(0)).logits);
  for (std::size_t k = 0; k < 2; ++k) {
    const double delta = probs[k] - (k == 1 ? 1.0 : 0.0);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(grad.grads[k * 3 + c], delta * x(0, c), 1e-15);
    EXPECT_NEAR(grad.grads[6 + k], delta, 1e-15);
  }
  EXPECT_NEAR(grad.loss, -std::log(probs[1]), 1e-15);
}

TEST(Backward, ZeroWeightEntryContributesNothing) {
  std::mt19937_64 rng(8);
  auto inst = oracle::random_gradient_instance(rng);
  std::vector<std::size_t> batch{0, 0};
  std::vector<double> weights{1.0, 0.0};
  LabeledDataset data = inst.data;
  const auto with_zero = backward(inst.params, data, batch, weights);
  const std::vector<std::size_t> single{0};
  const auto alone = backward(inst.params, data, single);
  for (std::size_t p = 0; p < alone.grads.size(); ++p)
    EXPECT_DOUBLE_EQ(with_zero.grads[p], alone.grads[p]);
  EXPECT_DOUBLE_EQ(with_zero.loss, alone.loss);
}

TEST(Backward, LossMatchesBatchLoss) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 20; ++t) {
    const auto inst = oracle::random_gradient_instance(rng);
    const auto g = backward(inst.params, inst.data, inst.batch, inst.weights);
    EXPECT_NEAR(g.loss, batch_loss(inst.params, inst.data, inst.batch, inst.weights), 1e-12);
  }
}

TEST(Backward, MatchesCentralDifferences) {
  std::mt19937_64 rng(2718);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto inst = oracle::random_gradient_instance(rng);
    const auto g = backward(inst.params, inst.data, inst.batch, inst.weights);
    worst = std::max(worst, oracle::max_gradient_relative_error(inst, g.grads));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Backward, WeightsMustMatchBatch) {
  std::mt19937_64 rng(1);
  const auto inst = oracle::random_gradient_instance(rng);
  const std::vector<std::size_t> batch{0, 0, 0};
  const std::vector<double> weights{1.0};
  EXPECT_THROW(backward(inst.params, inst.data, batch, weights), Error);
  EXPECT_THROW(backward(inst.params, inst.data, {}), Error);
}

TEST(Predict, ArgmaxWithTiesToSmallerClass) {
  ModelParams p(ModelConfig::from_width(0), 1, 3);
  p.head_bias()[1] = 1.0;
  p.head_bias()[2] = 1.0;
  Matrix x(2, 1);
  x(1, 0) = 1.0;
  p.head_weights()[0] = 5.0;  // class 0 logit 5x
  EXPECT_EQ(predict(p, x), (std::vector<int>{1, 0}));
}

TEST(ExtractFeatures, MatchesForward) {
  Rng rng(3);
  const auto p = ModelParams::initialize(ModelConfig::from_width(6), 4, 2, rng);
  std::mt19937_64 data_rng(1);
  std::normal_distribution<double> normal;
  Matrix x(5, 4);
  for (double& v : x.data()) v = normal(data_rng);
  const Matrix z = extract_features(p, x);
  ASSERT_EQ(z.cols(), 6u);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto f = forward(p, x.row(i)).features;
    for (std::size_t j = 0; j < 6; ++j) {
      EXPECT_EQ(z(i, j), f[j]);
      EXPECT_GE(z(i, j), 0.0);
    }
  }
}

TEST(Serialization, RoundTripIsBitExact) {
  Rng rng(12);
  for (auto config : {ModelConfig::from_width(0), ModelConfig::from_width(7)}) {
    auto p = ModelParams::initialize(config, 5, 3, rng);
    p.values()[0] = -0.0;
    p.values()[1] = 1e-310;
    const auto bytes = serialize_params(p);
    EXPECT_EQ(bytes.size(), 20 + 8 * p.parameter_count());
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "GFM1");
    const auto back = deserialize_params(bytes);
    EXPECT_EQ(back, p);
    EXPECT_TRUE(std::signbit(back.values()[0]));
  }
}

TEST(Serialization, HeaderIsLittleEndian) {
  const ModelParams p(ModelConfig::from_width(3), 2, 2);
  const auto bytes = serialize_params(p);
  const std::vector<unsigned char> header(bytes.begin() + 4, bytes.begin() + 20);
  EXPECT_EQ(header, (std::vector<unsigned char>{1, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0, 2, 0, 0, 0}));
}

TEST(Serialization, RejectsCorruptInput) {
  const ModelParams p(ModelConfig::from_width(3), 2, 2);
  auto bytes = serialize_params(p);
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(deserialize_params(truncated), Error);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_params(bad_magic), Error);
  auto bad_arch = bytes;
  bad_arch[4] = 9;
  EXPECT_THROW(deserialize_params(bad_arch), Error);
}

TEST(Serialization, FileRoundTrip) {
  Rng rng(2);
  const auto p = ModelParams::initialize(ModelConfig::from_width(4), 3, 2, rng);
  const auto path = std::filesystem::temp_directory_path() / "groupforge_params.gfm";
  save_params(path, p);
  EXPECT_EQ(load_params(path), p);
  std::filesystem::remove(path);
  EXPECT_THROW(load_params(path), Error);
}

}  // namespace
}  // namespace groupforge
