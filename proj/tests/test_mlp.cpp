#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "gradcheck.hpp"
#include "vitsel/metrics.hpp"
#include "vitsel/mlp.hpp"
#include "vitsel/synthetic.hpp"

namespace vitsel {
namespace {

const ClassWeights kTableWeights = compute_class_weights({50371, 28895, 5814});

TEST(ClassWeights, ReproducesPublishedTable) {
  EXPECT_NEAR(kTableWeights.weights[0], 1.000, 5e-4);
  EXPECT_NEAR(kTableWeights.weights[1], 1.743, 5e-4);
  EXPECT_NEAR(kTableWeights.weights[2], 8.664, 5e-4);
  EXPECT_EQ(kTableWeights.weights[0], 1.0);
  EXPECT_EQ(kTableWeights.weights[1], 50371.0 / 28895.0);
  EXPECT_EQ(kTableWeights.weights[2], 50371.0 / 5814.0);
}

TEST(ClassWeights, HandCases) {
  const auto w = compute_class_weights({100, 50, 25}).weights;
  EXPECT_EQ(w[0], 1.0);
  EXPECT_EQ(w[1], 2.0);
  EXPECT_EQ(w[2], 4.0);
  const auto eq = compute_class_weights({10, 10, 10}).weights;
  for (double v : eq) EXPECT_EQ(v, 1.0);
  EXPECT_THROW(compute_class_weights({10, 0, 3}), Error);
}

TEST(WeightedCrossEntropy, UniformLogits) {
  const std::vector<double> z = {0, 0, 0};
  for (int y = 0; y < 3; ++y) EXPECT_NEAR(weighted_cross_entropy(z, y), std::log(3.0), 1e-15);
}

TEST(WeightedCrossEntropy, HandEvaluatedWeightedCase) {
  const std::vector<double> z = {std::log(0.1), std::log(0.2), std::log(0.7)};
  const double loss = weighted_cross_entropy(z, 2, kTableWeights);
  EXPECT_NEAR(loss, 3.0902, 1e-4);
  EXPECT_NEAR(loss, -(50371.0 / 5814.0) * std::log(0.7), 1e-12);
}

TEST(WeightedCrossEntropy, UnitWeightsMatchUnweighted) {
  const ClassWeights ones = compute_class_weights({7, 7, 7});
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const std::vector<double> z = {rng.normal(0, 10), rng.normal(0, 10), rng.normal(0, 10)};
    const int y = static_cast<int>(rng.index(3));
    EXPECT_EQ(weighted_cross_entropy(z, y, ones), weighted_cross_entropy(z, y));
  }
}

TEST(WeightedCrossEntropy, StableForHugeLogits) {
  const std::vector<double> z = {1000.0, -1000.0, 0.0};
  EXPECT_NEAR(weighted_cross_entropy(z, 0), 0.0, 1e-12);
  EXPECT_NEAR(weighted_cross_entropy(z, 2), 1000.0, 1e-9);
}

MLPParams random_params(std::vector<std::size_t> sizes, std::uint64_t seed) {
  MLPParams p = init_mlp(std::move(sizes), seed);
  Rng rng(seed + 1);
  for (auto& b : p.biases)
    for (Eigen::Index i = 0; i < b.rows(); ++i) b(i, 0) = rng.normal(0.0, 0.3);
  return p;
}

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal(0.0, 1.0);
  return m;
}

TEST(MlpGradient, MatchesFiniteDifferences) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    MLPParams p = random_params({5, 7, 6, 3}, seed * 10);
    Rng rng(seed);
    const Eigen::MatrixXd x = random_matrix(9, 5, rng);
    std::vector<int> y(9);
    for (int& v : y) v = static_cast<int>(rng.index(3));

    // Keep every hidden pre-activation clear of the ReLU kink.
    MLPCache cache;
    mlp_logits(p, x, &cache);
    for (std::size_t k = 0; k + 1 < cache.pre.size(); ++k)
      ASSERT_GT(cache.pre[k].cwiseAbs().minCoeff(), 1e-3) << "seed " << seed << " lands on a kink";

    for (const auto& weights : {std::optional<ClassWeights>{}, std::optional<ClassWeights>{kTableWeights}}) {
      const auto analytic = mlp_loss_and_gradient(p, x, y, weights);
      EXPECT_NEAR(analytic.loss, mlp_loss(p, x, y, weights), 1e-12);
      auto tensors = p.mutable_tensors();
      int probes = 0;
      for (std::size_t t = 0; t < tensors.size(); ++t) {
        Eigen::MatrixXd& m = *tensors[t];
        for (Eigen::Index j = 0; j < m.cols(); ++j)
          for (Eigen::Index i = 0; i < m.rows(); ++i) {
            const double numeric =
                testing::central_difference(m, i, j, [&] { return mlp_loss(p, x, y, weights); });
            EXPECT_LT(testing::relative_error(analytic.grads[t](i, j), numeric), 1e-4)
                << "tensor " << t << " (" << i << "," << j << ")";
            ++probes;
          }
      }
      EXPECT_GE(probes, 100);
    }
  }
}

TEST(MlpGradient, BatchWeightsAreAveragedNotRenormalised) {
  MLPParams p = random_params({2, 3}, 4);
  Rng rng(4);
  const Eigen::MatrixXd x = random_matrix(2, 2, rng);
  const std::vector<int> y = {2, 2};
  const double weighted = mlp_loss(p, x, y, kTableWeights);
  EXPECT_NEAR(weighted, kTableWeights.weights[2] * mlp_loss(p, x, y, std::nullopt), 1e-12);
}

TEST(MlpGradient, ScalingAClassWeightRaisesItsShare) {
  const Dataset data = generate_synthetic({20, 15, 10}, 6, 2, 8);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const MLPParams p = random_params({6, 8, 3}, seed);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      ClassWeights base = compute_class_weights({1, 1, 1});
      double previous_share = -1.0;
      for (double scale : {1.0, 2.0, 5.0, 20.0}) {
        ClassWeights w = base;
        w.weights[c] = scale;
        const auto norms = per_class_gradient_norms(p, data, w);
        const double share = norms[c] / (norms[0] + norms[1] + norms[2]);
        EXPECT_GE(share, previous_share - 1e-12);
        previous_share = share;
      }
    }
  }
}

TEST(Predict, ZeroParamsGiveUniformAndClassZero) {
  const MLPParams p = zero_mlp({4, 5, 3});
  Rng rng(6);
  const Prediction pr = predict(p, random_matrix(10, 4, rng));
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(pr.classes[i], 0);
  EXPECT_LT((pr.probabilities.array() - 1.0 / 3.0).abs().maxCoeff(), 1e-15);
}

TEST(Predict, RowsSumToOneAndBiasShiftInvariant) {
  Rng rng(7);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    MLPParams p = random_params({4, 6, 3}, seed);
    for (auto& w : p.weights) w *= 5.0;
    const Eigen::MatrixXd x = random_matrix(25, 4, rng);
    const Prediction a = predict(p, x);
    EXPECT_LT((a.probabilities.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-9);
    p.biases.back().array() += 3.75;
    const Prediction b = predict(p, x);
    EXPECT_EQ(a.classes, b.classes);
    EXPECT_LT((a.probabilities - b.probabilities).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_THROW(predict(zero_mlp({4, 3}), Eigen::MatrixXd::Zero(2, 5)), Error);
}

MLPTrainConfig small_config(std::size_t epochs) {
  MLPTrainConfig c;
  c.hidden = {16, 8};
  c.epochs = epochs;
  c.batch_size = 16;
  c.seed = 21;
  return c;
}

// Desk-scale sets hold a few hundred rows, so the default batch of 128 would
// give only a handful of optimizer steps per epoch.
MLPTrainConfig desk_config(std::uint64_t seed) {
  MLPTrainConfig c;
  c.batch_size = 32;
  c.learning_rate = 1e-2;
  c.seed = seed;
  return c;
}

TEST(TrainMlp, ZeroEpochsRejected) {
  const Dataset d = generate_synthetic({5, 5, 5}, 4, 2, 1);
  EXPECT_THROW(train_mlp(d, d, small_config(0)), Error);
}

TEST(TrainMlp, WidthMismatchRejected) {
  const Dataset a = generate_synthetic({5, 5, 5}, 4, 2, 1);
  const Dataset b = generate_synthetic({5, 5, 5}, 5, 2, 1);
  EXPECT_THROW(train_mlp(a, b, small_config(1)), Error);
}

TEST(TrainMlp, DeterministicAndBestEpochIsArgmin) {
  const Dataset train = generate_synthetic({30, 20, 10}, 8, 3, 2);
  const Dataset val = generate_synthetic({10, 8, 6}, 8, 3, 3);
  const auto weights = compute_class_weights(train.labels.counts());
  const TrainReport a = train_mlp(train, val, small_config(15), weights);
  const TrainReport b = train_mlp(train, val, small_config(15), weights);
  EXPECT_EQ(a.train_loss, b.train_loss);
  EXPECT_EQ(a.val_loss, b.val_loss);
  EXPECT_EQ(a.best_epoch, b.best_epoch);
  EXPECT_TRUE(a.best_params == b.best_params);
  EXPECT_TRUE(a.final_params == b.final_params);
  ASSERT_EQ(a.val_loss.size(), 15u);
  const auto it = std::min_element(a.val_loss.begin(), a.val_loss.end());
  EXPECT_EQ(a.best_epoch, static_cast<std::size_t>(it - a.val_loss.begin()));
  EXPECT_NEAR(mlp_loss(a.best_params, val.features.matrix(), val.labels.values(), weights), *it, 1e-12);
}

TEST(TrainMlp, EqualCountsMakeWeightingANoOp) {
  const Dataset train = generate_synthetic({12, 12, 12}, 6, 2, 4);
  const Dataset val = generate_synthetic({4, 4, 4}, 6, 2, 5);
  const auto weights = compute_class_weights(train.labels.counts());
  const TrainReport w = train_mlp(train, val, small_config(5), weights);
  const TrainReport u = train_mlp(train, val, small_config(5));
  EXPECT_EQ(w.train_loss, u.train_loss);
  EXPECT_EQ(w.val_loss, u.val_loss);
  EXPECT_TRUE(w.final_params == u.final_params);
}

TEST(TrainMlp, SeparableDataReachesHighF1) {
  const Dataset train = generate_synthetic({60, 40, 20}, 16, 4, 30);
  const Dataset val = generate_synthetic({30, 20, 10}, 16, 4, 31);
  const MLPTrainConfig cfg = desk_config(3);
  const TrainReport r = train_mlp(train, val, cfg, compute_class_weights(train.labels.counts()));
  EXPECT_GE(macro_f1(val.labels, predict(r.best_params, val.features.matrix()).classes).macro, 0.95);
}

TEST(BaselineHead, AffineArchitecture) {
  const Dataset d = generate_synthetic({5, 5, 5}, 7, 2, 1);
  const TrainReport r = baseline_head(d, d, small_config(1));
  EXPECT_EQ(r.best_params.layers(), 1u);
  EXPECT_EQ(r.best_params.parameter_count(), 7u * 3u + 3u);
}

TEST(BaselineHead, SeparableDataReachesHighF1) {
  const Dataset train = generate_synthetic({60, 40, 20}, 16, 4, 32);
  const Dataset val = generate_synthetic({30, 20, 10}, 16, 4, 33);
  const MLPTrainConfig cfg = desk_config(4);
  const TrainReport r = baseline_head(train, val, cfg, compute_class_weights(train.labels.counts()));
  EXPECT_GE(macro_f1(val.labels, predict(r.best_params, val.features.matrix()).classes).macro, 0.95);
}

TEST(BaselineHead, DeepNetworkBeatsLinearHeadOnXor) {
  const Dataset train = generate_xor({80, 60, 60}, 8, 40);
  const Dataset val = generate_xor({40, 30, 30}, 8, 41);
  const MLPTrainConfig cfg = desk_config(5);
  const auto w = compute_class_weights(train.labels.counts());
  const double deep = macro_f1(val.labels, predict(train_mlp(train, val, cfg, w).best_params,
                                                   val.features.matrix()).classes).macro;
  const double linear = macro_f1(val.labels, predict(baseline_head(train, val, cfg, w).best_params,
                                                     val.features.matrix()).classes).macro;
  EXPECT_GE(deep - linear, 0.1) << "deep " << deep << " linear " << linear;
}

TEST(MlpBundle, RoundTripAtStoragePrecision) {
  const MLPParams p = random_params({4, 6, 3}, 9);
  const std::filesystem::path path = std::filesystem::temp_directory_path() / "vitsel_mlp_bundle.tnsr";
  save_bundle(path, mlp_to_bundle(p));
  const MLPParams q = mlp_from_bundle(load_bundle(path));
  ASSERT_EQ(q.sizes, p.sizes);
  for (std::size_t k = 0; k < p.layers(); ++k) {
    EXPECT_EQ(q.weights[k], p.weights[k].cast<float>().cast<double>());
    EXPECT_EQ(q.biases[k], p.biases[k].cast<float>().cast<double>());
  }
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".manifest");
}

}  // namespace
}  // namespace vitsel
