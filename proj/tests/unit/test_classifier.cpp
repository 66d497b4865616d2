#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "utilgen/classifier/classifier.hpp"
#include "utilgen/core/error.hpp"

using namespace utilgen;
using namespace utilgen::classifier;
using testing::central_difference;
using testing::relative_error;

namespace {

ClassifierState tiny(std::uint64_t seed) {
  Rng rng(seed);
  return ClassifierState{"tiny", nn::Mlp({2, 5, 3}, nn::Activation::kTanh, rng)};
}

LabeledDataset blobs(int n, std::uint64_t seed) {
  Rng rng(seed);
  LabeledDataset d(3, 2, Provenance::kReal);
  const Eigen::Vector2d centers[3] = {{2, 0}, {-1, 1.7}, {-1, -1.7}};
  for (int i = 0; i < n; ++i) {
    const int c = i % 3;
    d.add(centers[c] + 0.5 * rng.normal_vector(2), c);
  }
  return d;
}

}  // namespace

TEST_CASE("per-sample loss equals the log-sum-exp cross-entropy") {
  const auto f = tiny(1);
  const auto data = blobs(12, 2);
  const Eigen::VectorXd losses = per_sample_loss(f, data);
  const Eigen::MatrixXd logits = f.net.forward(data.feature_matrix());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Eigen::VectorXd z = logits.col(static_cast<Eigen::Index>(i));
    double lse = 0;
    for (Eigen::Index k = 0; k < z.size(); ++k) lse += std::exp(z[k]);
    CHECK(losses[static_cast<Eigen::Index>(i)] == doctest::Approx(std::log(lse) - z[data[i].label]).epsilon(1e-12));
    CHECK(losses[static_cast<Eigen::Index>(i)] >= 0.0);
  }
}

TEST_CASE("cross-entropy stays finite for extreme logits") {
  auto f = tiny(1);
  f.net.layers().back().weight *= 1e4;
  const auto data = blobs(9, 3);
  const Eigen::VectorXd losses = per_sample_loss(f, data);
  CHECK(losses.allFinite());
  CHECK(losses.minCoeff() >= 0.0);
}

TEST_CASE("weighted loss gradient matches finite differences") {
  const auto f = tiny(4);
  const auto data = blobs(9, 5);
  Rng rng(6);
  Eigen::VectorXd w(9);
  for (int i = 0; i < 9; ++i) w[i] = rng.uniform();
  const Eigen::MatrixXd x = data.feature_matrix();
  const auto y = data.labels();

  const auto g = weighted_loss_gradient(f, x, y, w);
  auto objective = [&](const Eigen::VectorXd& p) {
    ClassifierState c = f;
    c.net.set_flat(p);
    return w.dot(per_sample_loss(c, x, y)) / 9.0;
  };
  CHECK(relative_error(f.net.flatten(g), central_difference(objective, f.net.flat())) < 1e-7);

  const auto zero = weighted_loss_gradient(f, x, y, Eigen::VectorXd::Zero(9));
  CHECK(f.net.flatten(zero).norm() == 0.0);
}

TEST_CASE("training separates well-spaced blobs") {
  const auto train_set = blobs(300, 7);
  const auto test_set = blobs(300, 8);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 32;
  cfg.seed = 1;
  std::vector<double> trajectory;
  const auto f = train(make_classifier("mlp-small", 2, 3, 9), train_set, cfg, &trajectory);
  CHECK(evaluate(f, test_set) > 0.95);
  CHECK(trajectory.back() < trajectory.front());
  CHECK(f.architecture == "mlp-small");
  CHECK(f.hidden_width() == 64);
  CHECK(features(f, test_set.feature_matrix()).rows() == 64);
}

TEST_CASE("zero weights leave training inert except for decay") {
  const auto data = blobs(30, 1);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.weight_decay = 0.0;
  const auto start = make_classifier("mlp-small", 2, 3, 2);
  const auto after = train_weighted(start, data, Eigen::VectorXd::Zero(30), cfg);
  CHECK(after.net == start.net);
}

TEST_CASE("training rejects bad inputs") {
  const auto data = blobs(6, 1);
  TrainConfig cfg;
  const auto f = make_classifier("mlp-small", 2, 3, 2);
  CHECK_THROWS_AS(train_weighted(f, data, Eigen::VectorXd::Ones(5), cfg), ValidationError);
  CHECK(train(f, LabeledDataset(3, 2, Provenance::kReal), cfg).net == f.net);
  CHECK_THROWS_AS(evaluate(f, LabeledDataset(3, 2, Provenance::kReal)), ValidationError);
  CHECK_THROWS_AS(per_sample_loss(f, data.feature_matrix(), {0, 1, 3, 0, 1, 2}), RangeError);
  Eigen::VectorXd over = Eigen::VectorXd::Ones(6);
  over[2] = 1.5;
  CHECK_THROWS_AS(train_weighted(f, data, over, cfg), ValidationError);
  CHECK_THROWS(make_classifier("resnet", 2, 3, 1));
}

TEST_CASE("classifier checkpoints round-trip") {
  testing::TempDir dir("classifier_ckpt");
  const auto f = make_classifier("mlp-wide", 2, 4, 3);
  save_classifier(dir.path() / "f.json", f, "hash");
  const auto back = load_classifier(dir.path() / "f.json");
  CHECK(back.architecture == "mlp-wide");
  CHECK(back.net == f.net);
}

TEST_CASE("unit weights reproduce unweighted training exactly") {
  const auto data = blobs(40, 3);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.seed = 4;
  const auto start = make_classifier("mlp-small", 2, 3, 5);
  CHECK(train_weighted(start, data, Eigen::VectorXd::Ones(40), cfg).net == train(start, data, cfg).net);
}

TEST_CASE("evaluation and features behave as plain functions of the inputs") {
  auto f = tiny(2);
  const auto data = blobs(30, 4);

  // Zero weights and a bias favouring class 1: a constant predictor.
  for (auto& layer : f.net.layers()) layer.weight.setZero();
  f.net.layers().back().bias << 0.0, 1.0, 0.0;
  CHECK(evaluate(f, data) == doctest::Approx(1.0 / 3.0));

  const auto g = tiny(3);
  std::vector<std::size_t> reversed(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) reversed[i] = data.size() - 1 - i;
  CHECK(evaluate(g, data) == evaluate(g, data.subset(reversed)));

  const auto few = data.take_per_class(16).of_class(0);
  const Eigen::MatrixXd phi = features(g, few.feature_matrix());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(phi.rows());
  for (std::size_t i = 0; i < few.size(); ++i) mean += features(g, few[i]);
  mean /= static_cast<double>(few.size());
  CHECK((phi.rowwise().mean() - mean).norm() < 1e-14);
  CHECK(features(g, few[0]) == features(g, few[0]));
}

TEST_CASE("large correct margins drive the loss to zero") {
  auto f = tiny(2);
  for (auto& layer : f.net.layers()) layer.weight.setZero();
  f.net.layers().back().bias << 60.0, 0.0, 0.0;
  const Eigen::VectorXd l = per_sample_loss(f, Eigen::MatrixXd::Zero(2, 3), {0, 0, 0});
  CHECK(l.maxCoeff() < 1e-20);
}
