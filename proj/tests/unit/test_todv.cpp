#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "utilgen/core/error.hpp"
#include "utilgen/todv/todv.hpp"

using namespace utilgen;
using namespace utilgen::todv;
using classifier::ClassifierState;
using testing::central_difference;
using testing::relative_error;

namespace {

ClassifierState small_classifier(std::uint64_t seed) {
  Rng rng(seed);
  return ClassifierState{"tiny", nn::Mlp({2, 6, 3}, nn::Activation::kTanh, rng)};
}

struct Batch {
  Eigen::MatrixXd x;
  std::vector<int> y;
};

Batch random_batch(int n, std::uint64_t seed) {
  Rng rng(seed);
  Batch b{rng.normal_matrix(2, n) * 1.5, {}};
  for (int i = 0; i < n; ++i) b.y.push_back(static_cast<int>(rng.index(3)));
  return b;
}

WeightNetParams random_phi(int hidden, std::uint64_t seed) {
  Rng rng(seed);
  WeightNetParams phi = WeightNetParams::zeros(hidden);
  phi.set_flat(rng.normal_vector(3 * hidden + 1));
  return phi;
}

}  // namespace

TEST_CASE("zero weight net scores every loss at one half") {
  const auto phi = WeightNetParams::zeros(100);
  const Eigen::VectorXd w = predict_weights(phi, Eigen::VectorXd::LinSpaced(7, 0.0, 30.0));
  CHECK(w.isApproxToConstant(0.5));
  CHECK(WeightNetParams::initial(100, 3).hidden() == 100);
  CHECK(predict_weights(WeightNetParams::initial(100, 3), Eigen::VectorXd::LinSpaced(5, 0, 4)).isApproxToConstant(0.5));
}

TEST_CASE("weights lie in (0,1), batch equals elementwise, bad losses rejected") {
  const auto phi = random_phi(10, 1);
  const Eigen::VectorXd losses = Eigen::VectorXd::LinSpaced(50, 0.0, 20.0);
  const Eigen::VectorXd w = predict_weights(phi, losses);
  for (Eigen::Index i = 0; i < losses.size(); ++i) {
    CHECK(w[i] > 0.0);
    CHECK(w[i] < 1.0);
    CHECK(w[i] == predict_weights(phi, losses.segment(i, 1))[0]);
  }
  Eigen::VectorXd bad(2);
  bad << 1.0, -0.1;
  CHECK_THROWS_AS(predict_weights(phi, bad), ValidationError);
  bad << 1.0, std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(predict_weights(phi, bad), ValidationError);
}

TEST_CASE("weight net gradient matches finite differences") {
  const auto phi = random_phi(6, 2);
  Rng rng(3);
  Eigen::VectorXd losses(9), upstream(9);
  for (int i = 0; i < 9; ++i) {
    losses[i] = rng.uniform(0.05, 4.0);
    upstream[i] = rng.normal();
  }
  auto f = [&](const Eigen::VectorXd& p) {
    WeightNetParams q = phi;
    q.set_flat(p);
    return upstream.dot(predict_weights(q, losses));
  };
  CHECK(relative_error(weight_net_gradient(phi, losses, upstream), central_difference(f, phi.flat())) < 1e-7);
}

TEST_CASE("virtual step equals a gradient step on the frozen-weight objective") {
  const auto theta = small_classifier(4);
  const auto phi = random_phi(5, 5);
  const auto batch = random_batch(10, 6);
  const double lr = 0.3;

  const auto stepped = virtual_classifier_step(theta, phi, batch.x, batch.y, lr);
  const Eigen::VectorXd w = predict_weights(phi, classifier::per_sample_loss(theta, batch.x, batch.y));
  auto objective = [&](const Eigen::VectorXd& p) {
    ClassifierState c = theta;
    c.net.set_flat(p);
    return w.dot(classifier::per_sample_loss(c, batch.x, batch.y)) / 10.0;
  };
  const Eigen::VectorXd expected = theta.net.flat() - lr * central_difference(objective, theta.net.flat());
  CHECK(relative_error(stepped.net.flat(), expected) < 1e-8);

  CHECK(virtual_classifier_step(theta, phi, batch.x, batch.y, 0.0).net == theta.net);

  // A strongly negative output bias drives every weight to zero in floating point.
  WeightNetParams off = WeightNetParams::zeros(5);
  off.b2 = -800.0;
  CHECK(virtual_classifier_step(theta, off, batch.x, batch.y, lr).net == theta.net);
}

TEST_CASE("meta-gradient matches central differences through the lookahead") {
  // 45 classifier parameters and 25 weight-net parameters.
  const auto theta = small_classifier(7);
  REQUIRE(theta.net.num_params() + 3 * 8 + 1 <= 100);
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    CAPTURE(seed);
    const auto phi = random_phi(8, seed);
    const auto train = random_batch(16, seed + 100);
    const auto val = random_batch(12, seed + 200);
    const double lr = 0.5;

    const auto mg = meta_gradient(phi, theta, train.x, train.y, val.x, val.y, lr);
    auto f = [&](const Eigen::VectorXd& p) {
      WeightNetParams q = phi;
      q.set_flat(p);
      return lookahead_validation_loss(q, theta, train.x, train.y, val.x, val.y, lr);
    };
    CHECK(relative_error(mg.gradient, central_difference(f, phi.flat(), 1e-5)) < 1e-4);
    CHECK(mg.validation_loss == doctest::Approx(f(phi.flat())).epsilon(1e-12));
    CHECK(mg.weights.size() == 16);
  }
}

TEST_CASE("meta update with zero gradient leaves phi unchanged") {
  ClassifierState theta = small_classifier(1);
  for (auto& layer : theta.net.layers()) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  const auto phi = random_phi(4, 2);
  // Labels spread evenly so the zero-logit gradients sum to zero on both
  // batches: the lookahead stays at theta and the validation loss is flat.
  Batch train{Eigen::MatrixXd::Zero(2, 6), {0, 1, 2, 0, 1, 2}};
  Batch val{Eigen::MatrixXd::Zero(2, 3), {0, 1, 2}};
  nn::Adam adam(3 * 4 + 1, 1e-3);
  const auto next = meta_update(phi, theta, train.x, train.y, val.x, val.y, 0.5, adam);
  CHECK(next == phi);
}

TEST_CASE("run_todv with no iterations returns its initialization") {
  const TaskSpec spec = gaussian_classes_task(3, 2, 3.0, 0.5, 0.0, 1);
  const auto bundle = make_synthetic_task(spec, {60, 30, 30}, 2);
  TodvConfig cfg;
  cfg.max_iters = 0;
  cfg.hidden = 7;
  cfg.seed = 9;
  const auto r = run_todv(bundle, LabeledDataset(3, 2, Provenance::kSynthetic), cfg);
  CHECK(r.phi == WeightNetParams::initial(7, 9));
  CHECK(r.classifier.net == classifier::make_classifier("mlp-small", 2, 3, 9).net);
  CHECK(r.log.empty());

  SplitBundle empty_val = bundle;
  empty_val.validation = LabeledDataset(3, 2, Provenance::kValidation);
  CHECK_THROWS_AS(run_todv(empty_val, LabeledDataset(3, 2, Provenance::kSynthetic), cfg), ConfigError);
}

TEST_CASE("with a frozen weight net, doubling the step size reproduces unit-weight training") {
  const TaskSpec spec = gaussian_classes_task(3, 2, 3.0, 0.7, 0.0, 4);
  const auto bundle = make_synthetic_task(spec, {50, 20, 20}, 5);
  TodvConfig cfg;
  cfg.max_iters = 12;
  cfg.hidden = 4;
  cfg.train_batch = 16;
  cfg.val_batch = 8;
  cfg.meta_lr = 0.0;
  cfg.weight_decay = 0.0;
  cfg.classifier_lr = 0.2;
  cfg.seed = 3;
  const auto r = run_todv(bundle, LabeledDataset(3, 2, Provenance::kSynthetic), cfg);
  CHECK(r.phi == WeightNetParams::initial(4, 3));

  // Oracle: the same batch order with unit weights and half the step size.
  ClassifierState f = classifier::make_classifier("mlp-small", 2, 3, 3);
  const Eigen::MatrixXd x = bundle.real_train.feature_matrix();
  const auto y = bundle.real_train.labels();
  Rng order_rng(3, "todv/train_batches");
  nn::MomentumSgd opt(f.net.num_params(), cfg.momentum, 0.0);
  Eigen::VectorXd params = f.net.flat();
  auto order = order_rng.permutation(50);
  std::size_t cursor = 0;
  for (int it = 0; it < 12; ++it) {
    if (cursor + 16 > 50) {
      order = order_rng.permutation(50);
      cursor = 0;
    }
    Eigen::MatrixXd bx(2, 16);
    std::vector<int> by(16);
    for (int i = 0; i < 16; ++i) {
      bx.col(i) = x.col(static_cast<Eigen::Index>(order[cursor + static_cast<std::size_t>(i)]));
      by[static_cast<std::size_t>(i)] = y[order[cursor + static_cast<std::size_t>(i)]];
    }
    cursor += 16;
    const auto g = classifier::weighted_loss_gradient(f, bx, by, Eigen::VectorXd::Ones(16));
    opt.step(params, f.net.flatten(g), 0.1);
    f.net.set_flat(params);
  }
  CHECK(relative_error(r.classifier.net.flat(), f.net.flat()) < 1e-12);
}

TEST_CASE("weight net checkpoints round-trip") {
  testing::TempDir dir("weight_net");
  const auto phi = random_phi(5, 8);
  save_weight_net(dir.path() / "phi.json", phi, "h");
  CHECK(load_weight_net(dir.path() / "phi.json") == phi);
}

TEST_CASE("todv config rejects non-positive sizes") {
  TodvConfig cfg;
  cfg.hidden = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TodvConfig{};
  cfg.classifier_lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
