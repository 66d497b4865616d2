#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "support.hpp"
#include "utilgen/analysis/analysis.hpp"
#include "utilgen/core/error.hpp"

using namespace utilgen;
using namespace utilgen::analysis;

namespace {

// Brute-force average ranks: position among sorted values, ties averaged.
Eigen::VectorXd average_ranks(const Eigen::VectorXd& v) {
  Eigen::VectorXd r(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    double below = 0, equal = 0;
    for (Eigen::Index j = 0; j < v.size(); ++j) {
      if (v[j] < v[i]) ++below;
      if (v[j] == v[i]) ++equal;
    }
    r[i] = below + (equal + 1) / 2.0;
  }
  return r;
}

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::VectorXd x = a.array() - a.mean();
  const Eigen::VectorXd y = b.array() - b.mean();
  return x.dot(y) / (x.norm() * y.norm());
}

struct Problem {
  Eigen::MatrixXd x;
  std::vector<int> y;
};

Problem blobs(int n, int dim, double spread, std::uint64_t seed) {
  Rng rng(seed);
  Problem p{Eigen::MatrixXd(dim, n), {}};
  for (int i = 0; i < n; ++i) {
    const int c = i % 3;
    Eigen::VectorXd center = Eigen::VectorXd::Zero(dim);
    center[c % dim] = 1.5;
    p.x.col(i) = center + spread * rng.normal_vector(dim);
    p.y.push_back(c);
  }
  return p;
}

}  // namespace

TEST_CASE("histograms bin every value and clamp outliers to the end bins") {
  Eigen::VectorXd v(7);
  v << -1.0, 0.0, 0.1, 0.5, 0.99, 1.0, 3.0;
  const auto h = make_histogram(v, 4, 0.0, 1.0);
  CHECK(h.counts == std::vector<long>{3, 0, 1, 3});
  CHECK(h.total() == 7);
  CHECK(h.mean == doctest::Approx(v.mean()));
  CHECK(h.min == -1.0);
  CHECK(h.max == 3.0);
  CHECK(make_histogram(Eigen::VectorXd(0), 5, 0, 1).total() == 0);
}

TEST_CASE("spearman matches a brute-force rank oracle, ties included") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd a(30), b(30);
    for (int i = 0; i < 30; ++i) {
      a[i] = std::round(rng.normal() * 2.0);  // heavy ties
      b[i] = a[i] + rng.normal();
    }
    CHECK(spearman(a, b) == doctest::Approx(pearson(average_ranks(a), average_ranks(b))).epsilon(1e-12));
  }
  const Eigen::VectorXd up = Eigen::VectorXd::LinSpaced(10, 0, 9);
  CHECK(spearman(up, up.array().exp().matrix()) == doctest::Approx(1.0));
  CHECK(spearman(up, -up) == doctest::Approx(-1.0));
}

TEST_CASE("the probe converges to a stationary point") {
  const auto p = blobs(90, 3, 0.8, 2);
  ProbeConfig cfg;
  const Eigen::MatrixXd in = probe_inputs(p.x);
  CHECK(in.rows() == 4);
  CHECK(in.row(3).isOnes());
  const auto probe = fit_probe(in, p.y, 3, cfg);
  CHECK(probe.iterations < cfg.max_newton_iters);

  // Gradient of the objective at the fit, assembled independently.
  Eigen::MatrixXd g = cfg.regularization * probe.weight;
  for (Eigen::Index i = 0; i < in.cols(); ++i) {
    const Eigen::VectorXd z = probe.weight * in.col(i);
    Eigen::VectorXd s = (z.array() - z.maxCoeff()).exp();
    s /= s.sum();
    s[p.y[static_cast<std::size_t>(i)]] -= 1.0;
    g += s * in.col(i).transpose() / static_cast<double>(in.cols());
  }
  CHECK(g.cwiseAbs().maxCoeff() < 1e-9);

  const auto warm = fit_probe(in, p.y, 3, cfg, &probe);
  CHECK(warm.iterations <= 1);
}

TEST_CASE("zero regularization leaves the softmax Hessian singular") {
  const auto p = blobs(30, 2, 0.5, 3);
  ProbeConfig cfg;
  cfg.regularization = 0.0;
  CHECK_THROWS_AS(influence_scores(p.x, p.y, p.x, p.y, 3, cfg), NumericalError);
}

TEST_CASE("influence ranks agree with exact leave-one-out on a 200-sample problem") {
  const auto train = blobs(200, 3, 1.0, 4);
  const auto test = blobs(150, 3, 1.0, 5);
  ProbeConfig cfg;
  const auto report = influence_scores(train.x, train.y, test.x, test.y, 3, cfg);
  const Eigen::VectorXd loo = loo_oracle(train.x, train.y, test.x, test.y, 3, cfg);
  CHECK(spearman(report.scores, loo) >= 0.9);
  // Magnitudes: removing one sample moves the loss by about score / N.
  CHECK(testing::relative_error(report.scores / 200.0, loo) < 0.2);
  CHECK(report.positive_fraction >= 0.0);
  CHECK(report.positive_fraction <= 1.0);
  CHECK(report.histogram.total() == 200);
  CHECK(loo == loo_oracle(train.x, train.y, test.x, test.y, 3, cfg));
}

TEST_CASE("a training point that is the whole test set helps") {
  const auto train = blobs(60, 2, 1.2, 6);
  for (int i : {0, 17, 41}) {
    const Eigen::MatrixXd point = train.x.col(i);
    const auto r = influence_scores(train.x, train.y, point, {train.y[static_cast<std::size_t>(i)]}, 3, ProbeConfig{});
    CHECK(r.scores[i] > 0.0);
  }
}

TEST_CASE("removing the only example of a class hurts that class") {
  auto train = blobs(40, 3, 0.6, 7);
  // Relabel so class 2 keeps exactly one member.
  int kept = -1;
  for (std::size_t i = 0; i < train.y.size(); ++i) {
    if (train.y[i] != 2) continue;
    if (kept < 0) kept = static_cast<int>(i);
    else train.y[i] = 0;
  }
  const auto test = blobs(30, 3, 0.6, 8);
  std::vector<std::size_t> twos;
  for (std::size_t i = 0; i < test.y.size(); ++i)
    if (test.y[i] == 2) twos.push_back(i);
  Eigen::MatrixXd tx(3, static_cast<Eigen::Index>(twos.size()));
  for (std::size_t i = 0; i < twos.size(); ++i) tx.col(static_cast<Eigen::Index>(i)) = test.x.col(static_cast<Eigen::Index>(twos[i]));
  const Eigen::VectorXd loo = loo_oracle(train.x, train.y, tx, std::vector<int>(twos.size(), 2), 3, ProbeConfig{});
  CHECK(loo[kept] > 0.0);
}

TEST_CASE("leave-one-out refuses oversized problems") {
  const auto big = blobs(static_cast<int>(kLooMaxSamples) + 1, 2, 1.0, 9);
  CHECK_THROWS(loo_oracle(big.x, big.y, big.x.leftCols(3), {0, 1, 2}, 3, ProbeConfig{}));
}

TEST_CASE("intra-class diversity follows cosine geometry") {
  Eigen::MatrixXd f(2, 7);
  f << 1, 2, 1, 0, 1, -1, 5,
       0, 0, 0, 3, 1, -1, 5;
  // class 0: parallel; class 1: 45 degrees apart; classes 2 and 3: one sample each.
  const std::vector<int> y{0, 0, 0, 1, 1, 2, 3};
  const auto r = intra_class_diversity(f, y, 4);
  CHECK(r.per_class[0] == doctest::Approx(0.0));
  CHECK(r.per_class[1] == doctest::Approx(1.0 - 1.0 / std::sqrt(2.0)));
  CHECK(std::isnan(r.per_class[3]));
  CHECK(r.excluded == std::vector<int>{2, 3});

  Eigen::MatrixXd g(2, 4);
  g << 1, 0, 1, -1,
       0, 1, 1, -1;
  const auto q = intra_class_diversity(g, {0, 0, 1, 1}, 2);
  CHECK(q.per_class[0] == doctest::Approx(1.0));
  CHECK(q.per_class[1] == doctest::Approx(2.0));
  CHECK(q.mean == doctest::Approx(1.5));

  Rng rng(10);
  const Eigen::MatrixXd h = rng.normal_matrix(5, 20);
  std::vector<int> labels(20);
  for (int i = 0; i < 20; ++i) labels[static_cast<std::size_t>(i)] = i % 2;
  Eigen::VectorXd scale(20);
  for (int i = 0; i < 20; ++i) scale[i] = rng.uniform(0.01, 100.0);
  const auto base = intra_class_diversity(h, labels, 2);
  const auto scaled = intra_class_diversity(h * scale.asDiagonal(), labels, 2);
  for (int c = 0; c < 2; ++c) {
    CHECK(scaled.per_class[static_cast<std::size_t>(c)] == doctest::Approx(base.per_class[static_cast<std::size_t>(c)]).epsilon(1e-12));
    CHECK(base.per_class[static_cast<std::size_t>(c)] >= 0.0);
    CHECK(base.per_class[static_cast<std::size_t>(c)] <= 2.0);
  }
}

TEST_CASE("weight histograms count every sample and repeat for identical data") {
  Rng rng(11);
  const auto scorer = classifier::make_classifier("mlp-small", 2, 3, 1);
  auto phi = todv::WeightNetParams::zeros(4);
  phi.set_flat(rng.normal_vector(13));
  LabeledDataset a(3, 2, Provenance::kSynthetic);
  for (int i = 0; i < 25; ++i) a.add(rng.normal_vector(2), i % 3);
  const auto out = weight_histogram(phi, scorer, {{"a", a}, {"again", a}}, 10);
  REQUIRE(out.size() == 2);
  CHECK(out[0].histogram.total() == 25);
  CHECK(out[0].histogram.counts == out[1].histogram.counts);
  CHECK(out[0].weights == out[1].weights);
  CHECK(out[1].name == "again");
}
