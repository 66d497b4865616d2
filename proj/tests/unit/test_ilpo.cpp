#include <cmath>

#include <Eigen/Dense>

#include "doctest.h"
#include "support.hpp"
#include "utilgen/core/error.hpp"
#include "utilgen/diffusion/ddim.hpp"
#include "utilgen/ilpo/ilpo.hpp"

using namespace utilgen;
using namespace utilgen::ilpo;
using classifier::ClassifierState;
using testing::central_difference;
using testing::relative_error;

namespace {

ClassifierState small_scorer(std::uint64_t seed) {
  Rng rng(seed);
  return ClassifierState{"tiny", nn::Mlp({2, 6, 3}, nn::Activation::kTanh, rng)};
}

todv::WeightNetParams random_phi(std::uint64_t seed) {
  Rng rng(seed);
  auto phi = todv::WeightNetParams::zeros(5);
  phi.set_flat(rng.normal_vector(16));
  return phi;
}

// J(x) = -||x - target||^2, concave with maximizer at the target.
class Quadratic final : public SampleObjective {
 public:
  explicit Quadratic(Eigen::VectorXd target) : target_(std::move(target)) {}
  Eigen::VectorXd evaluate(const Eigen::MatrixXd& x, Eigen::MatrixXd* grad) const override {
    const Eigen::MatrixXd r = x.colwise() - target_;
    if (grad) *grad = -2.0 * r;
    return -r.colwise().squaredNorm().transpose();
  }

 private:
  Eigen::VectorXd target_;
};

// Identity activations make eps affine in (x, c), so the whole sampler is
// affine in the condition for fixed noise.
diffusion::Denoiser linear_denoiser(std::uint64_t seed, int steps) {
  Rng rng(seed);
  nn::Mlp net({2 + 4 + 2, 6, 2}, nn::Activation::kIdentity, rng);
  for (auto& layer : net.layers()) layer.weight *= 0.4;
  return diffusion::Denoiser(std::move(net), rng.normal_vector(2), 2, 4, steps);
}

}  // namespace

TEST_CASE("semantic regularizer is the negative cosine to the prototype") {
  const auto f = small_scorer(1);
  Rng rng(2);
  const Eigen::VectorXd x = rng.normal_vector(2);
  const Eigen::VectorXd h = f.net.penultimate(x);
  CHECK(semantic_regularizer(x, h, f) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(semantic_regularizer(x, -h, f) == doctest::Approx(1.0).epsilon(1e-12));

  // Orthogonal prototype by Gram-Schmidt.
  Eigen::VectorXd o = rng.normal_vector(6);
  o -= o.dot(h) / h.squaredNorm() * h;
  CHECK(std::abs(semantic_regularizer(x, o, f)) < 1e-12);

  const Eigen::VectorXd e = rng.normal_vector(6);
  const double base = semantic_regularizer(x, e, f);
  CHECK(base >= -1.0);
  CHECK(base <= 1.0);
  for (double s : {1e-3, 0.5, 7.0, 1e4}) CHECK(semantic_regularizer(x, s * e, f) == doctest::Approx(base).epsilon(1e-12));

  auto dead = f;
  dead.net.layers().front().weight.setZero();
  dead.net.layers().front().bias.setZero();
  CHECK(semantic_regularizer(x, e, dead) == 0.0);
}

TEST_CASE("utility objective gradient matches finite differences") {
  const auto f = small_scorer(3);
  const auto phi = random_phi(4);
  Rng rng(5);
  const Eigen::VectorXd proto = rng.normal_vector(6);
  for (double lambda : {0.0, 0.1, 1.0}) {
    const UtilityObjective obj(phi, f, 1, proto, lambda);
    const Eigen::MatrixXd x = rng.normal_matrix(2, 4);
    Eigen::MatrixXd g;
    const Eigen::VectorXd j = obj.evaluate(x, &g);
    for (Eigen::Index i = 0; i < 4; ++i) {
      const double expected = todv::predict_weights(phi, classifier::per_sample_loss(f, x.col(i), {1}))[0] -
                              lambda * semantic_regularizer(x.col(i), proto, f);
      CHECK(j[i] == doctest::Approx(expected).epsilon(1e-12));
      auto fi = [&](const Eigen::VectorXd& v) { return obj.evaluate(v, nullptr)[0]; };
      CHECK(relative_error(g.col(i), central_difference(fi, x.col(i))) < 1e-6);
    }
  }
  CHECK_THROWS_AS(UtilityObjective(phi, f, 3, proto, 0.1), RangeError);
  CHECK_THROWS_AS(UtilityObjective(phi, f, 0, Eigen::VectorXd::Zero(4), 0.1), ValidationError);
}

TEST_CASE("prompt gradient matches finite differences on a five-step chain") {
  const auto sched = diffusion::NoiseSchedule::linear(20, 0.01, 0.3);
  const auto model = testing::random_denoiser(2, 20, 6, 16);
  const auto f = small_scorer(7);
  const auto phi = random_phi(8);
  Rng rng(9);
  const UtilityObjective obj(phi, f, 2, rng.normal_vector(6), 0.1);
  const Eigen::MatrixXd noise = rng.normal_matrix(2, 6);
  const Eigen::VectorXd cond = rng.normal_vector(3);
  Eigen::VectorXd grad;
  const double j = prompt_objective(cond, noise, model, sched, obj, 2.0, 5, &grad);
  auto fj = [&](const Eigen::VectorXd& c) { return prompt_objective(c, noise, model, sched, obj, 2.0, 5, nullptr); };
  CHECK(j == fj(cond));
  CHECK(relative_error(grad, central_difference(fj, cond)) <= 1e-3);
}

TEST_CASE("prompt ascent reaches the analytic maximizer under an affine generator") {
  const auto sched = diffusion::NoiseSchedule::linear(20, 0.01, 0.3);
  const auto model = linear_denoiser(10, 20);
  IlpoConfig cfg;
  cfg.chain_length = 5;
  cfg.prompt_lr = 0.01;
  cfg.prompt_epochs = 2000;
  cfg.draws = 16;
  cfg.seed = 11;

  // Oracle: the mean sample is M c + v with v the zero-noise output; both read
  // off the sampler directly since it is affine in c. The target is the image
  // of a known condition, so that condition is the unique maximizer.
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(2, 1);
  auto mean_sample = [&](const Eigen::VectorXd& c) {
    return Eigen::VectorXd(diffusion::ddim_sample(model, sched, zero, c, cfg.synthesis_guidance, 5).col(0));
  };
  const Eigen::VectorXd v = mean_sample(Eigen::VectorXd::Zero(2));
  Eigen::Matrix2d m;
  for (int k = 0; k < 2; ++k) m.col(k) = mean_sample(Eigen::VectorXd::Unit(2, k)) - v;
  const Eigen::Vector2d c_star(1.2, -0.8);
  const Eigen::VectorXd target = m * c_star + v;
  REQUIRE((mean_sample(c_star) - target).norm() < 1e-9);
  REQUIRE(std::abs(m.determinant()) > 1e-3);
  const Quadratic obj(target);

  PromptTrace trace;
  const PromptState start{0, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(6), 0.0};
  const auto out = optimize_prompt(start, model, sched, obj, cfg, &trace);
  // M is poorly conditioned, so the embedding itself drifts along the weak
  // direction under noisy gradients; the mean sample is what the objective sees.
  CHECK((mean_sample(out.embedding) - target).norm() < 0.025);
  REQUIRE(trace.objective.size() == 2000);
  double head = 0, tail = 0;
  for (int i = 0; i < 50; ++i) {
    head += trace.objective[static_cast<std::size_t>(i)];
    tail += trace.objective[trace.objective.size() - 1 - static_cast<std::size_t>(i)];
  }
  CHECK(tail > head);
  CHECK(trace.halvings == 0);
}

TEST_CASE("round trip at equal guidance returns the noise") {
  const auto sched = diffusion::NoiseSchedule::linear(20, 0.01, 0.3);
  Rng rng(12);
  const Eigen::MatrixXd noise = rng.normal_matrix(2, 10);
  const auto zero = testing::zero_denoiser(2, 20, 3);
  CHECK((cfg_round_trip(noise, Eigen::VectorXd::Zero(3), zero, sched, 5.5, 5.5, 20) - noise).norm() < 1e-10);

  const auto model = testing::random_denoiser(2, 20, 13);
  const Eigen::VectorXd cond = rng.normal_vector(3);
  const Eigen::MatrixXd back = cfg_round_trip(noise, cond, model, sched, 1.0, 1.0, 20, 1, 3);
  CHECK((back - noise).cwiseAbs().maxCoeff() < 1e-2);
  CHECK(back.rows() == noise.rows());
  CHECK(back.cols() == noise.cols());
}

TEST_CASE("noise refinement requires the denoise guidance to exceed the inversion guidance") {
  const auto sched = diffusion::NoiseSchedule::linear(20, 0.01, 0.3);
  const auto model = testing::random_denoiser(2, 20, 14);
  IlpoConfig cfg;
  cfg.synthesis_steps = 10;
  cfg.omega_denoise = 1.0;
  cfg.omega_invert = 1.0;
  CHECK_THROWS_AS(optimize_noise(Eigen::MatrixXd::Zero(2, 3), Eigen::VectorXd::Zero(3), model, sched, cfg), ConfigError);
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.omega_denoise = 5.5;
  cfg.omega_invert = 0.0;
  const Eigen::MatrixXd a = optimize_noise(Eigen::MatrixXd::Ones(2, 3), Eigen::VectorXd::Ones(3), model, sched, cfg);
  CHECK(a == optimize_noise(Eigen::MatrixXd::Ones(2, 3), Eigen::VectorXd::Ones(3), model, sched, cfg));
  cfg.inversion_refinements = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("high-utility generation degenerates to the baseline with both stages off") {
  const auto sched = diffusion::NoiseSchedule::linear(20, 0.01, 0.3);
  const auto model = testing::random_denoiser(2, 20, 15);
  const auto f = small_scorer(16);
  const auto phi = random_phi(17);
  Rng rng(18);
  const std::vector<diffusion::ClassToken> tokens{{0, rng.normal_vector(3)}, {1, rng.normal_vector(3)},
                                                  {2, rng.normal_vector(3)}};
  LabeledDataset few(3, 2, Provenance::kReal);
  for (int i = 0; i < 9; ++i) few.add(rng.normal_vector(2), i % 3);

  IlpoConfig cfg;
  cfg.synthesis_steps = 10;
  cfg.seed = 19;
  cfg.optimize_prompts = false;
  cfg.optimize_noise = false;
  const std::vector<int> counts{4, 0, 3};
  const auto r = generate_high_utility(tokens, counts, model, phi, f, few, sched, cfg);
  const auto base = generate_baseline(tokens, counts, model, sched, cfg.synthesis_guidance, 10, 19);
  REQUIRE(r.data.size() == 7);
  REQUIRE(base.size() == 7);
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(r.data[i].features == base[i].features);
    CHECK(r.data[i].label == base[i].label);
  }
  CHECK(r.prompts[1].embedding == tokens[1].embedding);

  cfg.optimize_prompts = true;
  cfg.optimize_noise = true;
  cfg.prompt_epochs = 3;
  cfg.chain_length = 3;
  cfg.draws = 2;
  const auto a = generate_high_utility(tokens, counts, model, phi, f, few, sched, cfg);
  const auto b = generate_high_utility(tokens, counts, model, phi, f, few, sched, cfg);
  CHECK(a.data.size() == 7);
  CHECK(a.data.count_per_class() == std::vector<std::size_t>{4, 0, 3});
  for (std::size_t i = 0; i < 7; ++i) CHECK(a.data[i].features == b.data[i].features);
  CHECK(a.traces[0].objective.size() == 3);

  const auto none = generate_high_utility(tokens, {0, 0, 0}, model, phi, f, few, sched, cfg);
  CHECK(none.data.empty());
}

TEST_CASE("class prototypes average the few-shot features") {
  const auto f = small_scorer(20);
  Rng rng(21);
  LabeledDataset few(3, 2, Provenance::kReal);
  for (int i = 0; i < 4; ++i) few.add(rng.normal_vector(2), i % 2);
  const auto protos = class_prototypes(f, few);
  REQUIRE(protos.size() == 3);
  const Eigen::VectorXd expected = 0.5 * (f.net.penultimate(few[0].features) + f.net.penultimate(few[2].features));
  CHECK((protos[0] - expected).norm() < 1e-14);
  CHECK(protos[2].norm() == 0.0);
}
