#include "dlc/errors.hpp"
#include "dlc/oracle.hpp"
#include "dlc/suites.hpp"

#include <doctest.h>

#include <cmath>

using namespace dlc;
using namespace dlc::oracle;

namespace {

tlgd::TwoLayerNet m1_net(std::uint64_t seed, std::size_t n = 3) {
  tlgd::Rng rng(seed);
  return tlgd::init(4, n, 2, 1, 0.1, rng);
}

}  // namespace

TEST_CASE("embedded population of the two-patch example") {
  const auto pop = embedded_population(hiergen::build_m1_spec(), 0);
  CHECK(pop.ell == 4);
  CHECK(pop.width == 2);
  CHECK(pop.outcomes.size() == 8);
  double total = 0.0;
  for (const auto& o : pop.outcomes) total += o.probability;
  CHECK(std::abs(total - 1.0) <= 1e-12);
  CHECK_THROWS_AS(embedded_population(hiergen::build_digits_spec(), 1), EnumerationTooLarge);
}

TEST_CASE("exact population loss") {
  const auto pop = embedded_population(hiergen::build_m1_spec(), 0);
  tlgd::TwoLayerNet net;
  net.K = Eigen::MatrixXd::Zero(4, 1);
  Eigen::MatrixXd W(1, 2);
  W << 1, 0;
  net.W = {W};
  CHECK(population_loss_exact(pop, net) == 0.0);
  net.K(0, 0) = 0.8;
  CHECK(population_loss_exact(pop, net) == doctest::Approx(-0.2));
  CHECK(population_loss_exact(pop, net) == doctest::Approx(tlgd::population_loss(net, pop.moments())));
  net.K *= 2.0;
  CHECK(population_loss_exact(pop, net) == doctest::Approx(-0.4));
}

TEST_CASE("finite differences agree with the analytic gradient") {
  const auto pop = embedded_population(hiergen::build_m1_spec(), 0);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto net = m1_net(seed);
    const auto fd = finite_diff_grad(pop, net, 1e-5);
    CHECK((fd - tlgd::grad_K(net, pop.moments())).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(check_finite_diff(hiergen::build_m1_spec(), 0, net).passed);
  }
  auto zero = m1_net(4);
  zero.W.front().setZero();
  CHECK(finite_diff_grad(pop, zero, 1e-5).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("lemma 1 and lemma 2 on the two-patch example") {
  const auto m1 = hiergen::build_m1_spec();
  const auto r = check_lemma1(m1, 0, 0, 0);
  CHECK(r.passed);
  const auto values = r.measured.at("values");
  CHECK(values[0].get<double>() == doctest::Approx(-0.25));
  CHECK(values[1].get<double>() == doctest::Approx(0.25));
  CHECK(check_lemma1(m1, 0, 1, 1).passed);
  CHECK(check_lemma2(m1, 0, m1_net(5)).passed);

  for (std::uint64_t seed : {1u, 2u}) {
    hiergen::Rng rng(seed);
    const auto spec = hiergen::random_binary_spec({}, rng);
    for (int level = 0; level < spec.k; ++level) {
      for (int c = 0; c < static_cast<int>(spec.num_classes(level)); ++c) {
        CHECK(check_lemma1(spec, level, c, 0).passed);
      }
    }
  }
}

TEST_CASE("corollary 1: gaps are constant along the trace") {
  const auto m1 = hiergen::build_m1_spec();
  CHECK(suites::corollary1_report(m1).passed);
  CHECK_FALSE(suites::corollary1_report(m1, true).passed);

  const auto pop = embedded_population(m1, 0);
  tlgd::TrainConfig cfg;
  cfg.eta = 0.0;
  cfg.T = 5;
  cfg.n = 3;
  cfg.keep_trace = true;
  const auto frozen = tlgd::train(cfg, pop.ell, pop.width, 1, pop.moments());
  CHECK(check_corollary1(frozen.trace, class_probes(m1, 0)).passed);
}

TEST_CASE("theorem 1 on the two-patch example") {
  const auto m1 = hiergen::build_m1_spec();
  Theorem1Config cfg;
  cfg.n = 27;
  cfg.T = 81;
  cfg.sigma = 0.1;
  cfg.eta = 0.01;
  const auto r = check_theorem1(m1, cfg);
  CHECK(r.asserted);
  CHECK(r.passed);
  CHECK(r.expected.at("clause2_trials_at_least") == 42);

  cfg.n = 1;
  CHECK_FALSE(check_theorem1(m1, cfg).asserted);

  cfg.n = 27;
  cfg.T = 0;
  cfg.force_assert = true;
  const auto untrained = check_theorem1(m1, cfg);
  CHECK(untrained.asserted);
  CHECK_FALSE(untrained.passed);
}

TEST_CASE("lemma 3 and lemma 4 frequencies") {
  const auto m1 = hiergen::build_m1_spec();
  CHECK(check_lemma3(m1, {0, 0}, {0, 1}, 2000, 1).passed);
  CHECK(check_lemma4(m1, {0, 0}, {0, 1}, 2000, 1).passed);
  CHECK(check_lemma3(m1, {0, 0}, {0, 0}, 2000, 1).passed);
  CHECK(check_lemma4(m1, {0, 0}, {0, 0}, 2000, 1).passed);

  // Orthogonal vectors: P(|w.v| > ||v|| for both, signs differ) ~ 0.05 < 0.115.
  const Eigen::Vector2d e1(1, 0), e2(0, 1);
  const auto strict = check_lemma4_vectors(e1, e2, 20000, 3, 1.0);
  CHECK_FALSE(strict.passed);
  CHECK(strict.measured.at("frequency").get<double>() == doctest::Approx(0.0503).epsilon(0.1));
  CHECK(check_lemma4_vectors(e1, e2, 20000, 3, 0.5).passed);

  CHECK_THROWS_AS(check_lemma3_vectors(e1, Eigen::Vector2d::Zero(), 10, 1), Error);
}

TEST_CASE("latent recovery") {
  const auto m1 = hiergen::build_m1_spec();
  const auto train = hiergen::sample_dataset(m1, 20000, 1);
  const auto test = hiergen::sample_dataset(m1, 200, 2);
  const auto params = suites::deep_params(suites::theory_params(m1), 1);
  const auto model = pipeline::train_deep(train, pipeline::shape_of(m1), params);
  CHECK(latent_recovery(model, test, 0).passed);
  CHECK(latent_recovery(model, test, 1).passed);

  // With a huge radius every level-1 patch falls into one cluster.
  auto coarse = params;
  coarse.gamma = 100.0;
  const auto blind = pipeline::train_deep(train, pipeline::shape_of(m1), coarse);
  CHECK_FALSE(latent_recovery(blind, test, 1).passed);

  const std::vector<hiergen::Example> one(3, test.front());
  const auto vacuous = latent_recovery(model, one, 0);
  CHECK(vacuous.note.find("vacuous") != std::string::npos);

  auto stripped = test;
  for (auto& e : stripped) e.latent.clear();
  CHECK_THROWS_AS(latent_recovery(model, stripped, 0), Error);
}
