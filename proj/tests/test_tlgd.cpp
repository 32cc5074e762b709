#include "dlc/errors.hpp"
#include "dlc/tlgd.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

using namespace dlc;
using namespace dlc::tlgd;

namespace {

// Embedded level-1 population of the two-patch example: 4 clusters, 2 positions,
// 8 equally likely outcomes.
Moments m1_moments() {
  Moments mom({+1, -1}, 4, 2);
  for (std::size_t a : {0u, 1u}) {
    for (std::size_t b : {2u, 3u}) {
      mom.add_onehot({a, b}, 0, 0.125);
      mom.add_onehot({b, a}, 1, 0.125);
    }
  }
  return mom;
}

TwoLayerNet net_with(const Eigen::MatrixXd& K, const Eigen::MatrixXd& W) {
  TwoLayerNet net;
  net.K = K;
  net.W = {W};
  return net;
}

}  // namespace

TEST_CASE("forward and loss") {
  Eigen::MatrixXd W(2, 2);
  W << 1, 2, 3, 4;
  const auto net = net_with(Eigen::MatrixXd::Identity(2, 2), W);
  const Eigen::MatrixXd X = Eigen::MatrixXd::Identity(2, 2);
  CHECK(forward(net, X) == 5.0);
  CHECK(loss(net, X, +1) == -5.0);
  CHECK(loss(net, X, -1) == 5.0);
  CHECK_THROWS_AS(loss(net, X, 0), Error);
  CHECK_THROWS_AS(forward(net, Eigen::MatrixXd::Identity(3, 2)), Error);
  CHECK_THROWS_AS(forward(net, Eigen::MatrixXd::Identity(2, 3)), Error);
}

TEST_CASE("multi-class scores and loss") {
  TwoLayerNet net;
  net.K = Eigen::MatrixXd::Identity(2, 2);
  net.W = {Eigen::MatrixXd::Constant(2, 1, 1.0), Eigen::MatrixXd::Constant(2, 1, 2.0),
           Eigen::MatrixXd::Constant(2, 1, 4.0)};
  const Eigen::MatrixXd X = Eigen::MatrixXd::Constant(2, 1, 1.0);
  const auto scores = forward_scores(net, X);
  CHECK(scores == Eigen::Vector3d(2, 4, 8));
  CHECK(loss_multiclass(net, X, 2) == doctest::Approx(-8.0 + 3.0));
  CHECK_THROWS_AS(loss_multiclass(net, X, 3), Error);
}

TEST_CASE("init draws kernels on a fixed sphere and standard normal W") {
  Rng rng(1);
  const auto net = init(7, 25, 2, 1, 0.1, rng);
  REQUIRE(net.K.rows() == 7);
  REQUIRE(net.K.cols() == 25);
  for (Eigen::Index i = 0; i < net.K.cols(); ++i) CHECK(net.K.col(i).norm() == doctest::Approx(0.01).epsilon(1e-12));

  const auto big = init(1, 100, 1000, 1, 0.1, rng);
  const auto& W = big.W.front();
  const double mean = W.mean();
  const double var = (W.array() - mean).square().mean();
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.02);

  Rng a(5), b(5);
  CHECK(init(3, 4, 2, 3, 0.1, a).W[2] == init(3, 4, 2, 3, 0.1, b).W[2]);
}

TEST_CASE("gradient of the two-patch example") {
  const auto mom = m1_moments();
  CHECK(mom.total_weight == doctest::Approx(1.0));
  Eigen::MatrixXd W(1, 2);
  W << 1, 0;
  const auto net = net_with(Eigen::MatrixXd::Zero(4, 1), W);
  const auto G = grad_K(net, mom);
  CHECK(G(0, 0) == doctest::Approx(-0.25));
  CHECK(G(1, 0) == doctest::Approx(-0.25));
  CHECK(G(2, 0) == doctest::Approx(0.25));
  CHECK(G(3, 0) == doctest::Approx(0.25));

  auto shifted = net;
  shifted.K(0, 0) = 2.0;
  CHECK(population_loss(shifted, mom) == doctest::Approx(-0.5));
  CHECK(grad_K(shifted, mom) == G);

  const auto zero = net_with(Eigen::MatrixXd::Zero(4, 1), Eigen::MatrixXd::Zero(1, 2));
  CHECK(grad_K(zero, mom).isZero(0.0));
}

TEST_CASE("gradient of a single example is -y X W^T") {
  Rng rng(2);
  const auto net = init(3, 2, 2, 1, 0.1, rng);
  Eigen::MatrixXd X(3, 2);
  X << 1, 0, 0, 0, 0, 1;
  Moments mom({+1, -1}, 3, 2);
  mom.add(X, 1, 1.0);
  const Eigen::MatrixXd expected = X * net.W.front().transpose();
  CHECK((grad_K(net, mom) - expected).norm() < 1e-14);
}

TEST_CASE("train: closed form under a fixed gradient") {
  const auto mom = m1_moments();
  TrainConfig cfg;
  cfg.eta = 0.01;
  cfg.T = 25;
  cfg.n = 3;
  cfg.seed = 4;
  cfg.keep_trace = true;
  const auto res = train(cfg, 4, 2, 1, mom);
  const auto G = grad_K(res.net, mom);
  CHECK((res.net.K - (res.K0 - cfg.eta * cfg.T * G)).norm() < 1e-12);
  REQUIRE(res.trace.size() == 26);
  CHECK(res.trace.front() == res.K0);
  REQUIRE(res.metrics.size() == 26);
  for (const auto& m : res.metrics) {
    REQUIRE(m.loss.has_value());
    CHECK(*m.loss == doctest::Approx(res.trace[static_cast<std::size_t>(m.step)].cwiseProduct(G).sum()));
  }

  // One manual step with W = (1, 0) moves K(0, 0) by +eta / 4.
  Eigen::MatrixXd W(1, 2);
  W << 1, 0;
  auto net = net_with(Eigen::MatrixXd::Zero(4, 1), W);
  for (int t = 0; t < 100; ++t) net.K -= 0.01 * grad_K(net, mom);
  CHECK(net.K(0, 0) == doctest::Approx(0.25));
}

TEST_CASE("train: T = 0 and eta = 0 leave K0 unchanged") {
  const auto mom = m1_moments();
  TrainConfig cfg;
  cfg.n = 2;
  cfg.T = 0;
  CHECK(train(cfg, 4, 2, 1, mom).net.K == train(cfg, 4, 2, 1, mom).K0);
  cfg.T = 10;
  cfg.eta = 0.0;
  const auto frozen = train(cfg, 4, 2, 1, mom);
  CHECK(frozen.net.K == frozen.K0);
  cfg.eta = -1.0;
  CHECK_THROWS_AS(train(cfg, 4, 2, 1, mom), Error);
}

TEST_CASE("train: empirical mode calls the sampler once per step") {
  int calls = 0;
  BatchSampler sampler = [&](std::size_t, Rng&) {
    ++calls;
    auto mom = m1_moments();
    return mom;
  };
  TrainConfig cfg;
  cfg.n = 2;
  cfg.T = 7;
  cfg.mode = GradientMode::Empirical;
  train(cfg, 4, 2, 1, sampler);
  CHECK(calls == 7);

  CHECK_THROWS_AS(train(cfg, 4, 2, 1, m1_moments()), Error);
  cfg.mode = GradientMode::ExactPopulation;
  CHECK_THROWS_AS(train(cfg, 4, 2, 1, sampler), Error);
}

TEST_CASE("embedding gaps") {
  ClassProbes probes;
  probes.groups = {{Eigen::Vector2d(0, 0), Eigen::Vector2d(0.1, 0)}, {Eigen::Vector2d(1, 0)}};
  const auto gaps = embedding_gaps(Eigen::MatrixXd::Identity(2, 2), probes);
  CHECK(gaps.max_within == doctest::Approx(0.1));
  CHECK(gaps.min_cross == doctest::Approx(0.9));
}

TEST_CASE("hyperparameters") {
  const auto hp = hyperparams(std::numbers::pi, std::sqrt(2.0) / 2.0, 2, 2, 0.1 * std::sqrt(2.0), 0.1, 2, 0.01);
  CHECK(hp.sigma == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(hp.n_min == 27);
  CHECK(hp.T_min == 81);

  CHECK(smallest_integer_above(2.0) == 3);
  CHECK(smallest_integer_above(2.5) == 3);
  CHECK(smallest_integer_above(2.9999999999999) == 4);
  CHECK(smallest_integer_above(-0.5) == 0);

  CHECK_THROWS_AS(hyperparams(0.0, 1.0, 2, 2, 0.1, 0.1, 2, 0.01), Error);
  try {
    hyperparams(0.0, 1.0, 2, 2, 0.1, 0.1, 2, 0.01);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Degenerate);
  }
}

TEST_CASE("checkpoint and metrics serialization") {
  Rng rng(6);
  const auto net = init(5, 3, 2, 2, 0.1, rng);
  TrainConfig cfg;
  cfg.eta = 0.125;
  cfg.T = 9;
  cfg.n = 3;
  cfg.seed = 77;
  TrainConfig back_cfg;
  const auto back = checkpoint_from_json(checkpoint_to_json(net, cfg), &back_cfg);
  CHECK(back.K == net.K);
  REQUIRE(back.W.size() == 2);
  CHECK(back.W[1] == net.W[1]);
  CHECK(back_cfg.T == 9);
  CHECK(back_cfg.seed == 77);
  CHECK(back_cfg.eta == 0.125);

  const auto path = std::filesystem::temp_directory_path() / "dlc_test_tlgd_ckpt.json";
  save_checkpoint(net, cfg, path);
  CHECK(load_checkpoint(path).K == net.K);
  std::filesystem::remove(path);

  std::vector<StepMetrics> ms(3);
  for (int i = 0; i < 3; ++i) {
    ms[static_cast<std::size_t>(i)].step = i;
    ms[static_cast<std::size_t>(i)].loss = -0.5 * i;
  }
  ms[2].gaps = Gaps{0.1, 0.9};
  std::istringstream lines(metrics_jsonl(ms));
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    const auto rec = nlohmann::json::parse(line);
    CHECK(rec.at("step") == count);
    ++count;
  }
  CHECK(count == 3);

  const Eigen::MatrixXd M = Eigen::MatrixXd::Random(3, 4);
  CHECK(matrix_from_json(matrix_to_json(M)) == M);
}
