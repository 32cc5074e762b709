#include "dlc/errors.hpp"
#include "dlc/oracle.hpp"
#include "dlc/pipeline.hpp"
#include "dlc/suites.hpp"

#include <doctest.h>

#include <filesystem>
#include <random>

using namespace dlc;
using namespace dlc::pipeline;

namespace {

struct TrainedM1 {
  hiergen::HierarchySpec spec = hiergen::build_m1_spec();
  std::vector<Example> train;
  std::vector<Example> test;
  DeepModel model;
  TrainReport report;
};

const TrainedM1& trained_m1() {
  static const TrainedM1 fixture = [] {
    TrainedM1 f;
    f.train = hiergen::sample_dataset(f.spec, 20000, 1);  // enough that sample noise stays inside gamma
    f.test = hiergen::sample_dataset(f.spec, 500, 2);
    const auto params = suites::deep_params(suites::theory_params(f.spec), 1);
    f.model = train_deep(f.train, shape_of(f.spec), params, &f.report);
    return f;
  }();
  return fixture;
}

}  // namespace

TEST_CASE("m1 parameters") {
  const auto tp = suites::theory_params(hiergen::build_m1_spec());
  CHECK(tp.gamma == doctest::Approx(0.1 * std::sqrt(2.0)));
  CHECK(tp.sigma == doctest::Approx(0.1));
  CHECK(tp.n == 27);
  CHECK(tp.T == 81);
}

TEST_CASE("shapes telescope through the blocks") {
  const auto& f = trained_m1();
  REQUIRE(f.model.blocks.size() == 1);
  const auto& x = f.test.front().observed;
  const auto h1 = forward_partial(f.model, x, 0);
  CHECK(h1.rows() == 1);
  CHECK(h1.cols() == 4);
  const auto h0 = forward_partial(f.model, x, 1);
  CHECK(h0.rows() == 27);
  CHECK(h0.cols() == 2);
  CHECK_THROWS_AS(forward_partial(f.model, x, 2), Error);
  CHECK_THROWS_AS(forward_partial(f.model, std::vector<double>(3, 0.0), 0), Error);

  const auto codes = mapped_codes(f.model, x);
  REQUIRE(codes.size() == 2);
  CHECK(codes[0].size() == 2);
  CHECK(codes[1].size() == 2);
}

TEST_CASE("m1 end to end") {
  const auto& f = trained_m1();
  CHECK(f.report.levels.front().ell == 4);
  const auto eval = evaluate(f.model, f.test);
  CHECK(eval.accuracy >= 0.99);
  std::size_t total = 0;
  for (const auto& row : eval.confusion) {
    for (auto c : row) total += c;
  }
  CHECK(total == eval.count);
  CHECK(eval.lenient_patches == 0);

  for (int level = 0; level < 2; ++level) {
    const auto rec = oracle::latent_recovery(f.model, f.test, level);
    CHECK_MESSAGE(rec.passed, rec.note);
  }
}

TEST_CASE("identical examples collapse to one cluster and a constant classifier") {
  const auto spec = hiergen::build_m1_spec();
  const auto one = hiergen::sample_dataset(spec, 1, 3).front();
  const std::vector<Example> data(10, one);
  auto params = suites::deep_params(suites::theory_params(spec), 1);
  TrainReport report;
  const auto model = train_deep(data, shape_of(spec), params, &report);
  CHECK(report.levels.front().ell == 2);  // two distinct patches in the single image
  CHECK(model.top_phi.ell() <= 2);
  CHECK(model.classifier.constant);
  CHECK(predict(model, one.observed) == one.label);
}

TEST_CASE("train_cls") {
  Eigen::MatrixXd X(4, 2);
  X << 1, 0, 1, 0, 0, 1, 0, 1;
  const std::vector<int> y{1, 1, -1, -1};
  const auto cls = train_cls(X, y, {1, -1}, 0.01, 500, 1.0);
  CHECK(cls.train_error == 0.0);
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(cls.predict(X.row(i).transpose()) == y[static_cast<std::size_t>(i)]);

  // Identical features with alternating labels carry no signal.
  std::mt19937_64 rng(1);
  Eigen::MatrixXd flat = Eigen::MatrixXd::Ones(1000, 3);
  std::vector<int> coin(1000);
  for (auto& c : coin) c = (rng() & 1) ? 1 : -1;
  const auto blind = train_cls(flat, coin, {1, -1}, 0.01, 200, 1.0);
  CHECK(std::abs(blind.train_error - 0.5) <= 0.05);

  CHECK_THROWS_AS(train_cls(X, {1, 1, 1}, {1, -1}, 0.01, 10, 1.0), Error);
  CHECK_THROWS_AS(train_cls(X, {1, 1, 7, -1}, {1, -1}, 0.01, 10, 1.0), Error);
  CHECK_THROWS_AS(cls.predict(Eigen::VectorXd::Zero(3)), Error);
}

TEST_CASE("unseen patches: strict fails, lenient falls back to the nearest cluster") {
  const auto& f = trained_m1();
  auto ex = f.test.front();
  const int expected = predict(f.model, ex.observed);
  ex.observed[0] += 0.2 * (ex.observed[0] > 0 ? 1.0 : -1.0);
  if (ex.observed[0] == 0.0) ex.observed[1] += 0.2;
  try {
    predict(f.model, ex.observed);
    FAIL("expected UnseenPatch");
  } catch (const UnseenPatch& e) {
    CHECK(e.block_index() == 0);
    CHECK(e.patch_index() == 0);
  }
  CHECK(predict(f.model, ex.observed, patches::UnseenPolicy::Lenient) == expected);
  const auto eval = evaluate(f.model, {ex}, patches::UnseenPolicy::Lenient);
  CHECK(eval.lenient_patches == 1);
}

TEST_CASE("model directory round trip") {
  const auto& f = trained_m1();
  const auto dir = std::filesystem::temp_directory_path() / "dlc_test_pipeline_model";
  std::filesystem::remove_all(dir);
  save_model(f.model, dir);
  const auto back = load_model(dir);
  CHECK(back.spec_hash == f.model.spec_hash);
  REQUIRE(back.blocks.size() == 1);
  CHECK(back.blocks[0].net.K == f.model.blocks[0].net.K);
  CHECK(back.params.T == f.model.params.T);
  CHECK(back.params.max_clusters == f.model.params.max_clusters);
  for (const auto& ex : f.test) CHECK(predict(back, ex.observed) == predict(f.model, ex.observed));
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(load_model(dir), Error);
}

TEST_CASE("parameter validation") {
  DeepParams p;
  p.gamma = 0.0;
  CHECK_THROWS_AS(validate(p), Error);
  p = DeepParams{};
  p.n = 0;
  CHECK_THROWS_AS(validate(p), Error);
  p = DeepParams{};
  p.T = -1;
  CHECK_THROWS_AS(validate(p), Error);
  CHECK_NOTHROW(validate(DeepParams{}));

  const auto again = params_from_json(params_to_json(suites::deep_params(suites::theory_params(hiergen::build_m1_spec()), 9)));
  CHECK(again.n == 27);
  CHECK(again.seed == 9);
}

TEST_CASE("small digits run has a 9-pixel top") {
  const auto spec = hiergen::build_digits_spec();
  const auto data = hiergen::sample_dataset(spec, 20, 4);
  DeepParams p;
  p.gamma = 0.6;
  p.T = 5;
  p.n = 4;
  p.sigma = 0.2;
  p.seed = 2;
  const auto model = train_deep(data, shape_of(spec), p);
  REQUIRE(model.blocks.size() == 2);
  const auto top = forward_partial(model, data.front().observed, 2);
  CHECK(top.rows() == 4);
  CHECK(top.cols() == 9);
  CHECK(mapped_codes(model, data.front().observed).back().size() == 9);
}
