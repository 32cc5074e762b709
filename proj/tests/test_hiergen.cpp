#include "dlc/errors.hpp"
#include "dlc/hiergen.hpp"
#include "dlc/spec_io.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <set>

using namespace dlc;
using namespace dlc::hiergen;

namespace {

// M1 plus a third class `c` that sits at position 1 under both labels.
HierarchySpec spec_with_cancelling_class() {
  HierarchySpec spec = build_m1_spec();
  spec.name = "cancel";
  spec.class_names[0].push_back("c");
  spec.label_dists[0] = {{{0, 2}, 1.0}};
  spec.label_dists[1] = {{{1, 2}, 1.0}};
  spec.observed_patches.push_back({{5.0, 0.0}, {0.0, 5.0}});
  return spec;
}

bool has_kind(const std::vector<Violation>& report, ViolationKind kind) {
  return std::any_of(report.begin(), report.end(), [&](const Violation& v) { return v.kind == kind; });
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("dlc_test_hiergen_" + name);
}

}  // namespace

TEST_CASE("m1 mean images and analytics") {
  const auto m1 = build_m1_spec();
  REQUIRE(validate_spec(m1).empty());

  const auto va = mean_image(m1, {0, 0});
  const auto vb = mean_image(m1, {0, 1});
  CHECK(va.values == std::vector<double>{-0.5, 0.5});
  CHECK(vb.values == std::vector<double>{0.5, -0.5});

  const auto an = analytics(m1);
  REQUIRE(an.theta.has_value());
  CHECK(*an.theta == doctest::Approx(std::numbers::pi).epsilon(1e-7));
  CHECK(*an.lambda == doctest::Approx(std::sqrt(2.0) / 2.0).epsilon(1e-12));
  CHECK(an.delta_min == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK(an.max_classes == 2);
}

TEST_CASE("class present at the same position under both labels has a zero mean image") {
  const auto spec = spec_with_cancelling_class();
  REQUIRE(validate_spec(spec).empty());
  for (double v : mean_image(spec, {0, 2}).values) CHECK(v == 0.0);
  CHECK_THROWS_AS(analytics(spec), Error);
  try {
    analytics(spec);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Degenerate);
  }
}

TEST_CASE("mean image rejects unknown classes and multi-label specs") {
  CHECK_THROWS_AS(mean_image(build_m1_spec(), {0, 7}), Error);
  CHECK_THROWS_AS(mean_image(build_digits_spec(), {0, 0}), Error);
}

TEST_CASE("validation reports") {
  CHECK(validate_spec(build_digits_spec()).empty());

  auto overlap = build_m1_spec();
  overlap.observed_patches[1][0] = overlap.observed_patches[0][0];
  CHECK(has_kind(validate_spec(overlap), ViolationKind::Disjointness));

  auto unnormalized = build_m1_spec();
  unnormalized.label_dists[0][0].probability = 0.9;
  CHECK(has_kind(validate_spec(unnormalized), ViolationKind::Normalization));

  auto wrong_size = build_m1_spec();
  wrong_size.observed_patches[0].pop_back();
  CHECK(has_kind(validate_spec(wrong_size), ViolationKind::PatchSetSize));

  CHECK_THROWS_AS(require_valid(unnormalized), Error);
  Rng rng(1);
  CHECK_THROWS_AS(sample_example(unnormalized, rng), Error);
}

TEST_CASE("m1 samples respect the label layout") {
  const auto m1 = build_m1_spec();
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto ex = sample_example(m1, rng);
    REQUIRE(ex.latent.size() == 1);
    REQUIRE(ex.observed.size() == 2 * 2);
    const std::vector<int> expected = ex.label == 1 ? std::vector<int>{0, 1} : std::vector<int>{1, 0};
    CHECK(ex.latent[0] == expected);
    for (int pos = 0; pos < 2; ++pos) {
      const std::vector<double> block(ex.observed.begin() + 2 * pos, ex.observed.begin() + 2 * pos + 2);
      const auto& set = m1.observed_patches[static_cast<std::size_t>(ex.latent[0][static_cast<std::size_t>(pos)])];
      CHECK(std::find(set.begin(), set.end(), block) != set.end());
    }
  }
}

TEST_CASE("d = 1 with point-mass labels is deterministic given the label") {
  auto spec = build_m1_spec();
  spec.d = 1;
  for (auto& set : spec.observed_patches) set.resize(1);
  REQUIRE(validate_spec(spec).empty());
  std::map<int, std::vector<double>> seen;
  for (const auto& ex : sample_dataset(spec, 100, 11)) {
    auto [it, fresh] = seen.emplace(ex.label, ex.observed);
    if (!fresh) CHECK(it->second == ex.observed);
  }
  CHECK(seen.size() == 2);
}

TEST_CASE("sampling is deterministic and labels are balanced") {
  const auto m1 = build_m1_spec();
  const auto a = sample_dataset(m1, 4, 7);
  const auto b = sample_dataset(m1, 4, 7);
  REQUIRE(a.size() == 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].label == b[i].label);
    CHECK(a[i].latent == b[i].latent);
    CHECK(a[i].observed == b[i].observed);
  }

  const auto many = sample_dataset(m1, 10000, 5);
  const auto positive = std::count_if(many.begin(), many.end(), [](const Example& e) { return e.label == 1; });
  CHECK(std::abs(static_cast<double>(positive) / 10000.0 - 0.5) <= 0.02);

  CHECK_THROWS_AS(sample_dataset(m1, 0, 1), Error);
}

TEST_CASE("digits samples keep valid chains") {
  const auto digits = build_digits_spec();
  const auto data = sample_dataset(digits, 1000, 2);
  for (const auto& ex : data) {
    REQUIRE(ex.latent.size() == 2);
    REQUIRE(ex.observed.size() == 729);
    const auto& top = digits.label_dists[static_cast<std::size_t>(digits.label_index(ex.label))][0].image;
    CHECK(ex.latent[0] == top);

    const auto mid = block_table(Geometry::TwoD, 9, 9);
    for (std::size_t p = 0; p < 9; ++p) {
      Image block;
      for (auto pos : mid[p]) block.push_back(ex.latent[1][pos]);
      const auto& set = digits.latent_patches[0][static_cast<std::size_t>(ex.latent[0][p])];
      CHECK(std::find(set.begin(), set.end(), block) != set.end());
    }

    const auto low = block_table(Geometry::TwoD, 81, 9);
    for (std::size_t p = 0; p < 81; ++p) {
      RealImage block;
      for (auto pos : low[p]) block.push_back(ex.observed[pos]);
      const auto& set = digits.observed_patches[static_cast<std::size_t>(ex.latent[1][p])];
      CHECK(std::find(set.begin(), set.end(), block) != set.end());
    }
  }
}

TEST_CASE("enumeration") {
  const auto m1 = build_m1_spec();
  const auto top = enumerate_support(m1, 0);
  REQUIRE(top.size() == 2);
  for (const auto& o : top) CHECK(o.probability == doctest::Approx(0.5).epsilon(1e-15));

  const auto full = enumerate_support(m1, 1);
  REQUIRE(full.size() == 8);
  double total = 0.0;
  for (const auto& o : full) {
    CHECK(o.probability == doctest::Approx(0.125).epsilon(1e-15));
    total += o.probability;
  }
  CHECK(std::abs(total - 1.0) <= 1e-12);

  CHECK_THROWS_AS(enumerate_support(build_digits_spec(), 1), EnumerationTooLarge);
}

TEST_CASE("counting") {
  const auto m1 = build_m1_spec();
  CHECK(count_distinct(m1, 0) == 2);
  CHECK(count_distinct(m1, 1) == 8);

  const auto digits = build_digits_spec();
  CHECK(count_distinct(digits, 0) == 10);
  CHECK(count_distinct(digits, 1) == BigInt(2621440));
  BigInt level2 = 10;
  for (int i = 0; i < 90; ++i) level2 *= 4;
  CHECK(count_distinct(digits, 2) == level2);
}

TEST_CASE("random specs: partition identity, enumeration totals and distinct counts") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(seed);
    const auto spec = random_binary_spec({}, rng);
    REQUIRE(validate_spec(spec).empty());
    for (int level = 0; level < spec.k; ++level) {
      std::vector<double> sum(spec.image_size(level), 0.0);
      for (int c = 0; c < static_cast<int>(spec.num_classes(level)); ++c) {
        const auto v = mean_image(spec, {level, c}).values;
        for (std::size_t i = 0; i < v.size(); ++i) {
          CHECK(std::abs(v[i]) <= 1.0);
          sum[i] += v[i];
        }
      }
      for (double x : sum) CHECK(std::abs(x) <= 1e-12);
    }
    for (int level = 0; level <= spec.k; ++level) {
      const auto support = enumerate_support(spec, level);
      double total = 0.0;
      std::set<std::pair<int, std::vector<double>>> distinct;
      for (const auto& o : support) {
        total += o.probability;
        std::vector<double> image;
        if (level == spec.k) {
          image = o.example.observed;
        } else {
          for (int v : o.example.latent[static_cast<std::size_t>(level)]) image.push_back(v);
        }
        distinct.emplace(o.example.label, image);
      }
      CHECK(std::abs(total - 1.0) <= 1e-12);
      CHECK(count_distinct(spec, level) == distinct.size());
    }
  }
}

TEST_CASE("sampled mean images agree with the exact ones") {
  const auto m1 = build_m1_spec();
  Rng rng(9);
  const std::size_t N = 20000;
  for (int c = 0; c < 2; ++c) {
    const auto exact = mean_image(m1, {0, c}).values;
    const auto sampled = mean_image_sampled(m1, {0, c}, N, rng);
    for (std::size_t i = 0; i < exact.size(); ++i) {
      CHECK(std::abs(sampled.mean.values[i] - exact[i]) <= 4.0 * std::sqrt(1.0 / N));
    }
  }
}

TEST_CASE("spec and dataset files round-trip") {
  const auto digits = build_digits_spec();
  const auto again = io::spec_from_json(io::spec_to_json(digits));
  CHECK(io::spec_hash(again) == io::spec_hash(digits));
  CHECK(io::spec_hash(build_m1_spec()) != io::spec_hash(digits));

  const auto m1 = build_m1_spec();
  const auto path = temp_path("data.bin");
  auto data = io::make_dataset(m1, sample_dataset(m1, 25, 4), 4, true);
  io::write_dataset(data, path);
  const auto back = io::read_dataset(path);
  CHECK(back.header.spec_hash == io::spec_hash(m1));
  CHECK(back.header.seed == 4);
  REQUIRE(back.examples.size() == 25);
  for (std::size_t i = 0; i < 25; ++i) {
    CHECK(back.examples[i].label == data.examples[i].label);
    CHECK(back.examples[i].observed == data.examples[i].observed);
    CHECK(back.examples[i].latent == data.examples[i].latent);
  }
  std::filesystem::remove(path);

  CHECK_THROWS_AS(io::read_dataset(temp_path("missing.bin")), Error);
  CHECK(io::resolve_spec("random:5").name == "random:5");
  CHECK(io::spec_hash(io::resolve_spec("random:5")) == io::spec_hash(io::resolve_spec("random:5")));
}
