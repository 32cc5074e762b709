#include "dlc/oracle.hpp"

#include "dlc/errors.hpp"
#include "dlc/patches.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <thread>

namespace dlc::oracle {

using nlohmann::json;

json to_json(const CheckReport& report) {
  return {{"schema", 1},
          {"record", "check"},
          {"name", report.name},
          {"passed", report.passed},
          {"asserted", report.asserted},
          {"expect_fail", report.expect_fail},
          {"ok", report.ok()},
          {"measured", report.measured},
          {"expected", report.expected},
          {"tolerance", report.tolerance},
          {"trials", report.trials},
          {"note", report.note}};
}

namespace {

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void require_level(const hiergen::HierarchySpec& spec, int level) {
  if (level < 0 || level >= spec.k) throw Error(ErrorKind::Validation, "level must lie in [0, k)");
}

double angle(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double cosine = a.dot(b) / (a.norm() * b.norm());
  return std::acos(std::clamp(cosine, -1.0, 1.0));
}

}  // namespace

tlgd::Moments EmbeddedPopulation::moments() const {
  tlgd::Moments mom(labels, ell, width);
  for (const auto& o : outcomes) {
    const auto y = static_cast<std::size_t>(std::find(labels.begin(), labels.end(), o.label) - labels.begin());
    mom.add_onehot(o.codes, y, o.probability);
  }
  return mom;
}

EmbeddedPopulation embedded_population(const hiergen::HierarchySpec& spec, int level, double bound) {
  require_level(spec, level);
  const hiergen::BigInt size = hiergen::support_size(spec, level + 1);
  if (size > hiergen::BigInt(static_cast<long long>(bound))) throw EnumerationTooLarge(size.convert_to<double>(), bound);

  EmbeddedPopulation pop;
  pop.level = level;
  pop.ell = spec.num_classes(level) * static_cast<std::size_t>(spec.d);
  pop.width = spec.image_size(level);
  pop.labels = spec.labels;
  const auto d = static_cast<std::size_t>(spec.d);
  for (const auto& parent : hiergen::enumerate_support(spec, level, bound)) {
    const auto& x = parent.example.latent.at(static_cast<std::size_t>(level));
    std::size_t combos = 1;
    for (std::size_t j = 0; j < x.size(); ++j) combos *= d;
    const double p = parent.probability / static_cast<double>(combos);
    for (std::size_t code = 0; code < combos; ++code) {
      EmbeddedOutcome o;
      o.parents = x;
      o.label = parent.example.label;
      o.probability = p;
      o.codes.resize(x.size());
      std::size_t rest = code;
      for (std::size_t j = x.size(); j-- > 0;) {
        o.codes[j] = static_cast<std::size_t>(x[j]) * d + rest % d;
        rest /= d;
      }
      pop.outcomes.push_back(std::move(o));
    }
  }
  return pop;
}

tlgd::ClassProbes class_probes(const hiergen::HierarchySpec& spec, int level) {
  require_level(spec, level);
  const std::size_t classes = spec.num_classes(level);
  const auto d = static_cast<std::size_t>(spec.d);
  const auto ell = static_cast<Eigen::Index>(classes * d);
  tlgd::ClassProbes probes;
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<Eigen::VectorXd> group;
    for (std::size_t i = 0; i < d; ++i) group.push_back(Eigen::VectorXd::Unit(ell, static_cast<Eigen::Index>(c * d + i)));
    probes.groups.push_back(std::move(group));
  }
  return probes;
}

double population_loss_exact(const EmbeddedPopulation& population, const tlgd::TwoLayerNet& net) {
  if (net.W.size() != 1) throw Error(ErrorKind::Validation, "exact population loss needs a binary network");
  const auto& K = net.K;
  const auto& W = net.W.front();
  if (static_cast<std::size_t>(K.rows()) != population.ell || static_cast<std::size_t>(W.cols()) != population.width) {
    throw Error(ErrorKind::Shape, "network does not match the embedded population");
  }
  double total = 0.0;
  for (const auto& o : population.outcomes) {
    // y_hat = sum_i sum_j (K^T X)_{ij} W_{ij}, and column j of X is e_{codes[j]}.
    double y_hat = 0.0;
    for (Eigen::Index i = 0; i < K.cols(); ++i) {
      for (std::size_t j = 0; j < o.codes.size(); ++j) {
        y_hat += K(static_cast<Eigen::Index>(o.codes[j]), i) * W(i, static_cast<Eigen::Index>(j));
      }
    }
    total += o.probability * (-static_cast<double>(o.label) * y_hat);
  }
  return total;
}

Eigen::MatrixXd finite_diff_grad(const EmbeddedPopulation& population, const tlgd::TwoLayerNet& net, double h) {
  if (!(h > 0.0)) throw Error(ErrorKind::Validation, "finite-difference step must be positive");
  tlgd::TwoLayerNet probe = net;
  Eigen::MatrixXd G(net.K.rows(), net.K.cols());
  for (Eigen::Index c = 0; c < net.K.cols(); ++c) {
    for (Eigen::Index r = 0; r < net.K.rows(); ++r) {
      const double base = net.K(r, c);
      probe.K(r, c) = base + h;
      const double up = population_loss_exact(population, probe);
      probe.K(r, c) = base - h;
      const double down = population_loss_exact(population, probe);
      probe.K(r, c) = base;
      G(r, c) = (up - down) / (2.0 * h);
    }
  }
  return G;
}

CheckReport check_lemma1(const hiergen::HierarchySpec& spec, int level, int c, int patch) {
  require_level(spec, level);
  if (c < 0 || static_cast<std::size_t>(c) >= spec.num_classes(level) || patch < 0 || patch >= spec.d) {
    throw Error(ErrorKind::Validation, "patch is not a member of any patch set");
  }
  const auto pop = embedded_population(spec, level);
  const std::size_t target = static_cast<std::size_t>(c) * static_cast<std::size_t>(spec.d) + static_cast<std::size_t>(patch);
  Eigen::VectorXd measured = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(pop.width));
  for (const auto& o : pop.outcomes) {
    for (std::size_t j = 0; j < o.codes.size(); ++j) {
      if (o.codes[j] == target) measured(static_cast<Eigen::Index>(j)) += -static_cast<double>(o.label) * o.probability;
    }
  }
  const Eigen::VectorXd expected = to_eigen(hiergen::mean_image(spec, {level, c}).values) / spec.d;
  const double err = (measured - expected).cwiseAbs().maxCoeff();

  CheckReport r;
  r.name = "lemma1";
  r.tolerance = 1e-12;
  r.passed = err <= r.tolerance;
  r.measured = {{"values", vec_json(measured)}, {"max_abs_error", err}};
  r.expected = vec_json(expected);
  r.note = spec.name + " level " + std::to_string(level) + " class " + spec.class_names[static_cast<std::size_t>(level)][static_cast<std::size_t>(c)] +
           " patch " + std::to_string(patch);
  return r;
}

CheckReport check_lemma2(const hiergen::HierarchySpec& spec, int level, const tlgd::TwoLayerNet& net) {
  const auto pop = embedded_population(spec, level);
  const Eigen::MatrixXd G = tlgd::grad_K(net, pop.moments());
  const auto d = static_cast<std::size_t>(spec.d);
  double err = 0.0;
  for (std::size_t c = 0; c < spec.num_classes(level); ++c) {
    const Eigen::VectorXd v = to_eigen(hiergen::mean_image(spec, {level, static_cast<int>(c)}).values);
    for (Eigen::Index i = 0; i < G.cols(); ++i) {
      const double closed = net.W.front().row(i).dot(v) / static_cast<double>(spec.d);
      for (std::size_t p = 0; p < d; ++p) err = std::max(err, std::abs(G(static_cast<Eigen::Index>(c * d + p), i) - closed));
    }
  }
  CheckReport r;
  r.name = "lemma2";
  r.tolerance = 1e-10;
  r.passed = err <= r.tolerance;
  r.measured = {{"max_abs_error", err}};
  r.expected = 0.0;
  r.note = spec.name + " level " + std::to_string(level) + ", n=" + std::to_string(net.n());
  return r;
}

CheckReport check_finite_diff(const hiergen::HierarchySpec& spec, int level, const tlgd::TwoLayerNet& net, double h) {
  const auto pop = embedded_population(spec, level);
  const Eigen::MatrixXd analytic = tlgd::grad_K(net, pop.moments());
  const Eigen::MatrixXd numeric = finite_diff_grad(pop, net, h);
  const double scale = std::max(analytic.norm(), std::numeric_limits<double>::min());
  const double rel = (analytic - numeric).norm() / scale;
  const double max_abs = (analytic - numeric).cwiseAbs().maxCoeff();
  CheckReport r;
  r.name = "finite_diff";
  r.tolerance = 1e-6;
  r.passed = rel < r.tolerance && max_abs <= 1e-8;
  r.measured = {{"relative_error", rel}, {"max_abs_error", max_abs}, {"step", h}};
  r.expected = {{"relative_error_below", 1e-6}, {"max_abs_error_below", 1e-8}};
  r.note = spec.name + " level " + std::to_string(level);
  return r;
}

CheckReport check_corollary1(const std::vector<Eigen::MatrixXd>& trace, const tlgd::ClassProbes& probes,
                             double tolerance) {
  double worst = 0.0;
  std::size_t comparisons = 0;
  for (std::size_t t = 0; t + 1 < trace.size(); ++t) {
    for (const auto& group : probes.groups) {
      for (std::size_t a = 0; a < group.size(); ++a) {
        for (std::size_t b = a + 1; b < group.size(); ++b) {
          const Eigen::VectorXd diff = group[a] - group[b];
          const Eigen::VectorXd before = (trace[t].transpose() * diff).cwiseAbs();
          const Eigen::VectorXd after = (trace[t + 1].transpose() * diff).cwiseAbs();
          worst = std::max(worst, (after - before).cwiseAbs().maxCoeff());
          ++comparisons;
        }
      }
    }
  }
  CheckReport r;
  r.name = "corollary1";
  r.tolerance = tolerance;
  r.passed = worst <= tolerance;
  r.measured = {{"max_gap_change", worst}, {"comparisons", comparisons}};
  r.expected = 0.0;
  r.trials = trace.empty() ? 0 : trace.size() - 1;
  return r;
}

CheckReport check_theorem1(const hiergen::HierarchySpec& spec, const Theorem1Config& config) {
  const auto pop = embedded_population(spec, config.level);
  const tlgd::Moments moments = pop.moments();
  const tlgd::ClassProbes probes = class_probes(spec, config.level);
  const double within_bound = config.sigma;
  const double cross_bound = 2.0 * std::sqrt(static_cast<double>(spec.s)) * config.sigma;

  struct Trial {
    double max_within = 0.0;
    double min_cross = 0.0;
  };
  std::vector<Trial> trials(config.trials);
  auto run = [&](std::size_t t) {
    tlgd::TrainConfig tc;
    tc.eta = config.eta;
    tc.T = config.T;
    tc.sigma = config.sigma;
    tc.n = config.n;
    tc.seed = config.seed + t;
    const auto result = tlgd::train(tc, pop.ell, pop.width, 1, moments);
    const auto gaps = tlgd::embedding_gaps(result.net.K, probes);
    trials[t] = {gaps.max_within, gaps.min_cross};
  };
  unsigned jobs = config.jobs ? config.jobs : std::max(1u, std::thread::hardware_concurrency());
  jobs = static_cast<unsigned>(std::min<std::size_t>(jobs, std::max<std::size_t>(1, config.trials)));
  std::vector<std::thread> workers;
  for (unsigned w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w] {
      for (std::size_t t = w; t < config.trials; t += jobs) run(t);
    });
  }
  for (auto& w : workers) w.join();

  std::size_t clause1 = 0;
  std::size_t clause2 = 0;
  double worst_within = 0.0;
  double worst_cross = std::numeric_limits<double>::infinity();
  for (const auto& t : trials) {
    clause1 += t.max_within < within_bound ? 1 : 0;
    clause2 += t.min_cross > cross_bound ? 1 : 0;
    worst_within = std::max(worst_within, t.max_within);
    worst_cross = std::min(worst_cross, t.min_cross);
  }
  const auto required = static_cast<std::size_t>(
      std::floor((1.0 - config.delta - 0.05) * static_cast<double>(config.trials) + 1e-9));

  // Preconditions: the Theorem 2 choice of n and T for this spec.
  const auto an = hiergen::analytics(spec);
  const auto hp = tlgd::hyperparams(*an.theta, *an.lambda, spec.s, spec.d, config.sigma * std::sqrt(double(spec.s)),
                                    config.delta, an.max_classes, config.eta);

  CheckReport r;
  r.name = "theorem1";
  r.trials = config.trials;
  r.tolerance = 0.05;
  r.asserted = config.force_assert || (config.n >= hp.n_min && config.T >= hp.T_min);
  r.passed = clause1 == config.trials && clause2 >= required;
  r.measured = {{"clause1_trials", clause1},
                {"clause2_trials", clause2},
                {"max_within_distance", worst_within},
                {"min_cross_distance", std::isfinite(worst_cross) ? json(worst_cross) : json(nullptr)}};
  r.expected = {{"clause1_trials", config.trials},
                {"clause2_trials_at_least", required},
                {"within_bound", within_bound},
                {"cross_bound", cross_bound},
                {"n_min", hp.n_min},
                {"T_min", hp.T_min}};
  r.note = spec.name + " n=" + std::to_string(config.n) + " T=" + std::to_string(config.T);
  if (!r.asserted) r.note += " (below n_min/T_min: measurement only)";
  return r;
}

CheckReport check_lemma3_vectors(const Eigen::VectorXd& v1, const Eigen::VectorXd& v2, std::size_t draws,
                                 std::uint64_t seed) {
  if (v1.norm() == 0.0 || v2.norm() == 0.0) throw Error(ErrorKind::Degenerate, "mean image is the zero vector");
  if (v1.size() != v2.size() || draws == 0) throw Error(ErrorKind::Validation, "invalid lemma 3 inputs");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::size_t hits = 0;
  Eigen::VectorXd w(v1.size());
  for (std::size_t i = 0; i < draws; ++i) {
    for (Eigen::Index r = 0; r < w.size(); ++r) w(r) = normal(rng);
    if ((w.dot(v1) > 0.0) != (w.dot(v2) > 0.0)) ++hits;
  }
  const double p = angle(v1, v2) / std::numbers::pi;
  const double freq = static_cast<double>(hits) / static_cast<double>(draws);
  const double stderr_ = std::sqrt(p * (1.0 - p) / static_cast<double>(draws));
  CheckReport r;
  r.name = "lemma3";
  r.trials = draws;
  r.tolerance = 3.0 * stderr_;
  r.passed = std::abs(freq - p) <= r.tolerance + 1e-12;
  r.measured = {{"frequency", freq}, {"stderr", stderr_}};
  r.expected = p;
  return r;
}

CheckReport check_lemma3(const hiergen::HierarchySpec& spec, hiergen::ClassId c1, hiergen::ClassId c2,
                         std::size_t draws, std::uint64_t seed) {
  auto r = check_lemma3_vectors(to_eigen(hiergen::mean_image(spec, c1).values),
                                to_eigen(hiergen::mean_image(spec, c2).values), draws, seed);
  r.note = spec.name + " classes " + std::to_string(c1.level) + ":" + std::to_string(c1.index) + " vs " +
           std::to_string(c2.level) + ":" + std::to_string(c2.index);
  return r;
}

CheckReport check_lemma4_vectors(const Eigen::VectorXd& v1, const Eigen::VectorXd& v2, std::size_t draws,
                                 std::uint64_t seed, double threshold_scale) {
  if (v1.norm() == 0.0 || v2.norm() == 0.0) throw Error(ErrorKind::Degenerate, "mean image is the zero vector");
  if (v1.size() != v2.size() || draws == 0) throw Error(ErrorKind::Validation, "invalid lemma 4 inputs");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double t1 = threshold_scale * v1.norm();
  const double t2 = threshold_scale * v2.norm();
  std::size_t hits = 0;
  Eigen::VectorXd w(v1.size());
  for (std::size_t i = 0; i < draws; ++i) {
    for (Eigen::Index r = 0; r < w.size(); ++r) w(r) = normal(rng);
    const double a = w.dot(v1);
    const double b = w.dot(v2);
    if (std::abs(a) > t1 && std::abs(b) > t2 && (a > 0.0) != (b > 0.0)) ++hits;
  }
  const double bound = 0.23 * angle(v1, v2) / std::numbers::pi;
  const double freq = static_cast<double>(hits) / static_cast<double>(draws);
  const double stderr_ = std::sqrt(bound * (1.0 - bound) / static_cast<double>(draws));
  CheckReport r;
  r.name = "lemma4";
  r.trials = draws;
  r.tolerance = 3.0 * stderr_;
  r.passed = freq >= bound - r.tolerance;
  r.measured = {{"frequency", freq}, {"stderr", stderr_}, {"threshold_scale", threshold_scale}};
  r.expected = {{"at_least", bound}};
  return r;
}

CheckReport check_lemma4(const hiergen::HierarchySpec& spec, hiergen::ClassId c1, hiergen::ClassId c2,
                         std::size_t draws, std::uint64_t seed, double threshold_scale) {
  auto r = check_lemma4_vectors(to_eigen(hiergen::mean_image(spec, c1).values),
                                to_eigen(hiergen::mean_image(spec, c2).values), draws, seed, threshold_scale);
  r.note = spec.name + " classes " + std::to_string(c1.level) + ":" + std::to_string(c1.index) + " vs " +
           std::to_string(c2.level) + ":" + std::to_string(c2.index);
  return r;
}

CheckReport latent_recovery(const pipeline::DeepModel& model, const std::vector<hiergen::Example>& examples,
                            int level) {
  const int k = model.shape.k;
  if (level < 0 || level > k) throw Error(ErrorKind::Validation, "level must lie in [0, k]");
  for (const auto& ex : examples) {
    if (ex.latent.size() < static_cast<std::size_t>(k)) {
      throw Error(ErrorKind::Validation, "latent recovery needs examples with their latent chains");
    }
  }
  CheckReport r;
  r.name = "latent_recovery";
  r.trials = examples.size();
  r.expected = {{"consistency_violations", 0}, {"collision_violations", 0}};

  // Key of column j: the s-block of x^(level) under position j (the pixel itself at level 0).
  const std::size_t s = level == 0 ? 1 : static_cast<std::size_t>(model.shape.s);
  const std::size_t width = level == 0 ? model.shape.image_size(0) : model.shape.image_size(level - 1);
  const auto table = level == 0 ? block_table(Geometry::OneD, width, 1) : block_table(model.shape.geometry, width, s);
  const std::size_t code_index = static_cast<std::size_t>(k - level);

  std::vector<std::map<std::vector<double>, std::size_t>> key_to_cluster(width);
  std::vector<std::map<std::size_t, std::vector<double>>> cluster_to_key(width);
  std::map<std::vector<double>, int> distinct_images;
  std::size_t consistency = 0;
  std::size_t collisions = 0;
  for (const auto& ex : examples) {
    std::vector<std::size_t> codes;
    try {
      codes = pipeline::mapped_codes(model, ex.observed).at(code_index);
    } catch (const UnseenPatch& e) {
      r.passed = false;
      r.measured = {{"unseen_patch", e.what()}};
      r.note = "level " + std::to_string(level);
      return r;
    }
    std::vector<double> image;
    if (level == k) {
      image = ex.observed;
    } else {
      for (int v : ex.latent[static_cast<std::size_t>(level)]) image.push_back(v);
    }
    distinct_images.emplace(image, 0);
    for (std::size_t j = 0; j < width; ++j) {
      std::vector<double> key;
      for (std::size_t pos : table[j]) key.push_back(image[pos]);
      auto [kit, fresh_key] = key_to_cluster[j].emplace(key, codes[j]);
      if (!fresh_key && kit->second != codes[j]) ++consistency;
      auto [cit, fresh_cluster] = cluster_to_key[j].emplace(codes[j], key);
      if (!fresh_cluster && cit->second != key) ++collisions;
    }
  }
  r.passed = consistency == 0 && collisions == 0;
  r.measured = {{"consistency_violations", consistency},
                {"collision_violations", collisions},
                {"distinct_latent_images", distinct_images.size()}};
  r.note = "level " + std::to_string(level);
  if (distinct_images.size() <= 1) r.note += " (single latent image: vacuous)";
  return r;
}

}  // namespace dlc::oracle
