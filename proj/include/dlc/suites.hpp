#pragma once

#include "dlc/hiergen.hpp"
#include "dlc/oracle.hpp"
#include "dlc/pipeline.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

/// Named verification suites built from the oracle checks, plus the
/// hyperparameter selection they (and `dlc train --auto`) share.
namespace dlc::suites {

struct TheoryParams {
  double gamma = 0.0;
  double sigma = 0.0;
  double eta = 0.01;
  double delta = 0.1;
  int n = 1;
  int T = 0;
  double delta_min = 0.0;  // minimum observed-patch distance
  std::optional<double> theta;
  std::optional<double> lambda;
  int c_max = 0;
  bool multiclass = false;  // theta/lambda from the label-concatenated mean images
};

/// Per-label extension of the mean image for multi-label specs: the
/// concatenation over labels y of P(y) (-q_y + mean_{y' != y} q_{y'}), where
/// q_y(pos) = P(x_pos = c | y). Matches the gradient of the multi-class loss the
/// way v_c matches the binary one.
std::vector<Eigen::VectorXd> multiclass_mean_images(const hiergen::HierarchySpec& spec, int level);

/// gamma defaults to Delta / 10 (well inside gamma <= Delta / 2); sigma, n and T
/// follow the Theorem 2 formulas. Multi-label specs use the concatenated mean images.
TheoryParams theory_params(const hiergen::HierarchySpec& spec, double eta = 0.01, double delta = 0.1,
                           std::optional<double> gamma = std::nullopt);

pipeline::DeepParams deep_params(const TheoryParams& tp, std::uint64_t seed, double epsilon = 0.01);

struct SuiteOptions {
  std::string spec = "m1";
  std::size_t trials = 50;   // theorem 1 trials
  std::size_t draws = 2000;  // lemma 3/4 draws
  std::size_t runs = 10;     // theorem 2 runs
  std::uint64_t seed = 1;
  unsigned jobs = 0;
};

std::vector<std::string> suite_names();
/// Throws Error(Usage) for an unknown suite.
std::vector<oracle::CheckReport> run_suite(const std::string& name, const SuiteOptions& options);

std::vector<oracle::CheckReport> lemma_reports(const hiergen::HierarchySpec& spec, const SuiteOptions& options);
std::vector<oracle::CheckReport> lemma1_reports(const hiergen::HierarchySpec& spec);
oracle::CheckReport corollary1_report(const hiergen::HierarchySpec& spec, bool corrupt = false);
oracle::CheckReport theorem1_report(const hiergen::HierarchySpec& spec, const SuiteOptions& options,
                                    std::optional<int> T = std::nullopt);

struct Theorem2Options {
  std::size_t runs = 10;
  std::size_t required = 9;
  std::size_t n_train = 2000;
  std::size_t n_test = 500;
  double max_error = 0.01;
  std::uint64_t seed = 1;
};

/// Seeded end-to-end runs: test error <= max_error and latent recovery at every level.
oracle::CheckReport check_theorem2(const hiergen::HierarchySpec& spec, const Theorem2Options& options);

/// Exact counts for the digits spec and the printed total of nine digits.
oracle::CheckReport check_counting();

struct DigitsOptions {
  std::size_t n_train = 5000;
  std::size_t n_test = 1000;
  double min_accuracy = 0.99;
  std::uint64_t seed = 1;
};
oracle::CheckReport check_digits(const DigitsOptions& options);

std::vector<oracle::CheckReport> negative_controls(const SuiteOptions& options);

/// Lemma 4 on an orthogonal pair of unit vectors at the given threshold scale.
oracle::CheckReport lemma4_orthogonal(const SuiteOptions& options, double threshold_scale);

}  // namespace dlc::suites
