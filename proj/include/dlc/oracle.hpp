#pragma once

#include "dlc/hiergen.hpp"
#include "dlc/pipeline.hpp"
#include "dlc/tlgd.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

/// Brute-force references for the training analysis: exact enumeration,
/// finite differences and frequency estimates. Loss and gradient code here is
/// written independently of dlc::tlgd.
namespace dlc::oracle {

struct CheckReport {
  std::string name;
  bool passed = false;
  bool asserted = true;      // false: precondition unmet, measurement only
  bool expect_fail = false;  // negative control
  nlohmann::json measured;
  nlohmann::json expected;
  double tolerance = 0.0;
  std::size_t trials = 0;
  std::string note;

  /// Whether the suite should count this report as a success.
  bool ok() const { return !asserted || passed != expect_fail; }
};

nlohmann::json to_json(const CheckReport& report);

/// The distribution G_{level+1} seen through the canonical orthonormal
/// embedding of level-(level+1) patches: the block under pixel j of x^(level)
/// becomes e_{c*d + i} for patch i of S_c. Columns of X are given as codes.
struct EmbeddedOutcome {
  std::vector<std::size_t> codes;  // one per pixel of x^(level)
  std::vector<int> parents;        // x^(level)
  int label = 0;
  double probability = 0.0;
};

struct EmbeddedPopulation {
  int level = 0;
  std::size_t ell = 0;    // |C_level| * d
  std::size_t width = 0;  // m * s^level
  std::vector<int> labels;
  std::vector<EmbeddedOutcome> outcomes;

  /// Population moments for dlc::tlgd (binary spec: labels +1/-1, one W block).
  tlgd::Moments moments() const;
};

EmbeddedPopulation embedded_population(const hiergen::HierarchySpec& spec, int level,
                                       double bound = hiergen::kDefaultEnumerationBound);

/// Patches of each class at `level` as basis vectors e_{c*d+i}, grouped by class.
tlgd::ClassProbes class_probes(const hiergen::HierarchySpec& spec, int level);

/// E[-y N_{K,W}(X)] summed outcome by outcome with explicit loops. Binary only.
double population_loss_exact(const EmbeddedPopulation& population, const tlgd::TwoLayerNet& net);

/// Central differences of population_loss_exact in every entry of K.
Eigen::MatrixXd finite_diff_grad(const EmbeddedPopulation& population, const tlgd::TwoLayerNet& net, double h);

/// E[-y f_{x'}(X)] against v_c / d, for patch `patch` of class `c` at `level`.
CheckReport check_lemma1(const hiergen::HierarchySpec& spec, int level, int c, int patch);

/// Every x' in S_c: x' . grad column i == (1/d) w_i . v_c.
CheckReport check_lemma2(const hiergen::HierarchySpec& spec, int level, const tlgd::TwoLayerNet& net);

/// Analytic population gradient against finite differences.
CheckReport check_finite_diff(const hiergen::HierarchySpec& spec, int level, const tlgd::TwoLayerNet& net,
                              double h = 1e-5);

/// Projection gaps of same-class patch pairs are constant along the trace.
CheckReport check_corollary1(const std::vector<Eigen::MatrixXd>& trace, const tlgd::ClassProbes& probes,
                             double tolerance = 1e-9);

struct Theorem1Config {
  int level = 0;
  int n = 1;
  int T = 0;
  double eta = 0.01;
  double sigma = 0.1;
  double delta = 0.1;
  std::size_t trials = 50;
  std::uint64_t seed = 1;
  unsigned jobs = 0;  // 0: hardware concurrency
  /// When set, the bound is asserted regardless of n_min/T_min.
  bool force_assert = false;
};

/// Seeded TLGD runs on the exact population. Clause 1 (within-class distance
/// < sigma) must hold in every trial; clause 2 (cross-class distance
/// > 2 sqrt(s) sigma) in at least floor((1 - delta - 0.05) * trials) of them.
CheckReport check_theorem1(const hiergen::HierarchySpec& spec, const Theorem1Config& config);

/// Frequency of sign(w.v1) != sign(w.v2) for standard normal w against angle/pi.
CheckReport check_lemma3_vectors(const Eigen::VectorXd& v1, const Eigen::VectorXd& v2, std::size_t draws,
                                 std::uint64_t seed);
CheckReport check_lemma3(const hiergen::HierarchySpec& spec, hiergen::ClassId c1, hiergen::ClassId c2,
                         std::size_t draws, std::uint64_t seed);

/// Frequency of {|w.v1| > t||v1||, |w.v2| > t||v2||, signs differ} against
/// 0.23 angle/pi, with t = threshold_scale.
CheckReport check_lemma4_vectors(const Eigen::VectorXd& v1, const Eigen::VectorXd& v2, std::size_t draws,
                                 std::uint64_t seed, double threshold_scale = 1.0);
CheckReport check_lemma4(const hiergen::HierarchySpec& spec, hiergen::ClassId c1, hiergen::ClassId c2,
                         std::size_t draws, std::uint64_t seed, double threshold_scale = 1.0);

/// phi_level * h_level(x) must be a function of the s-blocks of x^(level)
/// (pixels for level 0), with distinct blocks at a position mapped to distinct
/// (orthogonal) vectors. Examples must retain their latent chains.
CheckReport latent_recovery(const pipeline::DeepModel& model, const std::vector<hiergen::Example>& examples,
                            int level);

}  // namespace dlc::oracle
