#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

/// Two-layer convolutional subnet N_{K,W}(X) = tr(W^T K^T X) with frozen W and
/// the linear loss, trained by gradient descent on K only.
namespace dlc::tlgd {

using Rng = std::mt19937_64;

/// K is ell x n (column i is kernel i). W holds one n x m block per output:
/// a single block for binary labels, one block per label otherwise.
struct TwoLayerNet {
  Eigen::MatrixXd K;
  std::vector<Eigen::MatrixXd> W;

  std::size_t ell() const { return static_cast<std::size_t>(K.rows()); }
  std::size_t n() const { return static_cast<std::size_t>(K.cols()); }
  std::size_t m() const { return W.empty() ? 0 : static_cast<std::size_t>(W.front().cols()); }
  bool binary() const { return W.size() == 1; }
};

/// Binary output: tr(W^T K^T X). Requires a single W block.
double forward(const TwoLayerNet& net, const Eigen::MatrixXd& X);
/// One score per W block.
Eigen::VectorXd forward_scores(const TwoLayerNet& net, const Eigen::MatrixXd& X);

/// Binary: -y * forward, y in {+1, -1}.
double loss(const TwoLayerNet& net, const Eigen::MatrixXd& X, int y);
/// Multi-class: -score_y + mean of the other scores. Equals the binary loss for two labels.
double loss_multiclass(const TwoLayerNet& net, const Eigen::MatrixXd& X, std::size_t label_index);

/// Label-weighted first moments S_y = E[1{label = y} X]. For binary nets,
/// `labels` holds the two signed labels; for multi-class nets it is the label list
/// and entry y pairs with W block y.
struct Moments {
  std::vector<int> labels;
  std::vector<Eigen::MatrixXd> sums;
  double total_weight = 0.0;

  Moments() = default;
  Moments(std::vector<int> labels, std::size_t ell, std::size_t m);

  void add(const Eigen::MatrixXd& X, std::size_t label_index, double weight);
  /// X given as one cluster index per column (the one-hot case).
  void add_onehot(const std::vector<std::size_t>& clusters, std::size_t label_index, double weight);
  /// Divide by the accumulated weight (sample average).
  void normalize();
};

/// Per-label loss weight U_y (n x m), so that loss(X, y) = <U_y, K^T X>.
Eigen::MatrixXd loss_weight(const TwoLayerNet& net, const Moments& moments, std::size_t label_index);

/// dL/dK = sum_y S_y U_y^T. Does not depend on K.
Eigen::MatrixXd grad_K(const TwoLayerNet& net, const Moments& moments);
double population_loss(const TwoLayerNet& net, const Moments& moments);

/// Columns of K uniform on the sphere of radius sigma / (2 sqrt(n)); W entries
/// standard normal. K is drawn first, then the W blocks in order.
TwoLayerNet init(std::size_t ell, std::size_t n, std::size_t m, std::size_t blocks, double sigma, Rng& rng);

enum class GradientMode { ExactPopulation, Empirical };

struct TrainConfig {
  double eta = 0.01;
  int T = 0;
  double sigma = 0.1;
  int n = 1;
  GradientMode mode = GradientMode::ExactPopulation;
  std::size_t batch = 512;
  std::uint64_t seed = 0;
  bool keep_trace = false;
};

void validate(const TrainConfig& config);

/// Draws a fresh batch and returns its (normalized) moments.
using BatchSampler = std::function<Moments(std::size_t batch, Rng& rng)>;
using GradientSource = std::variant<Moments, BatchSampler>;

/// Patch vectors grouped by class; used for per-step gap metrics.
struct ClassProbes {
  std::vector<std::vector<Eigen::VectorXd>> groups;
};

struct Gaps {
  double max_within = 0.0;
  double min_cross = 0.0;
};
Gaps embedding_gaps(const Eigen::MatrixXd& K, const ClassProbes& probes);

struct StepMetrics {
  int step = 0;
  std::optional<double> loss;
  std::optional<Gaps> gaps;
};

struct TrainResult {
  TwoLayerNet net;               // K_T with W_0
  Eigen::MatrixXd K0;
  std::vector<Eigen::MatrixXd> trace;  // K_0..K_T when keep_trace
  std::vector<StepMetrics> metrics;
};

/// K_t = K_{t-1} - eta * grad. In ExactPopulation mode `source` must hold the
/// population moments; in Empirical mode it must be a sampler, called once per step.
TrainResult train(const TrainConfig& config, std::size_t ell, std::size_t m, std::size_t blocks,
                  const GradientSource& source, const ClassProbes* probes = nullptr);

/// K^T x.
Eigen::VectorXd embed(const TwoLayerNet& net, const Eigen::Ref<const Eigen::VectorXd>& x);

struct Hyperparams {
  double sigma = 0.0;
  int n_min = 0;
  int T_min = 0;
};

/// sigma = gamma / sqrt(s); n_min and T_min are the smallest integers strictly
/// greater than (2 pi / (0.23 theta)) ln(C_max / delta) and 2 sqrt(s) sigma d / (eta lambda).
Hyperparams hyperparams(double theta, double lambda, int s, int d, double gamma, double delta, int c_max,
                        double eta);

/// Smallest integer strictly greater than `bound`; values within 1e-9 (relative)
/// of an integer count as that integer.
int smallest_integer_above(double bound);

nlohmann::json config_to_json(const TrainConfig& config);
TrainConfig config_from_json(const nlohmann::json& doc);
nlohmann::json checkpoint_to_json(const TwoLayerNet& net, const TrainConfig& config);
TwoLayerNet checkpoint_from_json(const nlohmann::json& doc, TrainConfig* config = nullptr);
void save_checkpoint(const TwoLayerNet& net, const TrainConfig& config, const std::filesystem::path& path);
TwoLayerNet load_checkpoint(const std::filesystem::path& path, TrainConfig* config = nullptr);

nlohmann::json metrics_record(const StepMetrics& metrics);
std::string metrics_jsonl(const std::vector<StepMetrics>& metrics);

nlohmann::json matrix_to_json(const Eigen::MatrixXd& matrix);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& doc);

}  // namespace dlc::tlgd
