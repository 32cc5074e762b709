#pragma once

#include "dlc/hiergen.hpp"
#include "dlc/patches.hpp"
#include "dlc/tlgd.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

/// Deep Layerwise Clustering: cluster -> train embedding -> stack, level by
/// level from the observed image up to the top, then a linear classifier.
namespace dlc::pipeline {

using hiergen::Example;

/// Dimensions of the data a model is trained on.
struct ModelShape {
  Geometry geometry = Geometry::OneD;
  int k = 1;
  int m = 1;
  int s = 2;
  std::vector<int> labels;

  bool binary() const;
  std::size_t image_size(int level) const;  // m * s^level
  std::size_t label_index(int label) const;
};

ModelShape shape_of(const hiergen::HierarchySpec& spec);

struct DeepParams {
  double gamma = 0.1;
  double eta = 0.01;
  int T = 1;
  int n = 1;
  double sigma = 0.1;
  double epsilon = 0.01;
  std::uint64_t seed = 0;
  /// ExactPopulation: full-batch gradient over the training sample.
  /// Empirical: fresh minibatches drawn with replacement from the sample.
  tlgd::GradientMode mode = tlgd::GradientMode::ExactPopulation;
  std::size_t batch = 512;
  int cls_iterations = 500;
  double cls_rate = 1.0;
  std::size_t max_clusters = 8192;  // per level; 0 = unbounded
};

void validate(const DeepParams& params);

/// phi_kappa followed by K_{kappa-1}. `net` keeps W_0 so the block can be re-checked.
struct LayerBlock {
  int level = 0;
  patches::PatchMapping phi;
  tlgd::TwoLayerNet net;
  tlgd::TrainConfig config;

  const Eigen::MatrixXd& kernels() const { return net.K; }
};

/// Multinomial logistic regression over the flattened one-hot top representation.
struct Classifier {
  std::vector<int> labels;
  Eigen::MatrixXd weights;  // labels x features
  Eigen::VectorXd bias;     // labels
  bool constant = false;    // trained on a single label
  int iterations = 0;
  double train_error = 0.0;

  int predict(const Eigen::Ref<const Eigen::VectorXd>& features) const;
};

struct DeepModel {
  ModelShape shape;
  DeepParams params;
  std::uint64_t spec_hash = 0;
  std::vector<LayerBlock> blocks;  // levels k..1
  patches::PatchMapping top_phi;   // phi_0 over size-1 patches
  Classifier classifier;
};

struct LevelReport {
  int level = 0;
  std::size_t ell = 0;             // clusters found
  std::size_t unique_patches = 0;  // distinct patch vectors seen
  bool single_cluster = false;     // every distinct patch fell into one cluster
  std::vector<tlgd::StepMetrics> metrics;
};

struct TrainReport {
  std::vector<LevelReport> levels;  // levels k..1, then the top (level 0) with no metrics
  int cls_iterations = 0;
  double cls_train_error = 0.0;
  bool cls_constant = false;
};

/// Runs the whole algorithm on `data` (dataset order is semantic). Gap metrics
/// are recorded when every example carries its latent chain.
DeepModel train_deep(const std::vector<Example>& data, const ModelShape& shape, const DeepParams& params,
                     TrainReport* report = nullptr);

/// h_kappa(x) after the first `blocks` blocks: a (channels x positions) tensor.
/// With zero blocks this is the observed image as a 1 x (m s^k) tensor.
Eigen::MatrixXd forward_partial(const DeepModel& model, std::span<const double> observed, std::size_t blocks,
                                patches::UnseenPolicy policy = patches::UnseenPolicy::Strict);

/// Cluster codes of phi_kappa * h_kappa(x) for kappa = k..1, then the phi_0 codes
/// of h_0(x). Entry i has m * s^(k-1-i) codes (m for the last entry).
std::vector<std::vector<std::size_t>> mapped_codes(const DeepModel& model, std::span<const double> observed,
                                                   patches::UnseenPolicy policy = patches::UnseenPolicy::Strict,
                                                   std::size_t* lenient = nullptr);

/// Flattened one-hot features of phi_0 * h_0 (position-major blocks of ell_0).
Eigen::VectorXd top_features(const patches::PatchMapping& top_phi, const std::vector<std::size_t>& codes);

using FeatureMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Multinomial logistic regression by full-batch gradient descent from zero;
/// stops once the training error is <= epsilon / 2 or after `iterations` steps.
Classifier train_cls(const FeatureMatrix& features, const std::vector<int>& labels,
                     const std::vector<int>& label_set, double epsilon, int iterations, double rate);
Classifier train_cls(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                     const std::vector<int>& label_set, double epsilon, int iterations, double rate);

int predict(const DeepModel& model, std::span<const double> observed,
            patches::UnseenPolicy policy = patches::UnseenPolicy::Strict);

struct Evaluation {
  std::size_t count = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  std::vector<int> labels;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::size_t lenient_patches = 0;
};

Evaluation evaluate(const DeepModel& model, const std::vector<Example>& data,
                    patches::UnseenPolicy policy = patches::UnseenPolicy::Strict);

nlohmann::json evaluation_to_json(const Evaluation& eval);
nlohmann::json report_to_json(const TrainReport& report);

nlohmann::json params_to_json(const DeepParams& params);
DeepParams params_from_json(const nlohmann::json& doc);

/// Directory layout: manifest.json, block_<level>_mapping.json,
/// block_<level>_kernels.json, top_mapping.json, classifier.json.
void save_model(const DeepModel& model, const std::filesystem::path& dir);
DeepModel load_model(const std::filesystem::path& dir);

}  // namespace dlc::pipeline
