#include "dlc/tlgd.hpp"

#include "dlc/errors.hpp"
#include "dlc/spec_io.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace dlc::tlgd {

namespace {

void check_input(const TwoLayerNet& net, const Eigen::MatrixXd& X) {
  if (net.W.empty()) throw Error(ErrorKind::Shape, "network has no output weights");
  if (static_cast<std::size_t>(X.rows()) != net.ell() || static_cast<std::size_t>(X.cols()) != net.m()) {
    throw Error(ErrorKind::Shape, "input is " + std::to_string(X.rows()) + "x" + std::to_string(X.cols()) +
                                      ", network expects " + std::to_string(net.ell()) + "x" +
                                      std::to_string(net.m()));
  }
}

}  // namespace

double forward(const TwoLayerNet& net, const Eigen::MatrixXd& X) {
  check_input(net, X);
  if (!net.binary()) throw Error(ErrorKind::Shape, "forward needs a single output block");
  return (net.K.transpose() * X).cwiseProduct(net.W.front()).sum();
}

Eigen::VectorXd forward_scores(const TwoLayerNet& net, const Eigen::MatrixXd& X) {
  check_input(net, X);
  const Eigen::MatrixXd KX = net.K.transpose() * X;
  Eigen::VectorXd scores(static_cast<Eigen::Index>(net.W.size()));
  for (std::size_t b = 0; b < net.W.size(); ++b) scores(static_cast<Eigen::Index>(b)) = KX.cwiseProduct(net.W[b]).sum();
  return scores;
}

double loss(const TwoLayerNet& net, const Eigen::MatrixXd& X, int y) {
  if (y != 1 && y != -1) throw Error(ErrorKind::Validation, "label must be +1 or -1, got " + std::to_string(y));
  return -y * forward(net, X);
}

double loss_multiclass(const TwoLayerNet& net, const Eigen::MatrixXd& X, std::size_t label_index) {
  const Eigen::VectorXd scores = forward_scores(net, X);
  const auto L = static_cast<std::size_t>(scores.size());
  if (L < 2 || label_index >= L) throw Error(ErrorKind::Validation, "label index out of range");
  const double own = scores(static_cast<Eigen::Index>(label_index));
  return -own + (scores.sum() - own) / static_cast<double>(L - 1);
}

Moments::Moments(std::vector<int> label_values, std::size_t ell, std::size_t m) : labels(std::move(label_values)) {
  sums.assign(labels.size(), Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ell), static_cast<Eigen::Index>(m)));
}

void Moments::add(const Eigen::MatrixXd& X, std::size_t label_index, double weight) {
  if (label_index >= sums.size()) throw Error(ErrorKind::Validation, "label index out of range");
  if (X.rows() != sums[label_index].rows() || X.cols() != sums[label_index].cols()) {
    throw Error(ErrorKind::Shape, "moment input has the wrong shape");
  }
  sums[label_index] += weight * X;
  total_weight += weight;
}

void Moments::add_onehot(const std::vector<std::size_t>& clusters, std::size_t label_index, double weight) {
  if (label_index >= sums.size()) throw Error(ErrorKind::Validation, "label index out of range");
  auto& S = sums[label_index];
  if (clusters.size() != static_cast<std::size_t>(S.cols())) throw Error(ErrorKind::Shape, "moment input has the wrong shape");
  for (std::size_t j = 0; j < clusters.size(); ++j) {
    if (clusters[j] >= static_cast<std::size_t>(S.rows())) throw Error(ErrorKind::Shape, "cluster index out of range");
    S(static_cast<Eigen::Index>(clusters[j]), static_cast<Eigen::Index>(j)) += weight;
  }
  total_weight += weight;
}

void Moments::normalize() {
  if (total_weight <= 0.0) throw Error(ErrorKind::Validation, "cannot normalize empty moments");
  for (auto& S : sums) S /= total_weight;
  total_weight = 1.0;
}

Eigen::MatrixXd loss_weight(const TwoLayerNet& net, const Moments& moments, std::size_t label_index) {
  if (net.binary()) {
    const int y = moments.labels.at(label_index);
    if (y != 1 && y != -1) throw Error(ErrorKind::Validation, "binary network needs labels +1/-1");
    return -static_cast<double>(y) * net.W.front();
  }
  const std::size_t L = net.W.size();
  if (moments.labels.size() != L) throw Error(ErrorKind::Shape, "label count does not match the output blocks");
  Eigen::MatrixXd others = Eigen::MatrixXd::Zero(net.W.front().rows(), net.W.front().cols());
  for (std::size_t c = 0; c < L; ++c) {
    if (c != label_index) others += net.W[c];
  }
  return -net.W[label_index] + others / static_cast<double>(L - 1);
}

Eigen::MatrixXd grad_K(const TwoLayerNet& net, const Moments& moments) {
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(net.K.rows(), net.K.cols());
  for (std::size_t y = 0; y < moments.sums.size(); ++y) {
    if (moments.sums[y].rows() != net.K.rows() || static_cast<std::size_t>(moments.sums[y].cols()) != net.m()) {
      throw Error(ErrorKind::Shape, "moments do not match the network shape");
    }
    G.noalias() += moments.sums[y] * loss_weight(net, moments, y).transpose();
  }
  return G;
}

double population_loss(const TwoLayerNet& net, const Moments& moments) {
  double total = 0.0;
  for (std::size_t y = 0; y < moments.sums.size(); ++y) {
    total += (net.K.transpose() * moments.sums[y]).cwiseProduct(loss_weight(net, moments, y)).sum();
  }
  return total;
}

TwoLayerNet init(std::size_t ell, std::size_t n, std::size_t m, std::size_t blocks, double sigma, Rng& rng) {
  if (!(sigma > 0.0)) throw Error(ErrorKind::Validation, "sigma must be positive");
  if (ell == 0 || n == 0 || blocks == 0) throw Error(ErrorKind::Validation, "network dimensions must be positive");
  std::normal_distribution<double> normal(0.0, 1.0);
  const double radius = sigma / (2.0 * std::sqrt(static_cast<double>(n)));
  TwoLayerNet net;
  net.K.resize(static_cast<Eigen::Index>(ell), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < net.K.cols(); ++i) {
    Eigen::VectorXd dir(static_cast<Eigen::Index>(ell));
    double norm = 0.0;
    while (norm == 0.0) {
      for (Eigen::Index r = 0; r < dir.size(); ++r) dir(r) = normal(rng);
      norm = dir.norm();
    }
    net.K.col(i) = dir * (radius / norm);
  }
  for (std::size_t b = 0; b < blocks; ++b) {
    Eigen::MatrixXd W(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    for (Eigen::Index c = 0; c < W.cols(); ++c) {
      for (Eigen::Index r = 0; r < W.rows(); ++r) W(r, c) = normal(rng);
    }
    net.W.push_back(std::move(W));
  }
  return net;
}

void validate(const TrainConfig& config) {
  // eta == 0 is allowed: it freezes K, which the trace checks use as a control.
  if (!(config.eta >= 0.0)) throw Error(ErrorKind::Validation, "eta must be non-negative");
  if (!(config.sigma > 0.0)) throw Error(ErrorKind::Validation, "sigma must be positive");
  if (config.T < 0) throw Error(ErrorKind::Validation, "T must be non-negative");
  if (config.n < 1) throw Error(ErrorKind::Validation, "n must be at least 1");
  if (config.mode == GradientMode::Empirical && config.batch == 0) {
    throw Error(ErrorKind::Validation, "batch must be positive");
  }
}

Gaps embedding_gaps(const Eigen::MatrixXd& K, const ClassProbes& probes) {
  std::vector<std::vector<Eigen::VectorXd>> emb(probes.groups.size());
  for (std::size_t g = 0; g < probes.groups.size(); ++g) {
    for (const auto& x : probes.groups[g]) emb[g].push_back(K.transpose() * x);
  }
  Gaps gaps{0.0, std::numeric_limits<double>::infinity()};
  for (std::size_t g = 0; g < emb.size(); ++g) {
    for (std::size_t a = 0; a < emb[g].size(); ++a) {
      for (std::size_t b = a + 1; b < emb[g].size(); ++b) {
        gaps.max_within = std::max(gaps.max_within, (emb[g][a] - emb[g][b]).norm());
      }
      for (std::size_t h = g + 1; h < emb.size(); ++h) {
        for (const auto& other : emb[h]) gaps.min_cross = std::min(gaps.min_cross, (emb[g][a] - other).norm());
      }
    }
  }
  return gaps;
}

TrainResult train(const TrainConfig& config, std::size_t ell, std::size_t m, std::size_t blocks,
                  const GradientSource& source, const ClassProbes* probes) {
  validate(config);
  const bool exact = config.mode == GradientMode::ExactPopulation;
  if (exact != std::holds_alternative<Moments>(source)) {
    throw Error(ErrorKind::Validation, exact ? "exact-population training needs population moments"
                                             : "empirical training needs a batch sampler");
  }
  Rng rng(config.seed);
  TrainResult result;
  result.net = init(ell, static_cast<std::size_t>(config.n), m, blocks, config.sigma, rng);
  result.K0 = result.net.K;
  if (config.keep_trace) result.trace.push_back(result.K0);

  // The loss is linear in K, so with a fixed gradient G it equals <K, G>.
  auto record = [&](int step, const Moments* moments, const Eigen::MatrixXd* G = nullptr) {
    StepMetrics metrics;
    metrics.step = step;
    if (G) {
      metrics.loss = result.net.K.cwiseProduct(*G).sum();
    } else if (moments) {
      metrics.loss = population_loss(result.net, *moments);
    }
    if (probes) metrics.gaps = embedding_gaps(result.net.K, *probes);
    result.metrics.push_back(std::move(metrics));
  };

  if (exact) {
    const auto& population = std::get<Moments>(source);
    const Eigen::MatrixXd G = grad_K(result.net, population);
    record(0, &population, &G);
    for (int t = 1; t <= config.T; ++t) {
      result.net.K -= config.eta * G;
      if (config.keep_trace) result.trace.push_back(result.net.K);
      record(t, &population, &G);
    }
    return result;
  }

  const auto& sampler = std::get<BatchSampler>(source);
  if (config.T == 0) record(0, nullptr);
  for (int t = 1; t <= config.T; ++t) {
    const Moments batch = sampler(config.batch, rng);
    if (t == 1) record(0, &batch);
    result.net.K -= config.eta * grad_K(result.net, batch);
    if (config.keep_trace) result.trace.push_back(result.net.K);
    record(t, &batch);
  }
  return result;
}

Eigen::VectorXd embed(const TwoLayerNet& net, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (static_cast<std::size_t>(x.size()) != net.ell()) throw Error(ErrorKind::Shape, "embedding input has the wrong size");
  return net.K.transpose() * x;
}

int smallest_integer_above(double bound) {
  if (!std::isfinite(bound)) throw Error(ErrorKind::Degenerate, "hyperparameter bound is not finite");
  const double nearest = std::round(bound);
  const double snapped = std::abs(bound - nearest) <= 1e-9 * std::max(1.0, std::abs(bound)) ? nearest : bound;
  return static_cast<int>(std::floor(snapped)) + 1;
}

Hyperparams hyperparams(double theta, double lambda, int s, int d, double gamma, double delta, int c_max,
                        double eta) {
  if (!(theta > 0.0) || theta > std::numbers::pi + 1e-12) {
    throw Error(ErrorKind::Degenerate, "theta must lie in (0, pi]");
  }
  if (!(lambda > 0.0)) throw Error(ErrorKind::Degenerate, "lambda must be positive");
  if (s < 1 || d < 1 || !(gamma > 0.0) || !(delta > 0.0) || c_max < 1 || !(eta > 0.0)) {
    throw Error(ErrorKind::Validation, "hyperparameter inputs must be positive");
  }
  Hyperparams hp;
  const double root_s = std::sqrt(static_cast<double>(s));
  hp.sigma = gamma / root_s;
  const double n_bound = (2.0 * std::numbers::pi / (0.23 * theta)) * std::log(static_cast<double>(c_max) / delta);
  hp.n_min = std::max(1, smallest_integer_above(n_bound));
  hp.T_min = smallest_integer_above(2.0 * root_s * hp.sigma * d / (eta * lambda));
  return hp;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& matrix) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < matrix.cols(); ++c) row.push_back(matrix(r, c));
    rows.push_back(std::move(row));
  }
  return {{"rows", matrix.rows()}, {"cols", matrix.cols()}, {"data", std::move(rows)}};
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& doc) {
  const auto rows = doc.at("rows").get<Eigen::Index>();
  const auto cols = doc.at("cols").get<Eigen::Index>();
  const auto& data = doc.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows) throw Error(ErrorKind::Validation, "matrix row count mismatch");
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = data.at(static_cast<std::size_t>(r));
    if (static_cast<Eigen::Index>(row.size()) != cols) throw Error(ErrorKind::Validation, "matrix column count mismatch");
    for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return out;
}

nlohmann::json config_to_json(const TrainConfig& config) {
  return {{"eta", config.eta},
          {"T", config.T},
          {"sigma", config.sigma},
          {"n", config.n},
          {"gradient_mode", config.mode == GradientMode::ExactPopulation ? "exact" : "empirical"},
          {"batch", config.batch},
          {"seed", config.seed}};
}

TrainConfig config_from_json(const nlohmann::json& doc) {
  TrainConfig config;
  config.eta = doc.at("eta").get<double>();
  config.T = doc.at("T").get<int>();
  config.sigma = doc.at("sigma").get<double>();
  config.n = doc.at("n").get<int>();
  config.mode = doc.at("gradient_mode").get<std::string>() == "exact" ? GradientMode::ExactPopulation
                                                                       : GradientMode::Empirical;
  config.batch = doc.at("batch").get<std::size_t>();
  config.seed = doc.at("seed").get<std::uint64_t>();
  return config;
}

nlohmann::json checkpoint_to_json(const TwoLayerNet& net, const TrainConfig& config) {
  nlohmann::json W = nlohmann::json::array();
  for (const auto& block : net.W) W.push_back(matrix_to_json(block));
  return {{"format", "dlc-tlgd-checkpoint"}, {"version", 1}, {"config", config_to_json(config)},
          {"K", matrix_to_json(net.K)},       {"W", std::move(W)}};
}

TwoLayerNet checkpoint_from_json(const nlohmann::json& doc, TrainConfig* config) {
  if (doc.value("format", std::string()) != "dlc-tlgd-checkpoint") {
    throw Error(ErrorKind::Validation, "not a TLGD checkpoint");
  }
  TwoLayerNet net;
  net.K = matrix_from_json(doc.at("K"));
  for (const auto& block : doc.at("W")) net.W.push_back(matrix_from_json(block));
  for (const auto& block : net.W) {
    if (block.rows() != net.K.cols() || block.cols() != net.W.front().cols()) {
      throw Error(ErrorKind::Validation, "checkpoint weight shapes are inconsistent");
    }
  }
  if (config) *config = config_from_json(doc.at("config"));
  return net;
}

void save_checkpoint(const TwoLayerNet& net, const TrainConfig& config, const std::filesystem::path& path) {
  io::write_text(path, checkpoint_to_json(net, config).dump() + "\n");
}

TwoLayerNet load_checkpoint(const std::filesystem::path& path, TrainConfig* config) {
  return checkpoint_from_json(nlohmann::json::parse(io::read_text(path)), config);
}

nlohmann::json metrics_record(const StepMetrics& metrics) {
  nlohmann::json rec{{"schema", 1}, {"step", metrics.step}};
  rec["loss"] = metrics.loss ? nlohmann::json(*metrics.loss) : nlohmann::json(nullptr);
  if (metrics.gaps) {
    rec["max_within_gap"] = metrics.gaps->max_within;
    rec["min_cross_gap"] = std::isfinite(metrics.gaps->min_cross) ? nlohmann::json(metrics.gaps->min_cross)
                                                                 : nlohmann::json(nullptr);
  }
  return rec;
}

std::string metrics_jsonl(const std::vector<StepMetrics>& metrics) {
  std::string out;
  for (const auto& m : metrics) out += metrics_record(m).dump() + "\n";
  return out;
}

}  // namespace dlc::tlgd
