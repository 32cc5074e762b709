#include "dlc/pipeline.hpp"

#include "dlc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace dlc::pipeline {

namespace {

constexpr std::size_t kMaxProbeClusters = 1024;

std::uint64_t level_seed(std::uint64_t seed, int level) {
  // splitmix64 finalizer, so neighbouring (seed, level) pairs give unrelated streams
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(level) + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Distinct keys in first-occurrence order, plus the per-item key id.
template <typename Key>
struct Dedupe {
  std::map<Key, std::size_t> ids;
  std::vector<const Key*> order;

  std::size_t insert(Key key) {
    auto [it, fresh] = ids.emplace(std::move(key), ids.size());
    if (fresh) order.push_back(&it->first);
    return it->second;
  }
};

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& K, const std::vector<std::size_t>& clusters) {
  Eigen::MatrixXd h(K.cols(), static_cast<Eigen::Index>(clusters.size()));
  for (std::size_t j = 0; j < clusters.size(); ++j) {
    h.col(static_cast<Eigen::Index>(j)) = K.row(static_cast<Eigen::Index>(clusters[j])).transpose();
  }
  return h;
}

patches::MappedTensor map_block(const patches::PatchMapping& phi, const Eigen::MatrixXd& h, std::size_t patch_len,
                                Geometry geometry, patches::UnseenPolicy policy, std::size_t block) {
  try {
    return patches::apply_mapping(phi, h, patch_len, geometry, policy);
  } catch (const UnseenPatch& e) {
    throw UnseenPatch(e.patch_index(), block);
  }
}

}  // namespace

bool ModelShape::binary() const {
  return labels.size() == 2 && std::count(labels.begin(), labels.end(), 1) == 1 &&
         std::count(labels.begin(), labels.end(), -1) == 1;
}

std::size_t ModelShape::image_size(int level) const {
  std::size_t size = static_cast<std::size_t>(m);
  for (int l = 0; l < level; ++l) size *= static_cast<std::size_t>(s);
  return size;
}

std::size_t ModelShape::label_index(int label) const {
  const auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) throw Error(ErrorKind::Validation, "unknown label " + std::to_string(label));
  return static_cast<std::size_t>(it - labels.begin());
}

ModelShape shape_of(const hiergen::HierarchySpec& spec) {
  return ModelShape{spec.geometry, spec.k, spec.m, spec.s, spec.labels};
}

void validate(const DeepParams& params) {
  if (!(params.gamma > 0.0)) throw Error(ErrorKind::Validation, "gamma must be positive");
  if (!(params.eta > 0.0)) throw Error(ErrorKind::Validation, "eta must be positive");
  if (!(params.sigma > 0.0)) throw Error(ErrorKind::Validation, "sigma must be positive");
  if (params.T < 0) throw Error(ErrorKind::Validation, "T must be non-negative");
  if (params.n < 1) throw Error(ErrorKind::Validation, "n must be at least 1");
  if (!(params.epsilon > 0.0)) throw Error(ErrorKind::Validation, "epsilon must be positive");
  if (params.cls_iterations < 0 || !(params.cls_rate > 0.0)) {
    throw Error(ErrorKind::Validation, "classifier budget and rate must be positive");
  }
}

int Classifier::predict(const Eigen::Ref<const Eigen::VectorXd>& features) const {
  if (features.size() != weights.cols()) throw Error(ErrorKind::Shape, "feature vector has the wrong size");
  const Eigen::VectorXd scores = weights * features + bias;
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < scores.size(); ++i) {
    if (scores(i) > scores(best)) best = i;
  }
  return labels.at(static_cast<std::size_t>(best));
}

Eigen::VectorXd top_features(const patches::PatchMapping& top_phi, const std::vector<std::size_t>& codes) {
  const std::size_t ell = top_phi.ell();
  Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ell * codes.size()));
  for (std::size_t j = 0; j < codes.size(); ++j) f(static_cast<Eigen::Index>(j * ell + codes[j])) = 1.0;
  return f;
}

Classifier train_cls(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                     const std::vector<int>& label_set, double epsilon, int iterations, double rate) {
  const FeatureMatrix sparse = features.sparseView(0.0, 0.0);
  return train_cls(sparse, labels, label_set, epsilon, iterations, rate);
}

Classifier train_cls(const FeatureMatrix& features, const std::vector<int>& labels,
                     const std::vector<int>& label_set, double epsilon, int iterations, double rate) {
  const auto N = static_cast<std::size_t>(features.rows());
  if (N == 0 || labels.size() != N) throw Error(ErrorKind::Validation, "classifier needs one label per example");
  const auto L = static_cast<Eigen::Index>(label_set.size());
  Classifier cls;
  cls.labels = label_set;
  cls.weights = Eigen::MatrixXd::Zero(L, features.cols());
  cls.bias = Eigen::VectorXd::Zero(L);

  std::vector<Eigen::Index> target(N);
  for (std::size_t i = 0; i < N; ++i) {
    const auto it = std::find(label_set.begin(), label_set.end(), labels[i]);
    if (it == label_set.end()) throw Error(ErrorKind::Validation, "unknown label " + std::to_string(labels[i]));
    target[i] = it - label_set.begin();
  }
  if (std::all_of(target.begin(), target.end(), [&](Eigen::Index t) { return t == target.front(); })) {
    cls.constant = true;
    cls.bias(target.front()) = 1.0;
    return cls;
  }

  Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(N), L);
  for (std::size_t i = 0; i < N; ++i) Y(static_cast<Eigen::Index>(i), target[i]) = 1.0;

  auto training_error = [&](const Eigen::MatrixXd& scores) {
    std::size_t wrong = 0;
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
      Eigen::Index best = 0;
      for (Eigen::Index c = 1; c < L; ++c) {
        if (scores(i, c) > scores(i, best)) best = c;
      }
      if (best != target[static_cast<std::size_t>(i)]) ++wrong;
    }
    return static_cast<double>(wrong) / static_cast<double>(N);
  };

  for (int it = 0;; ++it) {
    Eigen::MatrixXd scores = features * cls.weights.transpose();
    scores.rowwise() += cls.bias.transpose();
    cls.train_error = training_error(scores);
    cls.iterations = it;
    if (cls.train_error <= epsilon / 2.0 || it == iterations) break;
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
      const double top = scores.row(i).maxCoeff();
      scores.row(i) = (scores.row(i).array() - top).exp().matrix();
      scores.row(i) /= scores.row(i).sum();
    }
    const Eigen::MatrixXd residual = (scores - Y) / static_cast<double>(N);
    cls.weights -= rate * (residual.transpose() * features);
    cls.bias -= rate * residual.colwise().sum().transpose();
  }
  return cls;
}

DeepModel train_deep(const std::vector<Example>& data, const ModelShape& shape, const DeepParams& params,
                     TrainReport* report) {
  validate(params);
  if (data.empty()) throw Error(ErrorKind::Validation, "training set is empty");
  if (shape.k < 1 || shape.m < 1 || shape.s < 2) throw Error(ErrorKind::Validation, "invalid model shape");
  if (shape.labels.size() < 2) throw Error(ErrorKind::Validation, "at least two labels are required");

  const std::size_t N = data.size();
  const std::size_t s = static_cast<std::size_t>(shape.s);
  std::vector<std::size_t> label_idx(N);
  bool chains = true;
  for (std::size_t e = 0; e < N; ++e) {
    if (data[e].observed.size() != shape.image_size(shape.k)) {
      throw Error(ErrorKind::Shape, "example " + std::to_string(e) + " has the wrong observed size");
    }
    label_idx[e] = shape.label_index(data[e].label);
    chains = chains && data[e].latent.size() >= static_cast<std::size_t>(shape.k);
  }

  DeepModel model;
  model.shape = shape;
  model.params = params;
  TrainReport local;
  TrainReport& rep = report ? *report : local;
  rep = TrainReport{};

  // Level k: cluster the observed patches.
  std::vector<std::vector<std::size_t>> codes(N);
  patches::PatchMapping phi;
  std::size_t unique_count = 0;
  {
    const auto table = block_table(shape.geometry, shape.image_size(shape.k - 1), s);
    Dedupe<std::vector<double>> seen;
    std::vector<std::vector<std::size_t>> ids(N);
    for (std::size_t e = 0; e < N; ++e) {
      ids[e].reserve(table.size());
      for (const auto& block : table) {
        std::vector<double> patch;
        patch.reserve(s);
        for (std::size_t pos : block) patch.push_back(data[e].observed[pos]);
        ids[e].push_back(seen.insert(std::move(patch)));
      }
    }
    std::vector<Eigen::VectorXd> uniq;
    for (const auto* key : seen.order) {
      uniq.emplace_back(Eigen::Map<const Eigen::VectorXd>(key->data(), static_cast<Eigen::Index>(key->size())));
    }
    auto clustering = patches::cluster_gamma(uniq, params.gamma, params.max_clusters);
    for (std::size_t e = 0; e < N; ++e) {
      codes[e].reserve(ids[e].size());
      for (std::size_t id : ids[e]) codes[e].push_back(clustering.assignment[id]);
    }
    phi = std::move(clustering.mapping);
    unique_count = uniq.size();
  }

  const bool binary = shape.binary();
  const std::size_t blocks = binary ? 1 : shape.labels.size();

  for (int level = shape.k; level >= 1; --level) {
    const std::size_t ell = phi.ell();
    const std::size_t width = shape.image_size(level - 1);

    LevelReport lr;
    lr.level = level;
    lr.ell = ell;
    lr.unique_patches = unique_count;
    lr.single_cluster = ell == 1 && unique_count > 1;

    tlgd::TrainConfig config;
    config.eta = params.eta;
    config.T = params.T;
    config.sigma = params.sigma;
    config.n = params.n;
    config.mode = params.mode;
    config.batch = params.batch;
    config.seed = level_seed(params.seed, level);

    // Gap diagnostics cost O(ell^2 n) per step, so they are only tracked
    // while the cluster count stays small.
    tlgd::ClassProbes probes;
    const bool track_gaps = chains && ell <= kMaxProbeClusters;
    if (track_gaps) {
      std::map<int, std::set<std::size_t>> by_class;
      for (std::size_t e = 0; e < N; ++e) {
        const auto& parent = data[e].latent[static_cast<std::size_t>(level - 1)];
        for (std::size_t j = 0; j < width; ++j) by_class[parent[j]].insert(codes[e][j]);
      }
      for (const auto& [c, clusters] : by_class) {
        std::vector<Eigen::VectorXd> group;
        for (std::size_t q : clusters) {
          group.push_back(Eigen::VectorXd::Unit(static_cast<Eigen::Index>(ell), static_cast<Eigen::Index>(q)));
        }
        probes.groups.push_back(std::move(group));
      }
    }

    tlgd::GradientSource source;
    if (params.mode == tlgd::GradientMode::ExactPopulation) {
      tlgd::Moments moments(shape.labels, ell, width);
      for (std::size_t e = 0; e < N; ++e) moments.add_onehot(codes[e], label_idx[e], 1.0);
      moments.normalize();
      source = std::move(moments);
    } else {
      source = tlgd::BatchSampler([&](std::size_t batch, tlgd::Rng& rng) {
        std::uniform_int_distribution<std::size_t> pick(0, N - 1);
        tlgd::Moments moments(shape.labels, ell, width);
        for (std::size_t b = 0; b < batch; ++b) {
          const std::size_t e = pick(rng);
          moments.add_onehot(codes[e], label_idx[e], 1.0);
        }
        moments.normalize();
        return moments;
      });
    }
    auto trained = tlgd::train(config, ell, width, blocks, source, track_gaps ? &probes : nullptr);
    lr.metrics = std::move(trained.metrics);
    rep.levels.push_back(std::move(lr));

    LayerBlock block;
    block.level = level;
    block.phi = std::move(phi);
    block.net = std::move(trained.net);
    block.config = config;
    const Eigen::MatrixXd& K = block.net.K;
    const auto n = static_cast<std::size_t>(K.cols());

    // Patches of h_{level-1} = K^T (phi * h_level): s-tuples of cluster codes
    // (size-1 patches at the top).
    const std::size_t patch_len = level > 1 ? s : 1;
    const std::size_t next_width = level > 1 ? shape.image_size(level - 2) : width;
    const auto table = level > 1 ? block_table(shape.geometry, next_width, s)
                                 : block_table(Geometry::OneD, width, 1);
    Dedupe<std::vector<std::size_t>> seen;
    std::vector<std::vector<std::size_t>> ids(N);
    for (std::size_t e = 0; e < N; ++e) {
      ids[e].reserve(next_width);
      for (const auto& positions : table) {
        std::vector<std::size_t> tuple;
        tuple.reserve(patch_len);
        for (std::size_t pos : positions) tuple.push_back(codes[e][pos]);
        ids[e].push_back(seen.insert(std::move(tuple)));
      }
    }
    std::vector<Eigen::VectorXd> uniq;
    for (const auto* key : seen.order) {
      Eigen::VectorXd v(static_cast<Eigen::Index>(n * key->size()));
      for (std::size_t a = 0; a < key->size(); ++a) {
        v.segment(static_cast<Eigen::Index>(a * n), static_cast<Eigen::Index>(n)) =
            K.row(static_cast<Eigen::Index>((*key)[a])).transpose();
      }
      uniq.push_back(std::move(v));
    }
    auto clustering = patches::cluster_gamma(uniq, params.gamma, params.max_clusters);
    for (std::size_t e = 0; e < N; ++e) {
      codes[e].assign(ids[e].size(), 0);
      for (std::size_t j = 0; j < ids[e].size(); ++j) codes[e][j] = clustering.assignment[ids[e][j]];
    }
    phi = std::move(clustering.mapping);
    unique_count = uniq.size();
    model.blocks.push_back(std::move(block));
  }

  model.top_phi = std::move(phi);
  LevelReport top;
  top.level = 0;
  top.ell = model.top_phi.ell();
  top.unique_patches = unique_count;
  top.single_cluster = top.ell == 1 && unique_count > 1;
  rep.levels.push_back(std::move(top));

  const std::size_t ell0 = model.top_phi.ell();
  FeatureMatrix features(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(ell0 * static_cast<std::size_t>(shape.m)));
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(N * static_cast<std::size_t>(shape.m));
  std::vector<int> labels(N);
  for (std::size_t e = 0; e < N; ++e) {
    for (std::size_t j = 0; j < codes[e].size(); ++j) {
      entries.emplace_back(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(j * ell0 + codes[e][j]), 1.0);
    }
    labels[e] = data[e].label;
  }
  features.setFromTriplets(entries.begin(), entries.end());
  model.classifier =
      train_cls(features, labels, shape.labels, params.epsilon, params.cls_iterations, params.cls_rate);
  rep.cls_iterations = model.classifier.iterations;
  rep.cls_train_error = model.classifier.train_error;
  rep.cls_constant = model.classifier.constant;
  return model;
}

Eigen::MatrixXd forward_partial(const DeepModel& model, std::span<const double> observed, std::size_t blocks,
                                patches::UnseenPolicy policy) {
  if (blocks > model.blocks.size()) throw Error(ErrorKind::Validation, "model has fewer blocks than requested");
  if (observed.size() != model.shape.image_size(model.shape.k)) {
    throw Error(ErrorKind::Shape, "observed image has the wrong size");
  }
  Eigen::MatrixXd h = Eigen::Map<const Eigen::RowVectorXd>(observed.data(), static_cast<Eigen::Index>(observed.size()));
  for (std::size_t b = 0; b < blocks; ++b) {
    const auto& block = model.blocks[b];
    auto mapped = map_block(block.phi, h, static_cast<std::size_t>(model.shape.s), model.shape.geometry, policy, b);
    h = gather_rows(block.net.K, mapped.clusters);
  }
  return h;
}

std::vector<std::vector<std::size_t>> mapped_codes(const DeepModel& model, std::span<const double> observed,
                                                   patches::UnseenPolicy policy, std::size_t* lenient) {
  if (observed.size() != model.shape.image_size(model.shape.k)) {
    throw Error(ErrorKind::Shape, "observed image has the wrong size");
  }
  std::vector<std::vector<std::size_t>> out;
  Eigen::MatrixXd h = Eigen::Map<const Eigen::RowVectorXd>(observed.data(), static_cast<Eigen::Index>(observed.size()));
  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    const auto& block = model.blocks[b];
    auto mapped = map_block(block.phi, h, static_cast<std::size_t>(model.shape.s), model.shape.geometry, policy, b);
    if (lenient) *lenient += mapped.lenient_columns.size();
    h = gather_rows(block.net.K, mapped.clusters);
    out.push_back(std::move(mapped.clusters));
  }
  auto top = map_block(model.top_phi, h, 1, Geometry::OneD, policy, model.blocks.size());
  if (lenient) *lenient += top.lenient_columns.size();
  out.push_back(std::move(top.clusters));
  return out;
}

int predict(const DeepModel& model, std::span<const double> observed, patches::UnseenPolicy policy) {
  const auto codes = mapped_codes(model, observed, policy);
  return model.classifier.predict(top_features(model.top_phi, codes.back()));
}

Evaluation evaluate(const DeepModel& model, const std::vector<Example>& data, patches::UnseenPolicy policy) {
  if (data.empty()) throw Error(ErrorKind::Validation, "evaluation set is empty");
  Evaluation eval;
  eval.labels = model.shape.labels;
  const std::size_t L = eval.labels.size();
  eval.confusion.assign(L, std::vector<std::size_t>(L, 0));
  for (const auto& ex : data) {
    const auto codes = mapped_codes(model, ex.observed, policy, &eval.lenient_patches);
    const int predicted = model.classifier.predict(top_features(model.top_phi, codes.back()));
    const std::size_t truth = model.shape.label_index(ex.label);
    eval.confusion[truth][model.shape.label_index(predicted)] += 1;
    if (predicted == ex.label) ++eval.correct;
    ++eval.count;
  }
  eval.accuracy = static_cast<double>(eval.correct) / static_cast<double>(eval.count);
  return eval;
}

nlohmann::json evaluation_to_json(const Evaluation& eval) {
  return {{"schema", 1},
          {"record", "evaluation"},
          {"count", eval.count},
          {"correct", eval.correct},
          {"accuracy", eval.accuracy},
          {"labels", eval.labels},
          {"confusion", eval.confusion},
          {"lenient_patches", eval.lenient_patches}};
}

nlohmann::json report_to_json(const TrainReport& report) {
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& lr : report.levels) {
    nlohmann::json rec{{"level", lr.level},
                       {"ell", lr.ell},
                       {"unique_patches", lr.unique_patches},
                       {"single_cluster", lr.single_cluster}};
    if (!lr.metrics.empty()) {
      const auto& last = lr.metrics.back();
      rec["final"] = tlgd::metrics_record(last);
    }
    levels.push_back(std::move(rec));
  }
  return {{"schema", 1},
          {"record", "train"},
          {"levels", std::move(levels)},
          {"cls_iterations", report.cls_iterations},
          {"cls_train_error", report.cls_train_error},
          {"cls_constant", report.cls_constant}};
}

}  // namespace dlc::pipeline
