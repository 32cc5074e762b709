#include "dlc/patches.hpp"

#include "dlc/errors.hpp"
#include "dlc/spec_io.hpp"

#include <algorithm>
#include <limits>

namespace dlc::patches {

PatchMatrix im2col(const Eigen::MatrixXd& tensor, std::size_t patch_len, std::size_t stride, Geometry geometry) {
  if (stride != patch_len) {
    throw Error(ErrorKind::Shape, "only non-overlapping patches (stride == patch length) are supported");
  }
  const auto positions = static_cast<std::size_t>(tensor.cols());
  const auto channels = static_cast<std::size_t>(tensor.rows());
  check_tiling(geometry, positions, patch_len);
  const std::size_t count = positions / patch_len;

  PatchMatrix out;
  out.channels = channels;
  out.patch_len = patch_len;
  out.positions = positions;
  out.geometry = geometry;
  out.columns.resize(static_cast<Eigen::Index>(channels * patch_len), static_cast<Eigen::Index>(count));
  if (count == 0) return out;
  const auto table = block_table(geometry, count, patch_len);
  for (std::size_t j = 0; j < count; ++j) {
    for (std::size_t a = 0; a < patch_len; ++a) {
      out.columns.block(static_cast<Eigen::Index>(a * channels), static_cast<Eigen::Index>(j),
                        static_cast<Eigen::Index>(channels), 1) = tensor.col(static_cast<Eigen::Index>(table[j][a]));
    }
  }
  return out;
}

PatchMatrix im2col(std::span<const double> image, std::size_t patch_len, std::size_t stride, Geometry geometry) {
  Eigen::MatrixXd tensor = Eigen::Map<const Eigen::RowVectorXd>(image.data(), static_cast<Eigen::Index>(image.size()));
  return im2col(tensor, patch_len, stride, geometry);
}

Eigen::MatrixXd col2im(const PatchMatrix& patches) {
  Eigen::MatrixXd tensor(static_cast<Eigen::Index>(patches.channels), static_cast<Eigen::Index>(patches.positions));
  const std::size_t count = static_cast<std::size_t>(patches.columns.cols());
  if (count == 0) return tensor;
  const auto table = block_table(patches.geometry, count, patches.patch_len);
  const auto ch = static_cast<Eigen::Index>(patches.channels);
  for (std::size_t j = 0; j < count; ++j) {
    for (std::size_t a = 0; a < patches.patch_len; ++a) {
      tensor.col(static_cast<Eigen::Index>(table[j][a])) =
          patches.columns.block(static_cast<Eigen::Index>(a) * ch, static_cast<Eigen::Index>(j), ch, 1);
    }
  }
  return tensor;
}

std::vector<std::vector<int>> extract_blocks(std::span<const int> image, std::size_t patch_len, Geometry geometry) {
  check_tiling(geometry, image.size(), patch_len);
  const std::size_t count = image.size() / patch_len;
  std::vector<std::vector<int>> out(count);
  if (count == 0) return out;
  const auto table = block_table(geometry, count, patch_len);
  for (std::size_t j = 0; j < count; ++j) {
    out[j].reserve(patch_len);
    for (std::size_t pos : table[j]) out[j].push_back(image[pos]);
  }
  return out;
}

PatchMapping::PatchMapping(MappingKind kind, double gamma, std::vector<Eigen::VectorXd> representatives)
    : kind_(kind), gamma_(gamma), reps_(std::move(representatives)) {
  for (const auto& r : reps_) {
    if (r.size() != reps_.front().size()) throw Error(ErrorKind::Shape, "representatives differ in dimension");
  }
}

std::optional<std::size_t> PatchMapping::lookup(const Eigen::Ref<const Eigen::VectorXd>& patch) const {
  if (kind_ == MappingKind::Centroid) {
    if (reps_.empty()) return std::nullopt;
    return nearest(patch);
  }
  if (!reps_.empty() && patch.size() != reps_.front().size()) {
    throw Error(ErrorKind::Shape, "patch dimension does not match the mapping");
  }
  const double limit = gamma_ * gamma_;
  for (std::size_t i = 0; i < reps_.size(); ++i) {
    if ((reps_[i] - patch).squaredNorm() < limit) return i;
  }
  return std::nullopt;
}

std::size_t PatchMapping::nearest(const Eigen::Ref<const Eigen::VectorXd>& patch) const {
  if (reps_.empty()) throw Error(ErrorKind::Shape, "mapping has no representatives");
  if (patch.size() != reps_.front().size()) throw Error(ErrorKind::Shape, "patch dimension does not match the mapping");
  std::size_t best = 0;
  if (kind_ == MappingKind::Centroid) {
    const double norm = patch.norm();
    double best_cos = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < reps_.size(); ++i) {
      const double cosine = norm > 0.0 ? reps_[i].dot(patch) / (reps_[i].norm() * norm) : 0.0;
      if (cosine > best_cos) {
        best_cos = cosine;
        best = i;
      }
    }
    return best;
  }
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < reps_.size(); ++i) {
    const double dist = (reps_[i] - patch).squaredNorm();
    if (dist < best_dist) {
      best_dist = dist;
      best = i;
    }
  }
  return best;
}

Eigen::VectorXd PatchMapping::basis_vector(std::size_t cluster) const {
  if (cluster >= ell()) throw Error(ErrorKind::Shape, "cluster index out of range");
  return Eigen::VectorXd::Unit(static_cast<Eigen::Index>(ell()), static_cast<Eigen::Index>(cluster));
}

Clustering cluster_gamma(std::span<const Eigen::VectorXd> patches, double gamma, std::size_t max_clusters) {
  if (!(gamma > 0.0)) throw Error(ErrorKind::Validation, "gamma must be positive");
  std::vector<Eigen::VectorXd> leaders;
  Clustering out;
  out.assignment.reserve(patches.size());
  const double limit = gamma * gamma;
  for (const auto& p : patches) {
    if (!leaders.empty() && p.size() != leaders.front().size()) {
      throw Error(ErrorKind::Shape, "patches differ in dimension");
    }
    std::size_t cluster = leaders.size();
    for (std::size_t i = 0; i < leaders.size(); ++i) {
      if ((leaders[i] - p).squaredNorm() < limit) {
        cluster = i;
        break;
      }
    }
    if (cluster == leaders.size()) {
      if (max_clusters > 0 && leaders.size() == max_clusters) {
        throw Error(ErrorKind::Degenerate, "more than " + std::to_string(max_clusters) + " clusters at gamma " +
                                               std::to_string(gamma));
      }
      leaders.push_back(p);
    }
    out.assignment.push_back(cluster);
  }
  out.mapping = PatchMapping(MappingKind::Leader, gamma, std::move(leaders));
  return out;
}

Clustering cluster_gamma(const Eigen::MatrixXd& columns, double gamma, std::size_t max_clusters) {
  std::vector<Eigen::VectorXd> patches;
  patches.reserve(static_cast<std::size_t>(columns.cols()));
  for (Eigen::Index j = 0; j < columns.cols(); ++j) patches.emplace_back(columns.col(j));
  return cluster_gamma(patches, gamma, max_clusters);
}

Clustering cluster_centroid(std::span<const Eigen::VectorXd> patches, std::size_t ell, std::mt19937_64& rng,
                            int max_iterations) {
  if (ell == 0) throw Error(ErrorKind::Validation, "ell must be at least 1");
  Clustering out;
  if (patches.empty()) {
    out.mapping = PatchMapping(MappingKind::Centroid, 0.0, {});
    return out;
  }
  std::vector<Eigen::VectorXd> dirs;
  dirs.reserve(patches.size());
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const double norm = patches[i].norm();
    if (norm == 0.0) {
      throw Error(ErrorKind::Degenerate, "patch " + std::to_string(i) + " has zero norm; cosine distance is undefined");
    }
    dirs.push_back(patches[i] / norm);
  }
  const std::size_t k = std::min(ell, dirs.size());

  std::vector<Eigen::VectorXd> centroids;
  std::uniform_int_distribution<std::size_t> first(0, dirs.size() - 1);
  centroids.push_back(dirs[first(rng)]);
  while (centroids.size() < k) {
    std::size_t far = 0;
    double far_sim = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < dirs.size(); ++i) {
      double sim = -std::numeric_limits<double>::infinity();
      for (const auto& c : centroids) sim = std::max(sim, c.dot(dirs[i]));
      if (sim < far_sim) {
        far_sim = sim;
        far = i;
      }
    }
    centroids.push_back(dirs[far]);
  }

  std::vector<std::size_t> assign(dirs.size(), 0);
  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = iter == 0;
    for (std::size_t i = 0; i < dirs.size(); ++i) {
      std::size_t best = 0;
      double best_sim = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < centroids.size(); ++c) {
        const double sim = centroids[c].dot(dirs[i]);
        if (sim > best_sim) {
          best_sim = sim;
          best = c;
        }
      }
      if (assign[i] != best) changed = true;
      assign[i] = best;
    }
    if (!changed) break;
    std::vector<Eigen::VectorXd> sums(centroids.size(), Eigen::VectorXd::Zero(dirs.front().size()));
    for (std::size_t i = 0; i < dirs.size(); ++i) sums[assign[i]] += dirs[i];
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      const double norm = sums[c].norm();
      if (norm > 0.0) centroids[c] = sums[c] / norm;
    }
  }

  // Drop empty clusters and renumber in order of first use.
  std::vector<std::size_t> remap(centroids.size(), centroids.size());
  std::vector<Eigen::VectorXd> kept;
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    if (remap[assign[i]] == centroids.size()) {
      remap[assign[i]] = kept.size();
      kept.push_back(centroids[assign[i]]);
    }
    out.assignment.push_back(remap[assign[i]]);
  }
  out.mapping = PatchMapping(MappingKind::Centroid, 0.0, std::move(kept));
  return out;
}

MappedTensor apply_mapping(const PatchMapping& phi, const PatchMatrix& patches, UnseenPolicy policy) {
  MappedTensor out;
  const auto count = static_cast<std::size_t>(patches.columns.cols());
  out.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(phi.ell()), static_cast<Eigen::Index>(count));
  out.clusters.reserve(count);
  for (std::size_t j = 0; j < count; ++j) {
    const auto col = patches.columns.col(static_cast<Eigen::Index>(j));
    std::optional<std::size_t> cluster = phi.lookup(col);
    if (!cluster) {
      if (policy == UnseenPolicy::Strict || phi.ell() == 0) throw UnseenPatch(j);
      cluster = phi.nearest(col);
      out.lenient_columns.push_back(j);
    }
    out.values(static_cast<Eigen::Index>(*cluster), static_cast<Eigen::Index>(j)) = 1.0;
    out.clusters.push_back(*cluster);
  }
  return out;
}

MappedTensor apply_mapping(const PatchMapping& phi, const Eigen::MatrixXd& tensor, std::size_t patch_len,
                           Geometry geometry, UnseenPolicy policy) {
  return apply_mapping(phi, im2col(tensor, patch_len, patch_len, geometry), policy);
}

nlohmann::json mapping_to_json(const PatchMapping& phi) {
  nlohmann::json doc;
  doc["format"] = "dlc-patch-mapping";
  doc["version"] = 1;
  doc["kind"] = phi.kind() == MappingKind::Leader ? "leader" : "centroid";
  doc["gamma"] = phi.gamma();
  doc["ell"] = phi.ell();
  nlohmann::json reps = nlohmann::json::array();
  for (const auto& r : phi.representatives()) reps.push_back(std::vector<double>(r.data(), r.data() + r.size()));
  doc["representatives"] = std::move(reps);
  return doc;
}

PatchMapping mapping_from_json(const nlohmann::json& doc) {
  if (doc.value("format", std::string()) != "dlc-patch-mapping") {
    throw Error(ErrorKind::Validation, "not a patch mapping document");
  }
  const auto kind = doc.at("kind").get<std::string>() == "leader" ? MappingKind::Leader : MappingKind::Centroid;
  std::vector<Eigen::VectorXd> reps;
  for (const auto& r : doc.at("representatives")) {
    auto values = r.get<std::vector<double>>();
    reps.emplace_back(Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())));
  }
  if (reps.size() != doc.at("ell").get<std::size_t>()) throw Error(ErrorKind::Validation, "ell does not match representatives");
  return PatchMapping(kind, doc.at("gamma").get<double>(), std::move(reps));
}

void save_mapping(const PatchMapping& phi, const std::filesystem::path& path) {
  io::write_text(path, mapping_to_json(phi).dump() + "\n");
}

PatchMapping load_mapping(const std::filesystem::path& path) {
  return mapping_from_json(nlohmann::json::parse(io::read_text(path)));
}

}  // namespace dlc::patches
