#pragma once

#include "dlc/layout.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstddef>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <vector>

/// Patch extraction, CLUSTER_gamma and orthonormal patch mappings.
namespace dlc::patches {

/// Non-overlapping patches of a (channels x positions) tensor. Column j holds
/// patch j: the channel vectors of its s positions concatenated in block order.
struct PatchMatrix {
  Eigen::MatrixXd columns;
  std::size_t channels = 1;
  std::size_t patch_len = 1;
  std::size_t positions = 0;  // positions of the source tensor
  Geometry geometry = Geometry::OneD;
};

/// Only stride == patch_len is supported; anything else is a shape error.
PatchMatrix im2col(const Eigen::MatrixXd& tensor, std::size_t patch_len, std::size_t stride, Geometry geometry);
PatchMatrix im2col(std::span<const double> image, std::size_t patch_len, std::size_t stride, Geometry geometry);
/// Inverse of im2col: rebuilds the (channels x positions) tensor.
Eigen::MatrixXd col2im(const PatchMatrix& patches);

/// s-pixel blocks of a latent image, one per parent pixel, in parent order.
std::vector<std::vector<int>> extract_blocks(std::span<const int> image, std::size_t patch_len, Geometry geometry);

enum class MappingKind { Leader, Centroid };

/// Patch -> standard basis vector e_cluster in R^ell.
///
/// Leader mappings send a patch to the first representative within gamma
/// (strictly). Centroid mappings send it to the representative with the
/// highest cosine similarity.
class PatchMapping {
 public:
  PatchMapping() = default;
  PatchMapping(MappingKind kind, double gamma, std::vector<Eigen::VectorXd> representatives);

  MappingKind kind() const { return kind_; }
  double gamma() const { return gamma_; }
  std::size_t ell() const { return reps_.size(); }
  std::size_t dim() const { return reps_.empty() ? 0 : static_cast<std::size_t>(reps_.front().size()); }
  const std::vector<Eigen::VectorXd>& representatives() const { return reps_; }

  /// Cluster of `patch`; nullopt for a leader mapping when no representative is within gamma.
  std::optional<std::size_t> lookup(const Eigen::Ref<const Eigen::VectorXd>& patch) const;
  std::size_t nearest(const Eigen::Ref<const Eigen::VectorXd>& patch) const;
  Eigen::VectorXd basis_vector(std::size_t cluster) const;

 private:
  MappingKind kind_ = MappingKind::Leader;
  double gamma_ = 0.0;
  std::vector<Eigen::VectorXd> reps_;
};

struct Clustering {
  PatchMapping mapping;
  std::vector<std::size_t> assignment;  // cluster per input patch, input order
};

/// Greedy leader clustering in input order: a patch joins the first cluster
/// whose leader is closer than gamma, otherwise it founds a new cluster.
/// When every pair is either < gamma or > 2*gamma apart, same-cluster pairs are
/// exactly the < gamma pairs. Pairs inside [gamma, 2*gamma] carry no guarantee.
/// `max_clusters` > 0 aborts with a Degenerate error once more leaders than
/// that would be needed.
Clustering cluster_gamma(std::span<const Eigen::VectorXd> patches, double gamma, std::size_t max_clusters = 0);
Clustering cluster_gamma(const Eigen::MatrixXd& columns, double gamma, std::size_t max_clusters = 0);

/// Spherical k-means under cosine distance. The first centroid is a seeded
/// random patch, the rest are chosen farthest-first. Empty clusters are dropped,
/// so the result may have fewer than `ell` clusters.
Clustering cluster_centroid(std::span<const Eigen::VectorXd> patches, std::size_t ell, std::mt19937_64& rng,
                            int max_iterations = 100);

enum class UnseenPolicy { Strict, Lenient };

struct MappedTensor {
  Eigen::MatrixXd values;                    // ell x patches, one basis vector per column
  std::vector<std::size_t> clusters;         // cluster per column
  std::vector<std::size_t> lenient_columns;  // columns resolved by nearest representative
};

/// phi * A: every non-overlapping patch of A replaced by its cluster vector.
MappedTensor apply_mapping(const PatchMapping& phi, const PatchMatrix& patches, UnseenPolicy policy);
MappedTensor apply_mapping(const PatchMapping& phi, const Eigen::MatrixXd& tensor, std::size_t patch_len,
                           Geometry geometry, UnseenPolicy policy);

nlohmann::json mapping_to_json(const PatchMapping& phi);
PatchMapping mapping_from_json(const nlohmann::json& doc);
void save_mapping(const PatchMapping& phi, const std::filesystem::path& path);
PatchMapping load_mapping(const std::filesystem::path& path);

}  // namespace dlc::patches
