#pragma once

#include "dlc/layout.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

/// Hierarchical generative image model: specification, validation, sampling,
/// exact enumeration and the mean-image analytics that drive layerwise training.
namespace dlc::hiergen {

/// Latent image: one class index (into C_level) per pixel.
using Image = std::vector<int>;
/// Observed image over the reals.
using RealImage = std::vector<double>;

using Rng = std::mt19937_64;
using BigInt = boost::multiprecision::cpp_int;

struct ClassId {
  int level = 0;
  int index = 0;
  friend auto operator<=>(const ClassId&, const ClassId&) = default;
};

struct WeightedImage {
  Image image;  // length m, entries index C_0
  double probability = 0.0;
};

/// Full description of a generative model.
///
/// Level kappa in [0, k) has classes C_kappa. Every class c of level kappa owns
/// d patches of s pixels: over C_{kappa+1} when kappa < k-1 (`latent_patches`),
/// over the reals when kappa == k-1 (`observed_patches`).
struct HierarchySpec {
  int version = 1;
  std::string name;
  int k = 1;
  int m = 1;
  int s = 2;
  int d = 1;
  Geometry geometry = Geometry::OneD;
  std::vector<int> labels;
  std::vector<std::vector<std::string>> class_names;              // [level][class]
  std::vector<std::vector<WeightedImage>> label_dists;            // [label index]
  std::vector<std::vector<std::vector<Image>>> latent_patches;    // [level < k-1][class][j]
  std::vector<std::vector<RealImage>> observed_patches;           // [class of C_{k-1}][j]

  /// Labels are exactly {+1, -1}; mean images and theta/lambda need this.
  bool binary() const;
  std::size_t image_size(int level) const;
  std::size_t num_classes(int level) const;
  /// Patch j of class c at `level`, as reals (class indices are widened).
  std::vector<double> patch_values(int level, int c, int j) const;
  int label_index(int label) const;
};

enum class ViolationKind {
  Shape,
  Normalization,
  Disjointness,
  PatchSetSize,
  Membership,
};

struct Violation {
  ViolationKind kind;
  std::string message;
};

/// Every invariant violation of `spec`; empty when the spec is valid.
std::vector<Violation> validate_spec(const HierarchySpec& spec);
/// Throws Error(Validation) listing the violations, if any.
void require_valid(const HierarchySpec& spec);

/// A sampled example with its latent chain. `latent[kappa]` is x^(kappa) for the
/// levels that were generated; `observed` is x^(k) (empty for truncated chains).
struct Example {
  int label = 0;
  std::vector<Image> latent;
  RealImage observed;
};

Example sample_example(const HierarchySpec& spec, Rng& rng);
std::vector<Example> sample_dataset(const HierarchySpec& spec, std::size_t n, Rng& rng);
std::vector<Example> sample_dataset(const HierarchySpec& spec, std::size_t n, std::uint64_t seed);

struct Outcome {
  Example example;  // chain truncated at the enumerated level
  double probability = 0.0;
};

inline constexpr double kDefaultEnumerationBound = 1e6;

/// Number of (image, label) outcomes the enumeration at `level` would produce.
BigInt support_size(const HierarchySpec& spec, int level);

/// Exact distribution G_level. Throws EnumerationTooLarge above `bound` outcomes.
std::vector<Outcome> enumerate_support(const HierarchySpec& spec, int level,
                                       double bound = kDefaultEnumerationBound);

/// Number of distinct generable images at `level`, summed over labels.
BigInt count_distinct(const HierarchySpec& spec, int level);

/// P(x^(level)_pos = c | label) as [pos][class], by exact marginal propagation.
std::vector<std::vector<double>> class_marginals(const HierarchySpec& spec, std::size_t label_index, int level);

struct MeanImage {
  ClassId class_id;
  std::vector<double> values;  // length m * s^level, entries in [-1, 1]
};

/// Exact v_c = E[-y F_c(z)] over G_level. Computed by propagating per-pixel
/// class marginals down the hierarchy, so it never enumerates the support.
/// Binary specs only.
MeanImage mean_image(const HierarchySpec& spec, ClassId c);

struct SampledMeanImage {
  MeanImage mean;
  std::vector<double> standard_error;
  std::size_t samples = 0;
};

/// Monte Carlo estimate of v_c from `samples` draws of the sampler.
SampledMeanImage mean_image_sampled(const HierarchySpec& spec, ClassId c, std::size_t samples,
                                    Rng& rng);

struct SpecAnalytics {
  std::optional<double> theta;   // min angle between mean images of one level
  std::optional<double> lambda;  // min mean-image norm
  double delta_min = 0.0;        // min distance between distinct observed patches
  std::vector<MeanImage> mean_images;
  int max_classes = 0;           // max_{kappa<k} |C_kappa|
};

/// Theta, lambda and the mean images are only computed for binary specs.
/// Throws Error(Degenerate) if some mean image is the zero vector.
SpecAnalytics analytics(const HierarchySpec& spec);

/// Minimum Euclidean distance over distinct pairs of observed-level patches.
double min_patch_distance(const HierarchySpec& spec);

/// Reference micro spec: k=1, m=2, s=2, C_0={a,b}; label +1 always draws
/// (a,b), label -1 draws (b,a); S_a={(1,0),(0,1)}, S_b={(3,0),(0,3)}.
HierarchySpec build_m1_spec();

/// Three-level digits model: 10 labels over 3x3 images of 9 stroke symbols,
/// refined twice by 3x3 patches (6 intermediate symbols, 4 manifestations per class).
HierarchySpec build_digits_spec();

struct RandomSpecOptions {
  int k = 2;
  int m = 2;
  int s = 2;
  int d = 2;
  std::vector<int> classes_per_level{2, 3};
  int support_per_label = 2;
};

/// A random valid binary spec (OneD geometry). Observed patches are integer
/// vectors, so distinct patches are at least distance 1 apart.
HierarchySpec random_binary_spec(const RandomSpecOptions& options, Rng& rng);

}  // namespace dlc::hiergen
