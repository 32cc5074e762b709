#include "dlc/hiergen.hpp"

#include "dlc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

namespace dlc::hiergen {

namespace {

std::size_t ipow(std::size_t base, int exp) {
  std::size_t out = 1;
  for (int i = 0; i < exp; ++i) out *= base;
  return out;
}

// Number of pixels refined on the way from level 0 down to `level`.
std::size_t expanded_pixels(const HierarchySpec& spec, int level) {
  std::size_t total = 0;
  for (int l = 0; l < level; ++l) total += spec.image_size(l);
  return total;
}

}  // namespace

bool HierarchySpec::binary() const {
  return labels.size() == 2 && ((labels[0] == 1 && labels[1] == -1) || (labels[0] == -1 && labels[1] == 1));
}

std::size_t HierarchySpec::image_size(int level) const {
  return static_cast<std::size_t>(m) * ipow(static_cast<std::size_t>(s), level);
}

std::size_t HierarchySpec::num_classes(int level) const {
  if (level < 0 || level >= static_cast<int>(class_names.size())) return 0;
  return class_names[level].size();
}

std::vector<double> HierarchySpec::patch_values(int level, int c, int j) const {
  if (level == k - 1) return observed_patches.at(c).at(j);
  const Image& p = latent_patches.at(level).at(c).at(j);
  return {p.begin(), p.end()};
}

int HierarchySpec::label_index(int label) const {
  auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) throw Error(ErrorKind::Validation, "unknown label " + std::to_string(label));
  return static_cast<int>(it - labels.begin());
}

std::vector<Violation> validate_spec(const HierarchySpec& spec) {
  std::vector<Violation> out;
  auto add = [&](ViolationKind kind, std::string msg) { out.push_back({kind, std::move(msg)}); };

  if (spec.k < 1) add(ViolationKind::Shape, "k must be >= 1");
  if (spec.m < 1) add(ViolationKind::Shape, "m must be >= 1");
  if (spec.s < 2) add(ViolationKind::Shape, "s must be >= 2");
  if (spec.d < 1) add(ViolationKind::Shape, "d must be >= 1");
  if (spec.labels.size() < 2) add(ViolationKind::Shape, "at least two labels are required");
  if (std::set<int>(spec.labels.begin(), spec.labels.end()).size() != spec.labels.size()) {
    add(ViolationKind::Shape, "labels must be distinct");
  }
  if (!out.empty()) return out;

  if (spec.geometry == Geometry::TwoD) {
    if (!exact_sqrt(static_cast<std::size_t>(spec.s))) add(ViolationKind::Shape, "2d geometry needs a square patch size");
    if (!exact_sqrt(static_cast<std::size_t>(spec.m))) add(ViolationKind::Shape, "2d geometry needs a square top image");
  }
  if (static_cast<int>(spec.class_names.size()) != spec.k) {
    add(ViolationKind::Shape, "class_names must list one class set per level 0..k-1");
    return out;
  }
  for (int l = 0; l < spec.k; ++l) {
    if (spec.class_names[l].empty()) add(ViolationKind::Shape, "level " + std::to_string(l) + " has no classes");
  }
  if (spec.label_dists.size() != spec.labels.size()) {
    add(ViolationKind::Shape, "one label distribution per label is required");
  }
  if (static_cast<int>(spec.latent_patches.size()) != spec.k - 1) {
    add(ViolationKind::Shape, "latent_patches must cover levels 0..k-2");
  }
  if (spec.observed_patches.size() != spec.num_classes(spec.k - 1)) {
    add(ViolationKind::Shape, "observed_patches must list one patch set per class of level k-1");
  }
  if (!out.empty()) return out;

  const int c0 = static_cast<int>(spec.num_classes(0));
  for (std::size_t y = 0; y < spec.label_dists.size(); ++y) {
    const auto& dist = spec.label_dists[y];
    if (dist.empty()) {
      add(ViolationKind::Normalization, "label " + std::to_string(spec.labels[y]) + " has an empty distribution");
      continue;
    }
    double sum = 0.0;
    for (const auto& wi : dist) {
      sum += wi.probability;
      if (wi.probability < 0.0) add(ViolationKind::Normalization, "negative probability");
      if (wi.image.size() != static_cast<std::size_t>(spec.m)) {
        add(ViolationKind::Membership, "top image of label " + std::to_string(spec.labels[y]) + " has wrong size");
        continue;
      }
      for (int v : wi.image) {
        if (v < 0 || v >= c0) add(ViolationKind::Membership, "top image pixel outside C_0");
      }
    }
    if (std::abs(sum - 1.0) > 1e-12) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "probabilities of label " << spec.labels[y] << " sum to " << sum;
      add(ViolationKind::Normalization, msg.str());
    }
  }

  for (int l = 0; l < spec.k; ++l) {
    const int classes = static_cast<int>(spec.num_classes(l));
    const bool bottom = l == spec.k - 1;
    std::map<std::vector<double>, int> owner;
    if (!bottom && spec.latent_patches[l].size() != static_cast<std::size_t>(classes)) {
      add(ViolationKind::Shape, "level " + std::to_string(l) + " needs one patch set per class");
      continue;
    }
    for (int c = 0; c < classes; ++c) {
      const std::size_t count = bottom ? spec.observed_patches[c].size() : spec.latent_patches[l][c].size();
      if (count != static_cast<std::size_t>(spec.d)) {
        add(ViolationKind::PatchSetSize, "S_{" + spec.class_names[l][c] + "," + std::to_string(l) + "} has " +
                                             std::to_string(count) + " patches, expected d=" + std::to_string(spec.d));
      }
      std::set<std::vector<double>> own;
      for (std::size_t j = 0; j < count; ++j) {
        std::vector<double> p = spec.patch_values(l, c, static_cast<int>(j));
        if (p.size() != static_cast<std::size_t>(spec.s)) {
          add(ViolationKind::Membership, "patch of " + spec.class_names[l][c] + " has " + std::to_string(p.size()) +
                                             " entries, expected s=" + std::to_string(spec.s));
          continue;
        }
        if (!bottom) {
          const int next = static_cast<int>(spec.num_classes(l + 1));
          for (double v : p) {
            if (v < 0 || v >= next) add(ViolationKind::Membership, "patch entry outside C_" + std::to_string(l + 1));
          }
        } else {
          for (double v : p) {
            if (!std::isfinite(v)) add(ViolationKind::Membership, "observed patch entry is not finite");
          }
        }
        if (!own.insert(p).second) {
          add(ViolationKind::PatchSetSize, "S_{" + spec.class_names[l][c] + "," + std::to_string(l) + "} repeats a patch");
        }
        auto [it, inserted] = owner.emplace(p, c);
        if (!inserted && it->second != c) {
          add(ViolationKind::Disjointness, "S_{" + spec.class_names[l][it->second] + "," + std::to_string(l) +
                                               "} and S_{" + spec.class_names[l][c] + "," + std::to_string(l) +
                                               "} share a patch");
        }
      }
    }
  }
  return out;
}

void require_valid(const HierarchySpec& spec) {
  auto violations = validate_spec(spec);
  if (violations.empty()) return;
  std::string msg = "invalid spec '" + spec.name + "':";
  for (const auto& v : violations) msg += "\n  - " + v.message;
  throw Error(ErrorKind::Validation, msg);
}

namespace {

// Refines `parent` (level l) into level l+1 using patch choices drawn by `choose`.
template <class Choose>
Image refine_latent(const HierarchySpec& spec, int l, const Image& parent, Choose&& choose) {
  const auto table = block_table(spec.geometry, parent.size(), spec.s);
  Image child(parent.size() * spec.s);
  for (std::size_t i = 0; i < parent.size(); ++i) {
    const Image& patch = spec.latent_patches[l][parent[i]][choose(i)];
    for (std::size_t a = 0; a < table[i].size(); ++a) child[table[i][a]] = patch[a];
  }
  return child;
}

template <class Choose>
RealImage refine_observed(const HierarchySpec& spec, const Image& parent, Choose&& choose) {
  const auto table = block_table(spec.geometry, parent.size(), spec.s);
  RealImage child(parent.size() * spec.s);
  for (std::size_t i = 0; i < parent.size(); ++i) {
    const RealImage& patch = spec.observed_patches[parent[i]][choose(i)];
    for (std::size_t a = 0; a < table[i].size(); ++a) child[table[i][a]] = patch[a];
  }
  return child;
}

}  // namespace

namespace {

Example sample_unchecked(const HierarchySpec& spec, Rng& rng) {
  Example ex;
  std::uniform_int_distribution<std::size_t> pick_label(0, spec.labels.size() - 1);
  const std::size_t y = pick_label(rng);
  ex.label = spec.labels[y];

  const auto& dist = spec.label_dists[y];
  std::vector<double> weights;
  weights.reserve(dist.size());
  for (const auto& wi : dist) weights.push_back(wi.probability);
  std::discrete_distribution<std::size_t> pick_top(weights.begin(), weights.end());
  ex.latent.push_back(dist[pick_top(rng)].image);

  std::uniform_int_distribution<int> pick_patch(0, spec.d - 1);
  auto choose = [&](std::size_t) { return pick_patch(rng); };
  for (int l = 0; l + 1 < spec.k; ++l) ex.latent.push_back(refine_latent(spec, l, ex.latent.back(), choose));
  ex.observed = refine_observed(spec, ex.latent.back(), choose);
  return ex;
}

}  // namespace

Example sample_example(const HierarchySpec& spec, Rng& rng) {
  require_valid(spec);
  return sample_unchecked(spec, rng);
}

std::vector<Example> sample_dataset(const HierarchySpec& spec, std::size_t n, Rng& rng) {
  if (n == 0) throw Error(ErrorKind::Validation, "dataset size must be at least 1");
  require_valid(spec);
  std::vector<Example> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample_unchecked(spec, rng));
  return out;
}

std::vector<Example> sample_dataset(const HierarchySpec& spec, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return sample_dataset(spec, n, rng);
}

BigInt support_size(const HierarchySpec& spec, int level) {
  BigInt total = 0;
  const BigInt branches = boost::multiprecision::pow(BigInt(spec.d), static_cast<unsigned>(expanded_pixels(spec, level)));
  for (const auto& dist : spec.label_dists) total += BigInt(dist.size()) * branches;
  return total;
}

BigInt count_distinct(const HierarchySpec& spec, int level) {
  if (level < 0 || level > spec.k) throw Error(ErrorKind::Validation, "level out of range");
  // Patch sets are disjoint, so distinct refinement choices give distinct images.
  return support_size(spec, level);
}

std::vector<Outcome> enumerate_support(const HierarchySpec& spec, int level, double bound) {
  require_valid(spec);
  if (level < 0 || level > spec.k) throw Error(ErrorKind::Validation, "level out of range");
  const BigInt size = support_size(spec, level);
  if (size > BigInt(static_cast<long long>(bound))) {
    throw EnumerationTooLarge(size.convert_to<double>(), bound);
  }

  std::vector<Outcome> frontier;
  const double label_p = 1.0 / static_cast<double>(spec.labels.size());
  for (std::size_t y = 0; y < spec.labels.size(); ++y) {
    for (const auto& wi : spec.label_dists[y]) {
      Outcome o;
      o.example.label = spec.labels[y];
      o.example.latent.push_back(wi.image);
      o.probability = label_p * wi.probability;
      frontier.push_back(std::move(o));
    }
  }

  const double branch_p = 1.0 / spec.d;
  for (int l = 0; l < level; ++l) {
    std::vector<Outcome> next;
    next.reserve(frontier.size() * ipow(spec.d, static_cast<int>(spec.image_size(l))));
    for (const auto& o : frontier) {
      const Image& parent = o.example.latent.back();
      const std::size_t pixels = parent.size();
      const double p = o.probability * std::pow(branch_p, static_cast<double>(pixels));
      const std::size_t combos = ipow(spec.d, static_cast<int>(pixels));
      std::vector<int> digits(pixels, 0);
      auto choose = [&](std::size_t i) { return digits[i]; };
      // Pixel 0 varies slowest.
      for (std::size_t code = 0; code < combos; ++code) {
        std::size_t rest = code;
        for (std::size_t i = pixels; i-- > 0;) {
          digits[i] = static_cast<int>(rest % spec.d);
          rest /= spec.d;
        }
        Outcome child = o;
        child.probability = p;
        if (l + 1 < spec.k) {
          child.example.latent.push_back(refine_latent(spec, l, parent, choose));
        } else {
          child.example.observed = refine_observed(spec, parent, choose);
        }
        next.push_back(std::move(child));
      }
    }
    frontier = std::move(next);
  }
  return frontier;
}

namespace {

void require_binary(const HierarchySpec& spec) {
  if (!spec.binary()) {
    throw Error(ErrorKind::Validation, "mean images are defined for binary {+1,-1} labels only");
  }
}

void require_class(const HierarchySpec& spec, ClassId c) {
  if (c.level < 0 || c.level >= spec.k || c.index < 0 || c.index >= static_cast<int>(spec.num_classes(c.level))) {
    throw Error(ErrorKind::Validation, "unknown class (" + std::to_string(c.level) + "," + std::to_string(c.index) + ")");
  }
}

}  // namespace

std::vector<std::vector<double>> class_marginals(const HierarchySpec& spec, std::size_t label_index, int level) {
  if (label_index >= spec.labels.size()) throw Error(ErrorKind::Validation, "label index out of range");
  if (level < 0 || level >= spec.k) throw Error(ErrorKind::Validation, "level out of range");
  // marginal[pos][class] = P(x^(l)_pos = class | y), pushed down one level at a time.
  std::vector<std::vector<double>> marginal(spec.m, std::vector<double>(spec.num_classes(0), 0.0));
  for (const auto& wi : spec.label_dists[label_index]) {
    for (int pos = 0; pos < spec.m; ++pos) marginal[pos][wi.image[pos]] += wi.probability;
  }
  for (int l = 0; l < level; ++l) {
    const std::size_t parent_size = spec.image_size(l);
    const std::size_t next_classes = spec.num_classes(l + 1);
    const auto table = block_table(spec.geometry, parent_size, spec.s);
    std::vector<std::vector<double>> refined(parent_size * spec.s, std::vector<double>(next_classes, 0.0));
    for (std::size_t i = 0; i < parent_size; ++i) {
      for (std::size_t parent_class = 0; parent_class < marginal[i].size(); ++parent_class) {
        const double p = marginal[i][parent_class];
        if (p == 0.0) continue;
        for (const Image& patch : spec.latent_patches[l][parent_class]) {
          for (std::size_t a = 0; a < table[i].size(); ++a) {
            refined[table[i][a]][patch[a]] += p / spec.d;
          }
        }
      }
    }
    marginal = std::move(refined);
  }
  return marginal;
}

MeanImage mean_image(const HierarchySpec& spec, ClassId c) {
  require_valid(spec);
  require_binary(spec);
  require_class(spec, c);

  MeanImage out{c, std::vector<double>(spec.image_size(c.level), 0.0)};
  const double label_p = 1.0 / static_cast<double>(spec.labels.size());
  for (std::size_t y = 0; y < spec.labels.size(); ++y) {
    const auto marginal = class_marginals(spec, y, c.level);
    const double sign = -static_cast<double>(spec.labels[y]);
    for (std::size_t pos = 0; pos < out.values.size(); ++pos) {
      out.values[pos] += label_p * sign * marginal[pos][c.index];
    }
  }
  return out;
}

SampledMeanImage mean_image_sampled(const HierarchySpec& spec, ClassId c, std::size_t samples, Rng& rng) {
  require_valid(spec);
  require_binary(spec);
  require_class(spec, c);
  if (samples < 2) throw Error(ErrorKind::Validation, "need at least two samples");
  const std::size_t size = spec.image_size(c.level);
  std::vector<double> sum(size, 0.0), sum_sq(size, 0.0);
  for (std::size_t n = 0; n < samples; ++n) {
    Example ex = sample_unchecked(spec, rng);
    const Image& z = ex.latent[c.level];
    for (std::size_t pos = 0; pos < size; ++pos) {
      const double v = z[pos] == c.index ? -static_cast<double>(ex.label) : 0.0;
      sum[pos] += v;
      sum_sq[pos] += v * v;
    }
  }
  SampledMeanImage out;
  out.samples = samples;
  out.mean = {c, std::vector<double>(size)};
  out.standard_error.resize(size);
  const double nn = static_cast<double>(samples);
  for (std::size_t pos = 0; pos < size; ++pos) {
    const double mean = sum[pos] / nn;
    const double var = std::max(0.0, (sum_sq[pos] - nn * mean * mean) / (nn - 1.0));
    out.mean.values[pos] = mean;
    out.standard_error[pos] = std::sqrt(var / nn);
  }
  return out;
}

double min_patch_distance(const HierarchySpec& spec) {
  std::vector<const RealImage*> all;
  for (const auto& set : spec.observed_patches) {
    for (const auto& p : set) all.push_back(&p);
  }
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (std::size_t j = i + 1; j < all.size(); ++j) {
      double sq = 0.0;
      for (std::size_t a = 0; a < all[i]->size(); ++a) {
        const double diff = (*all[i])[a] - (*all[j])[a];
        sq += diff * diff;
      }
      if (sq > 0.0) best = std::min(best, std::sqrt(sq));
    }
  }
  return best;
}

SpecAnalytics analytics(const HierarchySpec& spec) {
  require_valid(spec);
  SpecAnalytics out;
  out.delta_min = min_patch_distance(spec);
  for (int l = 0; l < spec.k; ++l) out.max_classes = std::max(out.max_classes, static_cast<int>(spec.num_classes(l)));
  if (!spec.binary()) return out;

  double theta = std::numbers::pi;
  double lambda = std::numeric_limits<double>::infinity();
  for (int l = 0; l < spec.k; ++l) {
    std::vector<MeanImage> level_means;
    std::vector<double> norms;
    for (int c = 0; c < static_cast<int>(spec.num_classes(l)); ++c) {
      MeanImage v = mean_image(spec, {l, c});
      const double norm = std::sqrt(std::inner_product(v.values.begin(), v.values.end(), v.values.begin(), 0.0));
      if (norm == 0.0) {
        throw Error(ErrorKind::Degenerate, "mean image of class '" + spec.class_names[l][c] + "' at level " +
                                               std::to_string(l) + " is zero; its angle is undefined");
      }
      lambda = std::min(lambda, norm);
      norms.push_back(norm);
      level_means.push_back(std::move(v));
    }
    for (std::size_t a = 0; a < level_means.size(); ++a) {
      for (std::size_t b = a + 1; b < level_means.size(); ++b) {
        const auto& va = level_means[a].values;
        const auto& vb = level_means[b].values;
        const double cosine = std::inner_product(va.begin(), va.end(), vb.begin(), 0.0) / (norms[a] * norms[b]);
        theta = std::min(theta, std::acos(std::clamp(cosine, -1.0, 1.0)));
      }
    }
    for (auto& v : level_means) out.mean_images.push_back(std::move(v));
  }
  out.theta = theta;
  out.lambda = lambda;
  return out;
}

HierarchySpec build_m1_spec() {
  HierarchySpec spec;
  spec.name = "m1";
  spec.k = 1;
  spec.m = 2;
  spec.s = 2;
  spec.d = 2;
  spec.geometry = Geometry::OneD;
  spec.labels = {1, -1};
  spec.class_names = {{"a", "b"}};
  spec.label_dists = {{{{0, 1}, 1.0}}, {{{1, 0}, 1.0}}};
  spec.observed_patches = {{{1.0, 0.0}, {0.0, 1.0}}, {{3.0, 0.0}, {0.0, 3.0}}};
  return spec;
}

HierarchySpec random_binary_spec(const RandomSpecOptions& opt, Rng& rng) {
  if (static_cast<int>(opt.classes_per_level.size()) != opt.k) {
    throw Error(ErrorKind::Validation, "classes_per_level must have k entries");
  }
  HierarchySpec spec;
  spec.name = "random";
  spec.k = opt.k;
  spec.m = opt.m;
  spec.s = opt.s;
  spec.d = opt.d;
  spec.geometry = Geometry::OneD;
  spec.labels = {1, -1};
  for (int l = 0; l < opt.k; ++l) {
    std::vector<std::string> names;
    for (int c = 0; c < opt.classes_per_level[l]; ++c) names.push_back("c" + std::to_string(l) + "_" + std::to_string(c));
    spec.class_names.push_back(std::move(names));
  }

  const int c0 = opt.classes_per_level[0];
  std::uniform_int_distribution<int> top_pixel(0, c0 - 1);
  std::uniform_real_distribution<double> weight(0.2, 1.0);
  for (int y = 0; y < 2; ++y) {
    std::set<Image> seen;
    std::vector<WeightedImage> dist;
    int guard = 0;
    while (static_cast<int>(dist.size()) < opt.support_per_label && guard++ < 10000) {
      Image img(opt.m);
      for (int& v : img) v = top_pixel(rng);
      if (seen.insert(img).second) dist.push_back({img, weight(rng)});
    }
    double total = 0.0;
    for (const auto& wi : dist) total += wi.probability;
    for (auto& wi : dist) wi.probability /= total;
    // Pin the sum to exactly 1 so validation is unaffected by rounding.
    double rest = 1.0;
    for (std::size_t i = 0; i + 1 < dist.size(); ++i) rest -= dist[i].probability;
    dist.back().probability = rest;
    spec.label_dists.push_back(std::move(dist));
  }

  for (int l = 0; l + 1 < opt.k; ++l) {
    const int next = opt.classes_per_level[l + 1];
    std::uniform_int_distribution<int> entry(0, next - 1);
    std::set<Image> used;
    std::vector<std::vector<Image>> sets(opt.classes_per_level[l]);
    for (auto& set : sets) {
      int guard = 0;
      while (static_cast<int>(set.size()) < opt.d) {
        if (guard++ > 100000) throw Error(ErrorKind::Validation, "cannot draw enough distinct latent patches");
        Image p(opt.s);
        for (int& v : p) v = entry(rng);
        if (used.insert(p).second) set.push_back(p);
      }
    }
    spec.latent_patches.push_back(std::move(sets));
  }

  std::uniform_int_distribution<int> value(0, 3);
  std::set<RealImage> used;
  spec.observed_patches.resize(opt.classes_per_level[opt.k - 1]);
  for (auto& set : spec.observed_patches) {
    int guard = 0;
    while (static_cast<int>(set.size()) < opt.d) {
      if (guard++ > 100000) throw Error(ErrorKind::Validation, "cannot draw enough distinct observed patches");
      RealImage p(opt.s);
      for (double& v : p) v = value(rng);
      if (used.insert(p).second) set.push_back(p);
    }
  }
  return spec;
}

}  // namespace dlc::hiergen
