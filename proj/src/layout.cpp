#include "dlc/layout.hpp"

#include "dlc/errors.hpp"

#include <cmath>
#include <string>

namespace dlc {

std::string_view to_string(Geometry g) { return g == Geometry::OneD ? "1d" : "2d"; }

Geometry geometry_from_string(std::string_view name) {
  if (name == "1d" || name == "OneD") return Geometry::OneD;
  if (name == "2d" || name == "TwoD") return Geometry::TwoD;
  throw Error(ErrorKind::Validation, "unknown geometry '" + std::string(name) + "'");
}

std::optional<std::size_t> exact_sqrt(std::size_t value) {
  auto root = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(value))));
  for (std::size_t r = (root > 0 ? root - 1 : 0); r <= root + 1; ++r) {
    if (r * r == value) return r;
  }
  return std::nullopt;
}

void check_tiling(Geometry g, std::size_t size, std::size_t patch_len) {
  if (patch_len == 0) throw Error(ErrorKind::Shape, "patch length must be positive");
  if (size % patch_len != 0) {
    throw Error(ErrorKind::Shape, "image of " + std::to_string(size) +
                                      " pixels is not divisible into patches of " +
                                      std::to_string(patch_len));
  }
  if (g == Geometry::OneD || patch_len == 1) return;
  auto side = exact_sqrt(size);
  auto q = exact_sqrt(patch_len);
  if (!side || !q || *side % *q != 0) {
    throw Error(ErrorKind::Shape, "2d image of " + std::to_string(size) +
                                      " pixels cannot be tiled by square patches of " +
                                      std::to_string(patch_len));
  }
}

std::vector<std::size_t> block_positions(Geometry g, std::size_t parent_size, std::size_t s,
                                         std::size_t parent) {
  check_tiling(g, parent_size * s, s);
  if (parent >= parent_size) throw Error(ErrorKind::Shape, "pixel index out of range");
  std::vector<std::size_t> out(s);
  if (g == Geometry::OneD || s == 1) {
    for (std::size_t a = 0; a < s; ++a) out[a] = parent * s + a;
    return out;
  }
  const std::size_t w = *exact_sqrt(parent_size);
  const std::size_t q = *exact_sqrt(s);
  const std::size_t row = parent / w, col = parent % w;
  const std::size_t child_w = w * q;
  for (std::size_t a = 0; a < q; ++a) {
    for (std::size_t b = 0; b < q; ++b) {
      out[a * q + b] = (row * q + a) * child_w + col * q + b;
    }
  }
  return out;
}

std::vector<std::vector<std::size_t>> block_table(Geometry g, std::size_t parent_size,
                                                  std::size_t s) {
  std::vector<std::vector<std::size_t>> table;
  table.reserve(parent_size);
  for (std::size_t p = 0; p < parent_size; ++p) table.push_back(block_positions(g, parent_size, s, p));
  return table;
}

}  // namespace dlc
