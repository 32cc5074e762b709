#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

namespace dlc {

// How a pixel is refined into a patch. OneD: a contiguous run of s pixels.
// TwoD: a sqrt(s) x sqrt(s) block of a row-major square image.
enum class Geometry { OneD, TwoD };

std::string_view to_string(Geometry g);
Geometry geometry_from_string(std::string_view name);

std::optional<std::size_t> exact_sqrt(std::size_t value);

// Indices, in the refined image, of the s pixels produced by pixel `parent`
// of an image with `parent_size` pixels. Entries are in row-major order within
// the block. Throws Error(Shape) when the geometry cannot tile the image.
std::vector<std::size_t> block_positions(Geometry g, std::size_t parent_size, std::size_t s,
                                         std::size_t parent);

// All blocks at once: result[p] == block_positions(g, parent_size, s, p).
std::vector<std::vector<std::size_t>> block_table(Geometry g, std::size_t parent_size,
                                                  std::size_t s);

// Checks that an image of `size` pixels splits into non-overlapping patches of
// `patch_len` pixels. Throws Error(Shape) otherwise.
void check_tiling(Geometry g, std::size_t size, std::size_t patch_len);

}  // namespace dlc
