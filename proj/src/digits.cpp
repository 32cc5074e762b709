#include "dlc/hiergen.hpp"

#include <array>
#include <string_view>

namespace dlc::hiergen {

namespace {

// Top-level stroke symbols (C_0) and the glyph used for them in the digit
// layouts below.
constexpr std::array<std::string_view, 9> kStrokeNames{
    "blank", "hbar", "vbar", "corner_tl", "corner_tr", "corner_bl", "corner_br", "tee_left", "tee_right"};
constexpr std::string_view kStrokeGlyphs = " -|r7LJE3";

// 3x3 layout per digit, row-major.
constexpr std::array<std::string_view, 10> kDigitLayouts{
    "r-7| |L-J",  // 0
    "  |  |  |",  // 1
    "--7r-JL--",  // 2
    "--7 -3--J",  // 3
    "| |L-3  |",  // 4
    "r--L-7--J",  // 5
    "r--E-7L-J",  // 6
    "--7  |  |",  // 7
    "r-7E-3L-J",  // 8
    "r-7L-3--J",  // 9
};

// Intermediate symbols (C_1).
constexpr std::array<std::string_view, 6> kMarkNames{"empty", "h", "v", "dot", "diag_down", "diag_up"};

// Four 3x3 manifestations per stroke symbol, as C_1 indices. All 36 blocks
// are pairwise at Hamming distance >= 3.
constexpr std::array<std::array<std::string_view, 4>, 9> kStrokePatches{{
    {"000300055", "040000030", "400000005", "305000300"},  // blank
    {"050111003", "055111300", "500111440", "305111040"},  // hbar
    {"420020423", "020023525", "020320024", "320323020"},  // vbar
    {"400011024", "000011423", "300311420", "450011520"},  // corner_tl
    {"340110020", "403110420", "050114320", "030110024"},  // corner_tr
    {"025011003", "020011504", "320011300", "020511030"},  // corner_bl
    {"020114530", "024110005", "025113000", "420114000"},  // corner_br
    {"023411023", "520511320", "323311020", "020511523"},  // tee_left
    {"020113025", "420110523", "320113320", "020115420"},  // tee_right
}};

// Four binary 3x3 pixel patches per intermediate symbol. Every patch has even
// weight, so distinct patches are at least sqrt(2) apart.
constexpr std::array<std::array<std::string_view, 4>, 6> kMarkPixels{{
    {"000000000", "000000011", "000000101", "000000110"},  // empty
    {"000011000", "000101000", "000110000", "000111001"},  // h
    {"000010010", "010000010", "010010000", "010010011"},  // v
    {"000010001", "000010100", "001010000", "100010000"},  // dot
    {"100000001", "100010011", "100010101", "100011001"},  // diag_down
    {"001000100", "001010101", "001010110", "001011100"},  // diag_up
}};

Image digit_layout(std::string_view layout) {
  Image out;
  for (char ch : layout) out.push_back(static_cast<int>(kStrokeGlyphs.find(ch)));
  return out;
}

Image index_patch(std::string_view digits) {
  Image out;
  for (char ch : digits) out.push_back(ch - '0');
  return out;
}

RealImage pixel_patch(std::string_view bits) {
  RealImage out;
  for (char ch : bits) out.push_back(ch == '1' ? 1.0 : 0.0);
  return out;
}

}  // namespace

HierarchySpec build_digits_spec() {
  HierarchySpec spec;
  spec.name = "digits";
  spec.k = 2;
  spec.m = 9;
  spec.s = 9;
  spec.d = 4;
  spec.geometry = Geometry::TwoD;
  for (int digit = 0; digit < 10; ++digit) spec.labels.push_back(digit);

  spec.class_names.emplace_back(kStrokeNames.begin(), kStrokeNames.end());
  spec.class_names.emplace_back(kMarkNames.begin(), kMarkNames.end());

  for (auto layout : kDigitLayouts) spec.label_dists.push_back({{digit_layout(layout), 1.0}});

  std::vector<std::vector<Image>> stroke_sets;
  for (const auto& set : kStrokePatches) {
    std::vector<Image> patches;
    for (auto p : set) patches.push_back(index_patch(p));
    stroke_sets.push_back(std::move(patches));
  }
  spec.latent_patches.push_back(std::move(stroke_sets));

  for (const auto& set : kMarkPixels) {
    std::vector<RealImage> patches;
    for (auto p : set) patches.push_back(pixel_patch(p));
    spec.observed_patches.push_back(std::move(patches));
  }
  return spec;
}

}  // namespace dlc::hiergen
