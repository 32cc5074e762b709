#pragma once

#include "dlc/hiergen.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dlc::io {

using nlohmann::json;

inline constexpr int kSpecFormatVersion = 1;
inline constexpr std::uint32_t kDatasetFormatVersion = 1;

// Model-spec files are JSON documents; see docs/file_formats.md.
json spec_to_json(const hiergen::HierarchySpec& spec);
hiergen::HierarchySpec spec_from_json(const json& doc);

hiergen::HierarchySpec load_spec(const std::filesystem::path& path);
void save_spec(const hiergen::HierarchySpec& spec, const std::filesystem::path& path);

// "m1", "digits", "random:<seed>" (a random binary spec), or a path to a spec file.
hiergen::HierarchySpec resolve_spec(const std::string& name_or_path);

// FNV-1a over the canonical (sorted-key, compact) JSON serialization.
std::uint64_t spec_hash(const hiergen::HierarchySpec& spec);
std::string hash_hex(std::uint64_t hash);

struct DatasetHeader {
  std::uint64_t spec_hash = 0;
  std::uint64_t seed = 0;
  std::uint64_t count = 0;
  Geometry geometry = Geometry::OneD;
  bool has_chain = false;
  std::uint32_t k = 0;
  std::uint32_t m = 0;
  std::uint32_t s = 0;
  std::vector<std::int32_t> labels;
  std::string spec_json;  // embedded spec, may be empty
};

struct Dataset {
  DatasetHeader header;
  std::vector<hiergen::Example> examples;
};

Dataset make_dataset(const hiergen::HierarchySpec& spec, std::vector<hiergen::Example> examples,
                     std::uint64_t seed, bool keep_chain);

// Little-endian binary layout; see docs/file_formats.md.
void write_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace dlc::io
