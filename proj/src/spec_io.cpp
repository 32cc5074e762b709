#include "dlc/spec_io.hpp"

#include "dlc/errors.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace dlc::io {

namespace {

constexpr char kSpecFormat[] = "dlc-hierarchy-spec";
constexpr char kDatasetMagic[8] = {'D', 'L', 'C', 'D', 'A', 'T', 'A', '\0'};

int class_index(const std::vector<std::string>& names, const std::string& name, int level) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int>(i);
  }
  throw Error(ErrorKind::Validation, "unknown class '" + name + "' at level " + std::to_string(level));
}

std::vector<std::string> names_of(const std::vector<std::string>& names, const hiergen::Image& image) {
  std::vector<std::string> out;
  out.reserve(image.size());
  for (int v : image) out.push_back(names.at(v));
  return out;
}

hiergen::Image indices_of(const std::vector<std::string>& names, const json& arr, int level) {
  hiergen::Image out;
  for (const auto& v : arr) out.push_back(class_index(names, v.get<std::string>(), level));
  return out;
}

template <class T>
T field(const json& doc, const char* key) {
  if (!doc.contains(key)) throw Error(ErrorKind::Validation, std::string("spec is missing field '") + key + "'");
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Validation, std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

json spec_to_json(const hiergen::HierarchySpec& spec) {
  json doc;
  doc["format"] = kSpecFormat;
  doc["version"] = spec.version;
  doc["name"] = spec.name;
  doc["k"] = spec.k;
  doc["m"] = spec.m;
  doc["s"] = spec.s;
  doc["d"] = spec.d;
  doc["geometry"] = std::string(to_string(spec.geometry));
  doc["labels"] = spec.labels;
  doc["classes"] = spec.class_names;

  json dists = json::array();
  for (const auto& dist : spec.label_dists) {
    json entries = json::array();
    for (const auto& wi : dist) {
      entries.push_back({{"image", names_of(spec.class_names.at(0), wi.image)}, {"p", wi.probability}});
    }
    dists.push_back(std::move(entries));
  }
  doc["label_distributions"] = std::move(dists);

  json latent = json::array();
  for (std::size_t l = 0; l < spec.latent_patches.size(); ++l) {
    json level = json::object();
    for (std::size_t c = 0; c < spec.latent_patches[l].size(); ++c) {
      json patches = json::array();
      for (const auto& p : spec.latent_patches[l][c]) patches.push_back(names_of(spec.class_names.at(l + 1), p));
      level[spec.class_names[l][c]] = std::move(patches);
    }
    latent.push_back(std::move(level));
  }
  doc["patch_sets"] = std::move(latent);

  json observed = json::object();
  const auto& bottom = spec.class_names.at(spec.k - 1);
  for (std::size_t c = 0; c < spec.observed_patches.size(); ++c) observed[bottom.at(c)] = spec.observed_patches[c];
  doc["observed_patches"] = std::move(observed);
  return doc;
}

hiergen::HierarchySpec spec_from_json(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorKind::Validation, "spec document must be a JSON object");
  if (doc.value("format", std::string()) != kSpecFormat) {
    throw Error(ErrorKind::Validation, std::string("spec 'format' must be \"") + kSpecFormat + "\"");
  }
  hiergen::HierarchySpec spec;
  spec.version = field<int>(doc, "version");
  if (spec.version != kSpecFormatVersion) {
    throw Error(ErrorKind::Validation, "unsupported spec version " + std::to_string(spec.version));
  }
  spec.name = doc.value("name", std::string("unnamed"));
  spec.k = field<int>(doc, "k");
  spec.m = field<int>(doc, "m");
  spec.s = field<int>(doc, "s");
  spec.d = field<int>(doc, "d");
  spec.geometry = geometry_from_string(field<std::string>(doc, "geometry"));
  spec.labels = field<std::vector<int>>(doc, "labels");
  spec.class_names = field<std::vector<std::vector<std::string>>>(doc, "classes");
  if (static_cast<int>(spec.class_names.size()) != spec.k) {
    throw Error(ErrorKind::Validation, "'classes' must have k entries");
  }

  for (const auto& entries : field<json>(doc, "label_distributions")) {
    std::vector<hiergen::WeightedImage> dist;
    for (const auto& e : entries) dist.push_back({indices_of(spec.class_names[0], e.at("image"), 0), e.at("p").get<double>()});
    spec.label_dists.push_back(std::move(dist));
  }

  const json latent = doc.value("patch_sets", json::array());
  if (static_cast<int>(latent.size()) != spec.k - 1) {
    throw Error(ErrorKind::Validation, "'patch_sets' must have k-1 entries");
  }
  for (int l = 0; l + 1 < spec.k; ++l) {
    std::vector<std::vector<hiergen::Image>> sets(spec.class_names[l].size());
    for (const auto& [name, patches] : latent[l].items()) {
      auto& set = sets[class_index(spec.class_names[l], name, l)];
      for (const auto& p : patches) set.push_back(indices_of(spec.class_names[l + 1], p, l + 1));
    }
    spec.latent_patches.push_back(std::move(sets));
  }

  const auto& bottom = spec.class_names[spec.k - 1];
  spec.observed_patches.assign(bottom.size(), {});
  const json observed = field<json>(doc, "observed_patches");
  for (const auto& [name, patches] : observed.items()) {
    spec.observed_patches[class_index(bottom, name, spec.k - 1)] = patches.get<std::vector<hiergen::RealImage>>();
  }
  return spec;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

hiergen::HierarchySpec load_spec(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Validation, "cannot parse spec " + path.string() + ": " + e.what());
  }
  return spec_from_json(doc);
}

void save_spec(const hiergen::HierarchySpec& spec, const std::filesystem::path& path) {
  write_text(path, spec_to_json(spec).dump(2) + "\n");
}

hiergen::HierarchySpec resolve_spec(const std::string& name_or_path) {
  if (name_or_path == "m1") return hiergen::build_m1_spec();
  if (name_or_path == "digits") return hiergen::build_digits_spec();
  if (name_or_path.starts_with("random:")) {
    std::uint64_t seed = 0;
    try {
      seed = std::stoull(name_or_path.substr(7));
    } catch (const std::exception&) {
      throw Error(ErrorKind::Validation, "malformed random spec name '" + name_or_path + "'");
    }
    hiergen::Rng rng(seed);
    auto spec = hiergen::random_binary_spec({}, rng);
    spec.name = name_or_path;
    return spec;
  }
  return load_spec(name_or_path);
}

std::uint64_t spec_hash(const hiergen::HierarchySpec& spec) {
  const std::string canonical = spec_to_json(spec).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t hash) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << hash;
  return out.str();
}

Dataset make_dataset(const hiergen::HierarchySpec& spec, std::vector<hiergen::Example> examples,
                     std::uint64_t seed, bool keep_chain) {
  Dataset data;
  data.header.spec_hash = spec_hash(spec);
  data.header.seed = seed;
  data.header.count = examples.size();
  data.header.geometry = spec.geometry;
  data.header.has_chain = keep_chain;
  data.header.k = static_cast<std::uint32_t>(spec.k);
  data.header.m = static_cast<std::uint32_t>(spec.m);
  data.header.s = static_cast<std::uint32_t>(spec.s);
  data.header.labels.assign(spec.labels.begin(), spec.labels.end());
  data.header.spec_json = spec_to_json(spec).dump();
  if (!keep_chain) {
    for (auto& ex : examples) ex.latent.clear();
  }
  data.examples = std::move(examples);
  return data;
}

namespace {

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <class T>
  void le(T value) {
    using U = std::make_unsigned_t<T>;
    auto bits = static_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.put(static_cast<char>(bits & 0xFF));
      bits = static_cast<U>(bits >> 8);
    }
  }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const char* data, std::size_t n) { out_.write(data, static_cast<std::streamsize>(n)); }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}
  template <class T>
  T le() {
    using U = std::make_unsigned_t<T>;
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      const int ch = in_.get();
      if (ch == std::char_traits<char>::eof()) throw Error(ErrorKind::Io, "truncated dataset file " + path_);
      bits = static_cast<U>(bits | (static_cast<U>(static_cast<unsigned char>(ch)) << (8 * i)));
    }
    return static_cast<T>(bits);
  }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  void bytes(char* data, std::size_t n) {
    in_.read(data, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw Error(ErrorKind::Io, "truncated dataset file " + path_);
  }

 private:
  std::istream& in_;
  std::string path_;
};

std::size_t level_size(const DatasetHeader& h, std::uint32_t level) {
  std::size_t size = h.m;
  for (std::uint32_t i = 0; i < level; ++i) size *= h.s;
  return size;
}

}  // namespace

void write_dataset(const Dataset& data, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  Writer w(out);
  const auto& h = data.header;
  w.bytes(kDatasetMagic, sizeof(kDatasetMagic));
  w.le<std::uint32_t>(kDatasetFormatVersion);
  w.le<std::uint64_t>(h.spec_hash);
  w.le<std::uint64_t>(h.seed);
  w.le<std::uint64_t>(data.examples.size());
  w.le<std::uint8_t>(h.geometry == Geometry::TwoD ? 1 : 0);
  w.le<std::uint8_t>(h.has_chain ? 1 : 0);
  w.le<std::uint16_t>(0);
  w.le<std::uint32_t>(h.k);
  w.le<std::uint32_t>(h.m);
  w.le<std::uint32_t>(h.s);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(h.labels.size()));
  for (auto label : h.labels) w.le<std::int32_t>(label);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(h.spec_json.size()));
  w.bytes(h.spec_json.data(), h.spec_json.size());

  const std::size_t observed = level_size(h, h.k);
  for (const auto& ex : data.examples) {
    if (ex.observed.size() != observed) throw Error(ErrorKind::Shape, "example has the wrong observed size");
    w.le<std::int32_t>(ex.label);
    for (double v : ex.observed) w.f64(v);
    if (h.has_chain) {
      if (ex.latent.size() != h.k) throw Error(ErrorKind::Shape, "example is missing its latent chain");
      for (std::uint32_t l = 0; l < h.k; ++l) {
        if (ex.latent[l].size() != level_size(h, l)) throw Error(ErrorKind::Shape, "latent image has the wrong size");
        for (int v : ex.latent[l]) w.le<std::int32_t>(v);
      }
    }
  }
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  Reader r(in, path.string());
  char magic[sizeof(kDatasetMagic)];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kDatasetMagic, sizeof(magic)) != 0) throw Error(ErrorKind::Io, path.string() + " is not a dataset file");
  if (r.le<std::uint32_t>() != kDatasetFormatVersion) throw Error(ErrorKind::Io, "unsupported dataset version in " + path.string());

  Dataset data;
  auto& h = data.header;
  h.spec_hash = r.le<std::uint64_t>();
  h.seed = r.le<std::uint64_t>();
  h.count = r.le<std::uint64_t>();
  h.geometry = r.le<std::uint8_t>() == 1 ? Geometry::TwoD : Geometry::OneD;
  h.has_chain = r.le<std::uint8_t>() == 1;
  r.le<std::uint16_t>();
  h.k = r.le<std::uint32_t>();
  h.m = r.le<std::uint32_t>();
  h.s = r.le<std::uint32_t>();
  const auto num_labels = r.le<std::uint32_t>();
  for (std::uint32_t i = 0; i < num_labels; ++i) h.labels.push_back(r.le<std::int32_t>());
  const auto spec_len = r.le<std::uint32_t>();
  h.spec_json.resize(spec_len);
  if (spec_len > 0) r.bytes(h.spec_json.data(), spec_len);

  const std::size_t observed = level_size(h, h.k);
  data.examples.reserve(h.count);
  for (std::uint64_t i = 0; i < h.count; ++i) {
    hiergen::Example ex;
    ex.label = r.le<std::int32_t>();
    ex.observed.resize(observed);
    for (double& v : ex.observed) v = r.f64();
    if (h.has_chain) {
      for (std::uint32_t l = 0; l < h.k; ++l) {
        hiergen::Image img(level_size(h, l));
        for (int& v : img) v = r.le<std::int32_t>();
        ex.latent.push_back(std::move(img));
      }
    }
    data.examples.push_back(std::move(ex));
  }
  return data;
}

}  // namespace dlc::io
