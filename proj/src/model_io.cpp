#include "dlc/errors.hpp"
#include "dlc/pipeline.hpp"
#include "dlc/spec_io.hpp"

#include <sstream>

namespace dlc::pipeline {

namespace {

using nlohmann::json;

std::uint64_t parse_hash(const std::string& hex) {
  std::uint64_t value = 0;
  std::istringstream in(hex);
  in >> std::hex >> value;
  if (!in) throw Error(ErrorKind::Validation, "malformed spec hash '" + hex + "'");
  return value;
}

json load_json(const std::filesystem::path& path) {
  try {
    return json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Validation, path.string() + ": " + e.what());
  }
}

json classifier_to_json(const Classifier& cls) {
  return {{"format", "dlc-classifier"},
          {"version", 1},
          {"labels", cls.labels},
          {"weights", tlgd::matrix_to_json(cls.weights)},
          {"bias", std::vector<double>(cls.bias.data(), cls.bias.data() + cls.bias.size())},
          {"constant", cls.constant},
          {"iterations", cls.iterations},
          {"train_error", cls.train_error}};
}

Classifier classifier_from_json(const json& doc) {
  if (doc.value("format", std::string()) != "dlc-classifier") throw Error(ErrorKind::Validation, "not a classifier file");
  Classifier cls;
  cls.labels = doc.at("labels").get<std::vector<int>>();
  cls.weights = tlgd::matrix_from_json(doc.at("weights"));
  auto bias = doc.at("bias").get<std::vector<double>>();
  cls.bias = Eigen::Map<Eigen::VectorXd>(bias.data(), static_cast<Eigen::Index>(bias.size()));
  cls.constant = doc.at("constant").get<bool>();
  cls.iterations = doc.at("iterations").get<int>();
  cls.train_error = doc.at("train_error").get<double>();
  if (cls.weights.rows() != cls.bias.size() || static_cast<std::size_t>(cls.bias.size()) != cls.labels.size()) {
    throw Error(ErrorKind::Validation, "classifier shapes are inconsistent");
  }
  return cls;
}

}  // namespace

json params_to_json(const DeepParams& params) {
  return {{"gamma", params.gamma},
          {"eta", params.eta},
          {"T", params.T},
          {"n", params.n},
          {"sigma", params.sigma},
          {"epsilon", params.epsilon},
          {"seed", params.seed},
          {"gradient_mode", params.mode == tlgd::GradientMode::ExactPopulation ? "exact" : "empirical"},
          {"batch", params.batch},
          {"cls_iterations", params.cls_iterations},
          {"cls_rate", params.cls_rate},
          {"max_clusters", params.max_clusters}};
}

DeepParams params_from_json(const json& doc) {
  DeepParams params;
  params.gamma = doc.at("gamma").get<double>();
  params.eta = doc.at("eta").get<double>();
  params.T = doc.at("T").get<int>();
  params.n = doc.at("n").get<int>();
  params.sigma = doc.at("sigma").get<double>();
  params.epsilon = doc.at("epsilon").get<double>();
  params.seed = doc.at("seed").get<std::uint64_t>();
  params.mode = doc.at("gradient_mode").get<std::string>() == "exact" ? tlgd::GradientMode::ExactPopulation
                                                                       : tlgd::GradientMode::Empirical;
  params.batch = doc.at("batch").get<std::size_t>();
  params.cls_iterations = doc.at("cls_iterations").get<int>();
  params.cls_rate = doc.at("cls_rate").get<double>();
  params.max_clusters = doc.value("max_clusters", params.max_clusters);
  return params;
}

void save_model(const DeepModel& model, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create model directory " + dir.string() + ": " + ec.message());

  json blocks = json::array();
  for (const auto& block : model.blocks) {
    const std::string stem = "block_" + std::to_string(block.level);
    patches::save_mapping(block.phi, dir / (stem + "_mapping.json"));
    tlgd::save_checkpoint(block.net, block.config, dir / (stem + "_kernels.json"));
    blocks.push_back({{"level", block.level},
                      {"mapping", stem + "_mapping.json"},
                      {"kernels", stem + "_kernels.json"}});
  }
  patches::save_mapping(model.top_phi, dir / "top_mapping.json");
  io::write_text(dir / "classifier.json", classifier_to_json(model.classifier).dump() + "\n");

  const json manifest{{"format", "dlc-model"},
                      {"version", 1},
                      {"spec_hash", io::hash_hex(model.spec_hash)},
                      {"shape",
                       {{"geometry", to_string(model.shape.geometry)},
                        {"k", model.shape.k},
                        {"m", model.shape.m},
                        {"s", model.shape.s},
                        {"labels", model.shape.labels}}},
                      {"params", params_to_json(model.params)},
                      {"blocks", std::move(blocks)},
                      {"top_mapping", "top_mapping.json"},
                      {"classifier", "classifier.json"}};
  io::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

DeepModel load_model(const std::filesystem::path& dir) {
  const json manifest = load_json(dir / "manifest.json");
  if (manifest.value("format", std::string()) != "dlc-model") {
    throw Error(ErrorKind::Validation, (dir / "manifest.json").string() + " is not a model manifest");
  }
  if (manifest.at("version").get<int>() != 1) throw Error(ErrorKind::Validation, "unsupported model version");
  DeepModel model;
  model.spec_hash = parse_hash(manifest.at("spec_hash").get<std::string>());
  const auto& shape = manifest.at("shape");
  model.shape.geometry = geometry_from_string(shape.at("geometry").get<std::string>());
  model.shape.k = shape.at("k").get<int>();
  model.shape.m = shape.at("m").get<int>();
  model.shape.s = shape.at("s").get<int>();
  model.shape.labels = shape.at("labels").get<std::vector<int>>();
  model.params = params_from_json(manifest.at("params"));
  for (const auto& entry : manifest.at("blocks")) {
    LayerBlock block;
    block.level = entry.at("level").get<int>();
    block.phi = patches::mapping_from_json(load_json(dir / entry.at("mapping").get<std::string>()));
    block.net = tlgd::checkpoint_from_json(load_json(dir / entry.at("kernels").get<std::string>()), &block.config);
    if (block.phi.ell() != block.net.ell()) {
      throw Error(ErrorKind::Validation, "block " + std::to_string(block.level) + ": mapping and kernels disagree on ell");
    }
    model.blocks.push_back(std::move(block));
  }
  if (model.blocks.size() != static_cast<std::size_t>(model.shape.k)) {
    throw Error(ErrorKind::Validation, "model has " + std::to_string(model.blocks.size()) + " blocks, expected k");
  }
  model.top_phi = patches::mapping_from_json(load_json(dir / manifest.at("top_mapping").get<std::string>()));
  model.classifier = classifier_from_json(load_json(dir / manifest.at("classifier").get<std::string>()));
  return model;
}

}  // namespace dlc::pipeline
