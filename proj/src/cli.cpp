#include "dlc/cli.hpp"

#include "dlc/errors.hpp"
#include "dlc/hiergen.hpp"
#include "dlc/oracle.hpp"
#include "dlc/pipeline.hpp"
#include "dlc/spec_io.hpp"
#include "dlc/suites.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace dlc::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path output_dir() {
  const char* env = std::getenv("DLC_OUTPUT_DIR");
  return env && *env ? fs::path(env) : fs::path(".");
}

void emit(std::ostream& out, const json& record) { out << record.dump() << '\n'; }

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

hiergen::HierarchySpec spec_of(const io::Dataset& data) {
  if (data.header.spec_json.empty()) throw Error(ErrorKind::Validation, "dataset has no embedded spec; pass --spec");
  return io::spec_from_json(json::parse(data.header.spec_json));
}

pipeline::ModelShape shape_of(const io::DatasetHeader& h) {
  return pipeline::ModelShape{h.geometry, static_cast<int>(h.k), static_cast<int>(h.m), static_cast<int>(h.s),
                              std::vector<int>(h.labels.begin(), h.labels.end())};
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

struct GenOptions {
  std::string spec;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string out;
  bool no_chain = false;
};

int cmd_gen(const GenOptions& opt, std::ostream& out, std::ostream& err) {
  const auto spec = io::resolve_spec(opt.spec);
  const auto violations = hiergen::validate_spec(spec);
  if (!violations.empty()) {
    json list = json::array();
    for (const auto& v : violations) list.push_back(v.message);
    emit(out, {{"schema", 1}, {"record", "validation"}, {"violations", list}});
    for (const auto& v : violations) err << "invalid spec: " << v.message << '\n';
    return kValidation;
  }
  const fs::path path = opt.out.empty() ? output_dir() / "dataset.bin" : fs::path(opt.out);
  auto examples = hiergen::sample_dataset(spec, opt.n, opt.seed);
  const auto data = io::make_dataset(spec, std::move(examples), opt.seed, !opt.no_chain);
  io::write_dataset(data, path);

  const auto an = hiergen::analytics(spec);
  emit(out, {{"schema", 1},
             {"record", "analytics"},
             {"spec", spec.name},
             {"theta", optional_json(an.theta)},
             {"lambda", optional_json(an.lambda)},
             {"delta_min", an.delta_min},
             {"max_classes", an.max_classes}});
  try {
    const auto tp = suites::theory_params(spec);
    emit(out, {{"schema", 1},
               {"record", "hyperparams"},
               {"gamma", tp.gamma},
               {"sigma", tp.sigma},
               {"eta", tp.eta},
               {"delta", tp.delta},
               {"n", tp.n},
               {"T", tp.T},
               {"multiclass", tp.multiclass}});
  } catch (const Error& e) {
    err << "warning: no hyperparameters derived: " << e.what() << '\n';
  }
  json counts = json::array();
  for (int level = 0; level <= spec.k; ++level) {
    counts.push_back({{"level", level}, {"distinct", hiergen::count_distinct(spec, level).str()}});
  }
  emit(out, {{"schema", 1}, {"record", "counts"}, {"levels", counts}});
  emit(out, {{"schema", 1},
             {"record", "dataset"},
             {"path", path.string()},
             {"count", data.examples.size()},
             {"seed", opt.seed},
             {"spec_hash", io::hash_hex(data.header.spec_hash)},
             {"has_chain", data.header.has_chain}});
  err << "wrote " << data.examples.size() << " examples to " << path.string() << '\n';
  return kOk;
}

struct TrainOptions {
  std::string data;
  std::string spec;
  std::string out;
  bool automatic = false;
  bool strict_theory = false;
  std::optional<double> gamma, eta, sigma, epsilon;
  std::optional<int> T, n;
  std::size_t batch = 512;
  std::size_t max_clusters = 8192;
  std::string mode = "exact";
  std::uint64_t seed = 0;
};

int cmd_train(const TrainOptions& opt, std::ostream& out, std::ostream& err) {
  const auto data = io::read_dataset(opt.data);
  const fs::path dir = opt.out.empty() ? output_dir() / "model" : fs::path(opt.out);
  std::optional<hiergen::HierarchySpec> spec;
  if (!opt.spec.empty()) {
    spec = io::resolve_spec(opt.spec);
  } else if (!data.header.spec_json.empty()) {
    spec = spec_of(data);
  }

  pipeline::DeepParams params;
  params.seed = opt.seed;
  params.batch = opt.batch;
  params.max_clusters = opt.max_clusters;
  if (opt.mode == "exact") {
    params.mode = tlgd::GradientMode::ExactPopulation;
  } else if (opt.mode == "empirical") {
    params.mode = tlgd::GradientMode::Empirical;
  } else {
    throw Error(ErrorKind::Usage, "--gradient-mode must be 'exact' or 'empirical'");
  }
  if (opt.automatic) {
    if (!spec) throw Error(ErrorKind::Validation, "--auto needs the spec (embedded in the dataset or --spec)");
    const auto tp = suites::theory_params(*spec, opt.eta.value_or(0.01), 0.1, opt.gamma);
    params.gamma = tp.gamma;
    params.eta = tp.eta;
    params.sigma = tp.sigma;
    params.n = tp.n;
    params.T = tp.T;
  } else if (!opt.gamma || !opt.eta || !opt.T || !opt.n) {
    throw Error(ErrorKind::Usage, "pass --auto or all of --gamma, --eta, --T, --n");
  } else {
    params.gamma = *opt.gamma;
    params.eta = *opt.eta;
    params.T = *opt.T;
    params.n = *opt.n;
    params.sigma = params.gamma / std::sqrt(static_cast<double>(data.header.s));
  }
  if (opt.sigma) params.sigma = *opt.sigma;
  if (opt.T && opt.automatic) params.T = *opt.T;
  if (opt.n && opt.automatic) params.n = *opt.n;
  if (opt.epsilon) params.epsilon = *opt.epsilon;

  if (opt.strict_theory) {
    if (!spec) throw Error(ErrorKind::Validation, "--strict-theory needs the spec");
    const double delta_min = hiergen::min_patch_distance(*spec);
    if (params.gamma > delta_min / 2.0) {
      err << "refusing to train: Choose gamma <= Delta/2 (gamma=" << params.gamma << ", Delta/2=" << delta_min / 2.0
          << ")\n";
      emit(out, {{"schema", 1},
                 {"record", "refusal"},
                 {"reason", "Choose gamma <= 1/2 Delta"},
                 {"gamma", params.gamma},
                 {"half_delta", delta_min / 2.0}});
      return kValidation;
    }
  }

  pipeline::TrainReport report;
  auto model = pipeline::train_deep(data.examples, shape_of(data.header), params, &report);
  model.spec_hash = data.header.spec_hash;
  pipeline::save_model(model, dir);

  std::string metrics;
  for (const auto& lr : report.levels) {
    for (const auto& m : lr.metrics) {
      auto rec = tlgd::metrics_record(m);
      rec["level"] = lr.level;
      metrics += rec.dump() + "\n";
    }
  }
  io::write_text(dir / "metrics.jsonl", metrics);

  auto summary = pipeline::report_to_json(report);
  summary["model"] = dir.string();
  summary["params"] = pipeline::params_to_json(params);
  emit(out, summary);
  err << "level  clusters  distinct patches\n";
  for (const auto& lr : report.levels) {
    err << std::setw(5) << lr.level << std::setw(10) << lr.ell << std::setw(18) << lr.unique_patches
        << (lr.single_cluster ? "  (single cluster)" : "") << '\n';
  }
  err << "classifier: " << report.cls_iterations << " iterations, training error " << fixed(report.cls_train_error)
      << '\n';
  return kOk;
}

struct VerifyOptions {
  std::string suite;
  suites::SuiteOptions suite_options;
  std::string out;
};

int cmd_verify(const VerifyOptions& opt, std::ostream& out, std::ostream& err) {
  const auto reports = suites::run_suite(opt.suite, opt.suite_options);
  std::string lines;
  bool all_ok = true;
  for (const auto& r : reports) {
    lines += oracle::to_json(r).dump() + "\n";
    all_ok = all_ok && r.ok();
  }
  out << lines;
  if (!opt.out.empty()) io::write_text(opt.out, lines);

  err << std::left << std::setw(28) << "check" << std::setw(8) << "result" << "note\n";
  for (const auto& r : reports) {
    std::string result = r.ok() ? "ok" : "FAIL";
    if (!r.asserted) result = "measure";
    else if (r.expect_fail && r.ok()) result = "ok(neg)";
    err << std::left << std::setw(28) << r.name << std::setw(8) << result << r.note << '\n';
  }
  err << (all_ok ? "all checks ok" : "some checks failed") << " (" << reports.size() << " reports)\n";
  return all_ok ? kOk : kCheckFailed;
}

struct EvalOptions {
  std::string model;
  std::string data;
  std::string out;
  bool strict = false;
  bool lenient = false;
};

int cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream& err) {
  const auto model = pipeline::load_model(opt.model);
  const auto data = io::read_dataset(opt.data);
  if (model.spec_hash != data.header.spec_hash) {
    err << (opt.strict ? "error" : "warning") << ": model spec hash " << io::hash_hex(model.spec_hash)
        << " differs from dataset spec hash " << io::hash_hex(data.header.spec_hash) << '\n';
    if (opt.strict) return kValidation;
  }
  const auto policy = opt.lenient ? patches::UnseenPolicy::Lenient : patches::UnseenPolicy::Strict;
  const auto eval = pipeline::evaluate(model, data.examples, policy);
  auto rec = pipeline::evaluation_to_json(eval);
  rec["spec_hash_match"] = model.spec_hash == data.header.spec_hash;
  const std::string line = rec.dump() + "\n";
  out << line;
  const fs::path path = opt.out.empty() ? output_dir() / "eval.jsonl" : fs::path(opt.out);
  io::write_text(path, line);

  err << "accuracy " << fixed(eval.accuracy) << " (" << eval.correct << "/" << eval.count << ")\n";
  err << "confusion (rows: true label, columns: predicted)\n      ";
  for (int label : eval.labels) err << std::setw(6) << label;
  err << '\n';
  for (std::size_t i = 0; i < eval.labels.size(); ++i) {
    err << std::setw(6) << eval.labels[i];
    for (std::size_t count : eval.confusion[i]) err << std::setw(6) << count;
    err << '\n';
  }
  return kOk;
}

int cmd_report(const std::string& input, std::ostream& out, std::ostream& err) {
  const fs::path path(input);
  if (fs::is_directory(path)) {
    const auto model = pipeline::load_model(path);
    json blocks = json::array();
    for (const auto& b : model.blocks) {
      blocks.push_back({{"level", b.level}, {"ell", b.phi.ell()}, {"n", b.net.n()}});
    }
    emit(out, {{"schema", 1},
               {"record", "model"},
               {"spec_hash", io::hash_hex(model.spec_hash)},
               {"blocks", blocks},
               {"top_ell", model.top_phi.ell()},
               {"params", pipeline::params_to_json(model.params)}});
    err << "model with " << model.blocks.size() << " blocks, top clusters " << model.top_phi.ell() << '\n';
    return kOk;
  }

  std::istringstream in(io::read_text(path));
  std::string line;
  std::size_t checks = 0, checks_ok = 0, steps = 0;
  std::map<int, json> final_step;
  std::optional<json> evaluation;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::Validation, input + ": not a line-delimited record file");
    }
    const std::string kind = rec.value("record", std::string());
    if (kind == "check") {
      ++checks;
      checks_ok += rec.value("ok", false) ? 1 : 0;
      err << std::left << std::setw(28) << rec.value("name", std::string()) << (rec.value("ok", false) ? "ok" : "FAIL")
          << '\n';
    } else if (kind == "evaluation") {
      evaluation = rec;
    } else if (rec.contains("step")) {
      ++steps;
      final_step[rec.value("level", 0)] = rec;
    }
  }
  json summary{{"schema", 1}, {"record", "report"}, {"source", input}};
  if (checks) summary["checks"] = {{"total", checks}, {"ok", checks_ok}};
  if (steps) {
    json levels = json::array();
    for (const auto& [level, rec] : final_step) {
      levels.push_back(rec);
      err << "level " << level << ": final step " << rec.value("step", 0);
      if (rec.contains("loss") && rec["loss"].is_number()) err << ", loss " << rec["loss"].get<double>();
      if (rec.contains("max_within_gap")) err << ", max within gap " << rec["max_within_gap"].get<double>();
      if (rec.contains("min_cross_gap") && rec["min_cross_gap"].is_number()) {
        err << ", min cross gap " << rec["min_cross_gap"].get<double>();
      }
      err << '\n';
    }
    summary["final_steps"] = levels;
  }
  if (evaluation) {
    summary["accuracy"] = (*evaluation)["accuracy"];
    err << "accuracy " << fixed((*evaluation)["accuracy"].get<double>()) << '\n';
  }
  emit(out, summary);
  return checks && checks_ok != checks ? kCheckFailed : kOk;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage:
      return kUsage;
    case ErrorKind::Io:
      return kIo;
    case ErrorKind::EnumerationTooLarge:
      return kEnumeration;
    case ErrorKind::Validation:
    case ErrorKind::Shape:
    case ErrorKind::Degenerate:
    case ErrorKind::UnseenPatch:
      return kValidation;
  }
  return kFailure;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Deep layerwise clustering on hierarchical generative models"};
  app.set_config("--config", "", "TOML/INI file with option defaults (flags override it)");
  app.require_subcommand(1);

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "Sample a dataset from a spec");
  gen_cmd->add_option("--spec", gen.spec, "Spec file or built-in name (m1, digits, random:<seed>)")->required();
  gen_cmd->add_option("--n", gen.n, "Number of examples")->required()->check(CLI::PositiveNumber);
  gen_cmd->add_option("--seed", gen.seed, "Random seed");
  gen_cmd->add_option("--out", gen.out, "Dataset path (default: $DLC_OUTPUT_DIR/dataset.bin)");
  gen_cmd->add_flag("--no-chain", gen.no_chain, "Do not store latent chains");

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Train a deep layerwise clustering model");
  train_cmd->add_option("--data", train.data, "Training dataset")->required();
  train_cmd->add_option("--spec", train.spec, "Spec (default: the one embedded in the dataset)");
  train_cmd->add_option("--out", train.out, "Model directory (default: $DLC_OUTPUT_DIR/model)");
  train_cmd->add_flag("--auto", train.automatic, "Derive gamma, sigma, n and T from the spec analytics");
  train_cmd->add_flag("--strict-theory", train.strict_theory, "Refuse hyperparameters outside the theory's conditions");
  train_cmd->add_option("--gamma", train.gamma, "Clustering radius");
  train_cmd->add_option("--eta", train.eta, "Learning rate");
  train_cmd->add_option("--T", train.T, "Gradient steps per level");
  train_cmd->add_option("--n", train.n, "Embedding width");
  train_cmd->add_option("--sigma", train.sigma, "Initialization scale (default gamma/sqrt(s))");
  train_cmd->add_option("--epsilon", train.epsilon, "Target classification error");
  train_cmd->add_option("--batch", train.batch, "Minibatch size in empirical mode");
  train_cmd->add_option("--max-clusters", train.max_clusters, "Abort when a level needs more clusters (0 = no limit)");
  train_cmd->add_option("--gradient-mode", train.mode, "exact (full sample) or empirical (minibatches)");
  train_cmd->add_option("--seed", train.seed, "Random seed");

  VerifyOptions verify;
  auto* verify_cmd = app.add_subcommand("verify", "Run a verification suite");
  verify_cmd->add_option("--suite", verify.suite, "Suite name")
      ->required()
      ->check(CLI::IsMember(suites::suite_names()));
  verify_cmd->add_option("--spec", verify.suite_options.spec, "Spec for spec-dependent suites");
  verify_cmd->add_option("--trials", verify.suite_options.trials, "Theorem 1 trials");
  verify_cmd->add_option("--draws", verify.suite_options.draws, "Normal draws for the frequency checks");
  verify_cmd->add_option("--runs", verify.suite_options.runs, "End-to-end runs");
  verify_cmd->add_option("--seed", verify.suite_options.seed, "Base seed");
  verify_cmd->add_option("--jobs", verify.suite_options.jobs, "Worker threads (default: all processors)");
  verify_cmd->add_option("--out", verify.out, "Also write the reports to this file");

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a model on a dataset");
  eval_cmd->add_option("--model", eval.model, "Model directory")->required();
  eval_cmd->add_option("--data", eval.data, "Dataset")->required();
  eval_cmd->add_option("--out", eval.out, "Metrics file (default: $DLC_OUTPUT_DIR/eval.jsonl)");
  eval_cmd->add_flag("--strict", eval.strict, "Fail on a spec hash mismatch");
  eval_cmd->add_flag("--lenient", eval.lenient, "Map unseen patches to the nearest representative");

  std::string report_input;
  auto* report_cmd = app.add_subcommand("report", "Summarize a record file or a model directory");
  report_cmd->add_option("--input", report_input, "JSONL file or model directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    std::ostringstream message, detail;
    app.exit(e, message, detail);
    err << detail.str() << message.str();
    return e.get_exit_code() == 0 ? kOk : kUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen(gen, out, err);
    if (*train_cmd) return cmd_train(train, out, err);
    if (*verify_cmd) return cmd_verify(verify, out, err);
    if (*eval_cmd) return cmd_eval(eval, out, err);
    if (*report_cmd) return cmd_report(report_input, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}

}  // namespace dlc::cli
