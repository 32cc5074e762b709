#include "dlc/cli.hpp"
#include "dlc/spec_io.hpp"

#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

using namespace dlc;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "dlc");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("dlc_test_cli_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& file) const { return (path / file).string(); }
};

}  // namespace

TEST_CASE("gen, train, eval and report on the two-patch example") {
  TempDir dir("flow");
  auto gen = invoke({"gen", "--spec", "m1", "--n", "1000", "--seed", "1", "--out", dir / "train.bin"});
  REQUIRE_MESSAGE(gen.code == cli::kOk, gen.err);
  CHECK(gen.out.find("\"analytics\"") != std::string::npos);
  REQUIRE(invoke({"gen", "--spec", "m1", "--n", "300", "--seed", "2", "--out", dir / "test.bin"}).code == cli::kOk);

  const auto train = invoke({"train", "--data", dir / "train.bin", "--auto", "--seed", "1", "--out", dir / "model"});
  REQUIRE_MESSAGE(train.code == cli::kOk, train.err);
  CHECK(fs::exists(dir.path / "model" / "manifest.json"));

  const auto eval = invoke({"eval", "--model", dir / "model", "--data", dir / "test.bin", "--out", dir / "eval.jsonl"});
  REQUIRE_MESSAGE(eval.code == cli::kOk, eval.err);
  const auto rec = nlohmann::json::parse(eval.out);
  CHECK(rec.at("accuracy").get<double>() >= 0.99);
  CHECK(fs::exists(dir.path / "eval.jsonl"));

  CHECK(invoke({"report", "--input", dir / "model"}).code == cli::kOk);
  CHECK(invoke({"report", "--input", dir / "eval.jsonl"}).code == cli::kOk);

  // A dataset from another spec trips the hash check.
  REQUIRE(invoke({"gen", "--spec", "random:3", "--n", "10", "--out", dir / "other.bin"}).code == cli::kOk);
  CHECK(invoke({"eval", "--model", dir / "model", "--data", dir / "other.bin", "--strict"}).code == cli::kValidation);
}

TEST_CASE("usage and validation errors") {
  CHECK(invoke({"gen", "--spec", "m1"}).code == cli::kUsage);
  CHECK(invoke({"bogus"}).code == cli::kUsage);
  CHECK(invoke({"verify", "--suite", "nonsense"}).code == cli::kUsage);
  CHECK(invoke({"gen", "--spec", "/nonexistent/spec.json", "--n", "3"}).code == cli::kIo);

  TempDir dir("strict");
  REQUIRE(invoke({"gen", "--spec", "m1", "--n", "50", "--out", dir / "d.bin"}).code == cli::kOk);
  const auto refused =
      invoke({"train", "--data", dir / "d.bin", "--auto", "--strict-theory", "--gamma", "1.0", "--out", dir / "m"});
  CHECK(refused.code == cli::kValidation);
  CHECK(refused.err.find("Choose gamma <= Delta/2") != std::string::npos);
}

TEST_CASE("verify suites") {
  const auto controls = invoke({"verify", "--suite", "negative-controls"});
  CHECK_MESSAGE(controls.code == cli::kOk, controls.out);
  const auto lemmas = invoke({"verify", "--suite", "lemmas", "--spec", "m1", "--draws", "2000"});
  CHECK_MESSAGE(lemmas.code == cli::kOk, lemmas.out);
  const auto counting = invoke({"verify", "--suite", "counting"});
  CHECK(counting.code == cli::kOk);
}
