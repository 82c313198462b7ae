#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "../../tools/cli.hpp"
#include "doctest.h"
#include "json.hpp"
#include "satomil/checkpoint.hpp"
#include "satomil/datagen.hpp"
#include "satomil/error.hpp"
#include "satomil/sat_model.hpp"

namespace fs = std::filesystem;
using namespace satomil;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "satomil");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("satomil-test-" + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::vector<nlohmann::json> read_lines(const std::string& path) {
  std::ifstream in(path);
  std::vector<nlohmann::json> out;
  for (std::string line; std::getline(in, line);) out.push_back(nlohmann::json::parse(line));
  return out;
}

}  // namespace

TEST_CASE("gen writes a dataset whose header parses") {
  TempDir tmp;
  const auto r = run({"gen", "--k", "4", "--bags-per-class", "50", "--seed", "7", "--out", tmp / "d.jsonl"});
  CHECK(r.code == 0);
  REQUIRE(fs::exists(tmp / "d.jsonl"));
  const auto lines = read_lines(tmp / "d.jsonl");
  REQUIRE(lines.size() == 201);
  CHECK(lines[0].at("format") == "satomil-bags-1");
  CHECK(lines[0].at("k_classes") == 4);
  CHECK(lines[0].at("generator").at("seed") == 7);
  const auto argv = lines[0].at("generator").at("command_line");
  CHECK(std::find(argv.begin(), argv.end(), "--seed") != argv.end());
  CHECK(read_dataset(fs::path(tmp / "d.jsonl")).size() == 200);

  // reproducible from flags
  auto slurp = [](const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const std::string first = slurp(tmp / "d.jsonl");
  run({"gen", "--k", "4", "--bags-per-class", "50", "--seed", "7", "--out", tmp / "d.jsonl"});
  CHECK(first == slurp(tmp / "d.jsonl"));
}

TEST_CASE("gradcheck passes on the tiny config") {
  const auto r = run({"gradcheck", "--k", "3", "--dim", "4"});
  CHECK(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j.at("pass") == true);
  CHECK(j.at("max_relative_error").get<double>() < 1e-4);
  CHECK(run({"gradcheck", "--k", "4", "--dim", "3", "--mask", "literal", "--blocks", "2"}).code == 0);
}

TEST_CASE("usage errors exit 1, runtime errors exit 2") {
  CHECK(run({"gen", "--bogus"}).code == 1);
  CHECK(run({}).code == 1);
  CHECK(run({"frobnicate"}).code == 1);
  CHECK(run({"gen"}).code == 1);  // missing --out
  CHECK(run({"gradcheck", "--mask", "sideways"}).code == 1);
  CHECK(run({"--help"}).code == 0);
  const auto missing = run({"eval", "--ckpt", "/nonexistent/ckpt.json", "--data", "/nonexistent/d.jsonl"});
  CHECK(missing.code == 2);
  CHECK(missing.err.find("error") != std::string::npos);
}

TEST_CASE("train, eval, attn and cv end to end") {
  TempDir tmp;
  REQUIRE(run({"gen", "--k", "3", "--dim", "4", "--bags-per-class", "12", "--bag-min", "3", "--bag-max",
               "6", "--seed", "2", "--out", tmp / "d.jsonl"})
              .code == 0);
  const auto tr = run({"train", "--data", tmp / "d.jsonl", "--out", tmp / "m.ckpt", "--history",
                       tmp / "h.jsonl", "--epochs", "5", "--lr", "0.01", "--model-dim", "6"});
  REQUIRE(tr.code == 0);
  const auto tj = nlohmann::json::parse(tr.out);
  CHECK(tj.at("epochs_run") == 5);
  CHECK(tj.at("run").at("train").at("epochs") == 5);
  const auto hist = read_lines(tmp / "h.jsonl");
  REQUIRE(hist.size() == 5);
  for (const char* key : {"epoch", "train_loss", "val_accuracy", "val_qwk", "val_macro_f1"})
    CHECK(hist[0].contains(key));

  const auto ev = run({"eval", "--ckpt", tmp / "m.ckpt", "--data", tmp / "d.jsonl"});
  REQUIRE(ev.code == 0);
  const auto ej = nlohmann::json::parse(ev.out);
  CHECK(ej.at("n_bags") == 36);
  CHECK(ej.at("model") == "sat");
  CHECK(ej.contains("qwk"));
  CHECK(ej.contains("command_line"));

  const auto at = run({"attn", "--ckpt", tmp / "m.ckpt", "--data", tmp / "d.jsonl", "--out", tmp / "a.jsonl",
                       "--features", tmp / "f.jsonl"});
  REQUIRE(at.code == 0);
  const auto aj = nlohmann::json::parse(at.out);
  CHECK(aj.at("selectivity").at("tokens").size() == 2);
  const auto recs = read_lines(tmp / "a.jsonl");
  REQUIRE(recs.size() == 36);
  CHECK(recs[0].at("instance_weights").size() == 2);
  const auto feats = read_lines(tmp / "f.jsonl");
  CHECK(feats[0].at("features").size() == 2);
  CHECK(feats[0].at("features")[0].size() == 6);

  const auto cv = run({"cv", "--data", tmp / "d.jsonl", "--folds", "3", "--epochs", "3", "--model",
                       "output-max"});
  REQUIRE(cv.code == 0);
  const auto cj = nlohmann::json::parse(cv.out);
  CHECK(cj.at("folds").size() == 3);
  CHECK(cj.at("model") == "output-max");

  // mismatched K between checkpoint and data
  REQUIRE(run({"gen", "--k", "4", "--dim", "4", "--bags-per-class", "5", "--out", tmp / "k4.jsonl"}).code == 0);
  const auto bad = run({"eval", "--ckpt", tmp / "m.ckpt", "--data", tmp / "k4.jsonl"});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("K") != std::string::npos);
}

TEST_CASE("bench prints a comparison table") {
  TempDir tmp;
  REQUIRE(run({"gen", "--k", "3", "--dim", "4", "--bags-per-class", "10", "--bag-min", "3", "--bag-max",
               "5", "--out", tmp / "d.jsonl"})
              .code == 0);
  const auto r = run({"bench", "--data", tmp / "d.jsonl", "--models", "sat,output-max,transformer-krank",
                      "--folds", "2", "--epochs", "2", "--json", tmp / "b.json"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("Method") != std::string::npos);
  CHECK(r.out.find("Output+Max") != std::string::npos);
  CHECK(r.out.find("Transformer K-rank") != std::string::npos);
  std::ifstream in(tmp / "b.json");
  const auto j = nlohmann::json::parse(in);
  CHECK(j.at("results").size() == 3);
  CHECK(run({"bench", "--data", tmp / "d.jsonl", "--models", "dsmil"}).code == 2);
}

TEST_CASE("checkpoints round-trip every model kind") {
  TempDir tmp;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  Bag bag{"x", {}, 2, std::nullopt};
  for (int i = 0; i < 5; ++i) bag.instances.push_back({g(rng), g(rng), g(rng)});
  for (ModelKind kind : all_model_kinds()) {
    SatConfig c;
    c.k_classes = 3;
    c.input_dim = 3;
    c.model_dim = 5;
    c.mask_mode = MaskMode::Literal;
    c.seed = 4;
    auto m = make_model(kind, c);
    for (ad::Parameter* p : m->parameters())
      for (double& v : p->value.data()) v += 0.1 * g(rng);
    const std::string path = tmp / (std::string(to_string(kind)) + ".ckpt");
    save_checkpoint(path, *m, {{"note", "x"}});
    const auto back = load_checkpoint(path);
    CHECK(back->kind() == kind);
    CHECK(back->config().mask_mode == MaskMode::Literal);
    const auto a = std::as_const(*m).parameters();
    const auto b = std::as_const(*back).parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i]->name == b[i]->name);
      CHECK(a[i]->value == b[i]->value);
    }
    CHECK(back->predict(bag) == m->predict(bag));
  }

  std::ofstream(tmp / "junk.ckpt") << R"({"format":"OTHER"})";
  CHECK_THROWS(load_checkpoint(tmp / "junk.ckpt"));
}
