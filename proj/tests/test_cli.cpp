#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "stochgall/csv.hpp"
#include "stochgall/data.hpp"

namespace fs = std::filesystem;
using gall::cli_main;

namespace {

struct Captured {
  int code = 0;
  std::string out;
  std::string err;
};

Captured run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  Captured c;
  c.code = cli_main(args);
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  c.out = out.str();
  c.err = err.str();
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path fresh(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("stochgall_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path synth(const std::string& name, const std::vector<std::string>& extra = {}) {
  const auto dir = fresh(name);
  std::vector<std::string> args{"--seed", "4", "--out", dir.string(), "synth", "--n", "120", "--test-n", "60",
                                "--dim", "3", "--classes", "3", "--signals-per-class", "2", "--bound-slack", "0.03"};
  args.insert(args.end(), extra.begin(), extra.end());
  REQUIRE(run(args).code == gall::kOk);
  return dir;
}

}  // namespace

TEST_CASE("synth writes a complete data directory") {
  const auto d = synth("synth");
  for (const char* f : {"features.csv", "labels.csv", "test_features.csv", "test_labels.csv", "signals.csv", "meta.json"}) {
    CHECK(fs::exists(d / f));
  }
  const auto bundle = stochgall::load_signals(d / "signals.csv", d / "meta.json");
  CHECK(bundle.size() == 6);
  CHECK(bundle.example_count() == 120);
}

TEST_CASE("infer writes an n x C label matrix") {
  const auto d = synth("infer");
  const auto labels = d / "inferred.csv";
  const auto r = run({"--seed", "1", "--out", labels.string(), "infer", "--signals", (d / "signals.csv").string(),
                      "--meta", (d / "meta.json").string(), "--truth", (d / "labels.csv").string()});
  CHECK(r.code == gall::kOk);
  CHECK(r.out.find("status=feasible") != std::string::npos);
  CHECK(r.out.find("label_error=") != std::string::npos);
  const auto y = stochgall::load_label_matrix(labels);
  CHECK(y.size() == 120);
  CHECK(y.num_classes() == 3);
}

TEST_CASE("usage errors exit 1 and name the problem") {
  const auto missing = run({"--out", "x", "train", "--signals", "s.csv", "--meta", "m.json"});
  CHECK(missing.code == gall::kUsage);
  CHECK(missing.err.find("--features") != std::string::npos);

  CHECK(run({"infer", "--bogus"}).code == gall::kUsage);
  CHECK(run({}).code == gall::kUsage);
  CHECK(run({"--help"}).code == gall::kOk);
  CHECK(run({"--seed", "abc", "synth"}).code == gall::kUsage);
  CHECK(run({"synth"}).code == gall::kUsage);
}

TEST_CASE("runtime errors exit 2") {
  const auto r = run({"--out", fresh("runtime").string() + "/y.csv", "baseline", "--signals", "does_not_exist.csv",
                      "--meta", "nope.json"});
  CHECK(r.code == gall::kRuntime);
  CHECK(r.err.rfind("error: ", 0) == 0);
}

TEST_CASE("strict infer on contradictory signals exits 3") {
  const auto d = fresh("strict");
  stochgall::csv::write_text(d / "signals.csv", "1,0\n0,1\n1,0\n0,1\n");
  stochgall::csv::write_text(d / "meta.json",
                             R"([{"name":"a","target_class":0,"b_error":0.0,"b_precision":1.0},
                                 {"name":"b","target_class":0,"b_error":0.0,"b_precision":1.0}])");
  stochgall::csv::write_text(d / "game.json", R"({"warm_start_max_iters": 2000, "infeasible_patience": 200})");
  const auto r = run({"--config", (d / "game.json").string(), "--out", (d / "y.csv").string(), "infer", "--signals",
                      (d / "signals.csv").string(), "--meta", (d / "meta.json").string(), "--classes", "2",
                      "--strict"});
  CHECK(r.code == gall::kInfeasible);
  const auto lenient = run({"--config", (d / "game.json").string(), "--out", (d / "y.csv").string(), "infer",
                            "--signals", (d / "signals.csv").string(), "--meta", (d / "meta.json").string(),
                            "--classes", "2"});
  CHECK(lenient.code == gall::kOk);
  CHECK(lenient.out.find("status=infeasible") != std::string::npos);
}

TEST_CASE("train, eval, baseline and envelope round trip") {
  const auto d = synth("pipeline");
  const auto out = d / "run";
  stochgall::csv::write_text(d / "game.json", R"({"outer_rounds_max": 3, "architecture": "linear"})");
  const std::vector<std::string> sig{"--signals", (d / "signals.csv").string(), "--meta", (d / "meta.json").string()};
  std::vector<std::string> train{"--config", (d / "game.json").string(), "--out", out.string(), "train",
                                 "--features", (d / "features.csv").string(), "--labels", (d / "labels.csv").string(),
                                 "--test-features", (d / "test_features.csv").string(), "--test-labels",
                                 (d / "test_labels.csv").string(), "--validation-fraction", "0.05"};
  train.insert(train.end(), sig.begin(), sig.end());
  REQUIRE(run(train).code == gall::kOk);
  for (const char* f : {"model.json", "labels.csv", "trace.csv", "summary.json"}) CHECK(fs::exists(out / f));
  const auto summary = nlohmann::json::parse(slurp(out / "summary.json"));
  CHECK(summary["rounds"] == 3);
  CHECK(summary.contains("test_error"));

  const auto ev = run({"eval", "--model", (out / "model.json").string(), "--features",
                       (d / "test_features.csv").string(), "--labels", (d / "test_labels.csv").string()});
  CHECK(ev.code == gall::kOk);
  CHECK(ev.out == "test_error=" + stochgall::csv::format_double(summary["test_error"].get<double>()) + "\n");
  CHECK(run({"eval", "--labels", (d / "test_labels.csv").string()}).code == gall::kUsage);

  std::vector<std::string> base{"--out", (d / "mv.csv").string(), "baseline", "--method", "majority-vote",
                                "--truth", (d / "labels.csv").string()};
  base.insert(base.end(), sig.begin(), sig.end());
  const auto b = run(base);
  CHECK(b.code == gall::kOk);
  CHECK(b.out.rfind("label_error=", 0) == 0);
  base[4] = "stoch-gall";
  CHECK(run(base).code == gall::kUsage);

  std::vector<std::string> env{"--out", (d / "env.json").string(), "envelope", "--restarts", "2", "--truth",
                               (d / "labels.csv").string()};
  env.insert(env.end(), sig.begin(), sig.end());
  const auto e = run(env);
  CHECK(e.code == gall::kOk);
  const auto doc = nlohmann::json::parse(slurp(d / "env.json"));
  CHECK(doc["min_error"].get<double>() <= doc["max_error"].get<double>());
}

TEST_CASE("bounds re-estimates the metadata from a split") {
  const auto d = synth("bounds");
  const auto r = run({"--seed", "2", "--out", (d / "meta_est.json").string(), "bounds", "--features",
                      (d / "features.csv").string(), "--labels", (d / "labels.csv").string(), "--signals",
                      (d / "signals.csv").string(), "--meta", (d / "meta.json").string(), "--fraction", "0.1",
                      "--split-out", (d / "split.csv").string()});
  CHECK(r.code == gall::kOk);
  const auto est = stochgall::load_signals(d / "signals.csv", d / "meta_est.json");
  CHECK(est.size() == 6);
  CHECK(stochgall::csv::read_integers(d / "split.csv").size() == 12);
}

TEST_CASE("experiment runs are byte identical") {
  const auto d = fresh("experiment");
  stochgall::csv::write_text(d / "exp.json", R"({
    "mode": "label-quality", "seed": 5, "methods": ["stoch-gall", "average"], "sweep": [3, 6],
    "data": {"synthetic": {"n": 150, "test_n": 50, "dim": 3, "classes": 3,
                           "planted": {"signals_per_class": 2, "bound_slack": 0.03}}},
    "envelope": {"restarts": 1}
  })");
  for (const char* run_dir : {"a", "b"}) {
    REQUIRE(run({"--config", (d / "exp.json").string(), "--out", (d / run_dir).string(), "experiment"}).code ==
            gall::kOk);
  }
  for (const char* f : {"results.csv", "summary.json", "bounds.csv"}) {
    CHECK(slurp(d / "a" / f) == slurp(d / "b" / f));
  }
  CHECK(run({"--out", (d / "c").string(), "experiment"}).code == gall::kUsage);
}
