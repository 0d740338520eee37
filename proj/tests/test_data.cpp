#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "oracles.hpp"
#include "stochgall/csv.hpp"
#include "stochgall/data.hpp"

using namespace stochgall;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "stochgall_test_data";
  fs::create_directories(dir);
  return dir / name;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("smallest well-formed dataset") {
  write(scratch("x.csv"), "0.1,0.2\n0.3,0.4\n0.5,0.6\n0.7,0.8\n");
  write(scratch("y.csv"), "0\n1\n0\n1\n");
  const auto d = load_dataset(scratch("x.csv"), scratch("y.csv"));
  CHECK(d.size() == 4);
  CHECK(d.dim() == 2);
  CHECK(d.num_classes() == 2);
  CHECK(d.require_labels() == std::vector<int>{0, 1, 0, 1});

  const auto unlabeled = load_dataset(scratch("x.csv"), std::nullopt, 3);
  CHECK_FALSE(unlabeled.has_labels());
  CHECK(unlabeled.num_classes() == 3);
  CHECK_THROWS_AS(unlabeled.require_labels(), Error);
}

TEST_CASE("dataset ingestion errors") {
  write(scratch("x.csv"), "0.1,0.2\n0.3,0.4\n0.5,0.6\n0.7,0.8\n");
  write(scratch("y3.csv"), "0\n1\n0\n");
  try {
    load_dataset(scratch("x.csv"), scratch("y3.csv"));
    FAIL("expected a dimension error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Dimension);
  }

  write(scratch("bad.csv"), "0.1,0.2\n0.3,abc\n");
  try {
    load_dataset(scratch("bad.csv"), std::nullopt, 2);
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Parse);
    CHECK(std::string(e.what()).find("row 2 col 2") != std::string::npos);
  }

  write(scratch("ragged.csv"), "0.1,0.2\n0.3\n");
  try {
    csv::read_matrix(scratch("ragged.csv"));
    FAIL("expected an ingestion error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Ingestion);
  }
  CHECK_THROWS_AS(csv::read_matrix(scratch("does_not_exist.csv")), Error);
}

TEST_CASE("dataset invariants") {
  CHECK_THROWS_AS(Dataset(Matrix(0, 2), std::nullopt, 2), Error);
  Matrix bad = Matrix::Zero(2, 2);
  bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(Dataset(bad, std::nullopt, 2), Error);
  CHECK_THROWS_AS(Dataset(Matrix::Zero(2, 2), std::vector<int>{0, 2}, 2), Error);
  CHECK_THROWS_AS(Dataset(Matrix::Zero(2, 2), std::vector<int>{0, 0}), Error);
  CHECK_THROWS_AS(Dataset(Matrix::Zero(2, 2), std::vector<int>{0, -1}, 2), Error);
}

TEST_CASE("label matrix invariants") {
  Matrix ok{{0.25, 0.75}, {1.0, 0.0}};
  CHECK_NOTHROW(LabelMatrix{ok});
  Matrix off = ok;
  off(0, 0) += 2e-9;
  CHECK_THROWS_AS(LabelMatrix{off}, Error);
  Matrix tiny = ok;
  tiny(0, 0) += 5e-10;
  CHECK_NOTHROW(LabelMatrix{tiny});
  Matrix neg{{-0.1, 1.1}};
  CHECK_THROWS_AS(LabelMatrix{neg}, Error);

  const auto oh = LabelMatrix::one_hot({2, 0}, 3);
  CHECK(oh.values() == Matrix{{0, 0, 1}, {1, 0, 0}});
  CHECK(LabelMatrix::uniform(2, 4).values() == Matrix::Constant(2, 4, 0.25));
}

TEST_CASE("signals load with their metadata") {
  write(scratch("s.csv"), "0.9,0.1\n0.2,0.8\n0.5,0.5\n");
  write(scratch("m.json"),
        R"([{"name":"a","target_class":0,"b_error":0.2,"b_precision":0.7},
            {"name":"b","target_class":1,"b_error":0.3,"b_precision":0.6}])");
  const auto bundle = load_signals(scratch("s.csv"), scratch("m.json"));
  REQUIRE(bundle.size() == 2);
  CHECK(bundle.signals()[0].name == "a");
  CHECK(bundle.signals()[1].target_class == 1);
  CHECK(bundle.bounds()[1].error == 0.3);
  CHECK(bundle.bounds()[0].precision == 0.7);
  CHECK(bundle.signals()[1].probs[1] == 0.8);
  CHECK(bundle.example_count() == 3);
  CHECK(bundle.min_num_classes() == 2);

  write(scratch("m3.json"),
        R"([{"name":"a","target_class":0,"b_error":0.2,"b_precision":0.7},
            {"name":"b","target_class":1,"b_error":0.3,"b_precision":0.6},
            {"name":"c","target_class":1,"b_error":0.3,"b_precision":0.6}])");
  try {
    load_signals(scratch("s.csv"), scratch("m3.json"));
    FAIL("expected a mismatch error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Ingestion);
    CHECK(std::string(e.what()).find("mismatch") != std::string::npos);
  }

  write(scratch("s_bad.csv"), "0.1,0.1\n0.1,0.1\n0.1,0.1\n0.1,0.1\n1.3,0.1\n");
  try {
    load_signals(scratch("s_bad.csv"), scratch("m.json"));
    FAIL("expected a range error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Validation);
    CHECK(std::string(e.what()).find("row 5") != std::string::npos);
  }
}

TEST_CASE("bundle slicing") {
  std::vector<WeakSignal> s;
  for (int k = 0; k < 3; ++k) s.push_back({Vector::Constant(4, 0.1 * (k + 1)), k % 2, "s" + std::to_string(k)});
  const SignalBundle b(s, {{0.1, 0.9}, {0.2, 0.8}, {0.3, 0.7}});
  const auto p = b.prefix(2);
  CHECK(p.size() == 2);
  CHECK(p.signals()[1].name == "s1");
  const auto joined = p.concat(b.prefix(1));
  CHECK(joined.size() == 3);
  CHECK(joined.signals()[2].name == "s0");
  CHECK(SignalBundle().concat(p).size() == 2);
  const auto rebound = b.with_bounds({{1, 0}, {1, 0}, {1, 0}});
  CHECK(rebound.bounds()[2].error == 1.0);
  CHECK_THROWS_AS(b.with_bounds({{1, 0}}), Error);
  CHECK_THROWS_AS(SignalBundle(s, {{1.5, 0.0}, {0, 0}, {0, 0}}), Error);
}

TEST_CASE("csv round trips are bit exact") {
  Rng rng(4);
  Matrix m(20, 3);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * std::pow(10.0, rng.uniform(-8, 8));
  csv::write_matrix(scratch("round.csv"), m);
  CHECK(csv::read_matrix(scratch("round.csv")) == m);

  Matrix y = oracle::random_simplex_rows(6, 3, rng);
  for (Index i = 0; i < 6; ++i) y(i, 2) = 1.0 - y(i, 0) - y(i, 1);
  y = y.cwiseMax(0.0);
  const LabelMatrix labels(y);
  save_label_matrix(labels, scratch("labels.csv"));
  CHECK(load_label_matrix(scratch("labels.csv")).values() == labels.values());

  const Dataset d(m, std::vector<int>(20, 1), 3);
  save_dataset(d, scratch("dx.csv"), scratch("dy.csv"));
  const auto back = load_dataset(scratch("dx.csv"), scratch("dy.csv"), 3);
  CHECK(back.features() == d.features());
  CHECK(back.require_labels() == d.require_labels());

  std::vector<WeakSignal> s{{Vector{{0.123456789012, 1.0, 0.0}}, 0, "x"}, {Vector{{0.5, 0.25, 0.125}}, 2, "y"}};
  const SignalBundle b(s, {{0.3, 0.4}, {0.1, 0.2}});
  save_signals(b, scratch("sig.csv"), scratch("sig.json"));
  const auto b2 = load_signals(scratch("sig.csv"), scratch("sig.json"));
  CHECK(b2.signals()[0].probs == b.signals()[0].probs);
  CHECK(b2.signals()[1].target_class == 2);
  CHECK(b2.signals()[1].name == "y");
  CHECK(b2.bounds()[0].precision == 0.4);
}

TEST_CASE("validation split is stratified and deterministic") {
  std::vector<int> labels(1000);
  for (int i = 0; i < 1000; ++i) labels[static_cast<std::size_t>(i)] = i % 10;
  const Dataset d(Matrix::Zero(1000, 1), labels, 10);
  const auto split = split_validation(d, 0.01, 3);
  REQUIRE(split.size() == 10);
  CHECK(std::set<int>(split.labels.begin(), split.labels.end()).size() == 10);
  for (std::size_t r = 0; r < split.size(); ++r) {
    CHECK(labels[static_cast<std::size_t>(split.indices[r])] == split.labels[r]);
  }
  CHECK(std::is_sorted(split.indices.begin(), split.indices.end()));
  const auto again = split_validation(d, 0.01, 3);
  CHECK(again.indices == split.indices);
  CHECK(split_validation(d, 0.01, 4).indices != split.indices);

  const Dataset small(Matrix::Zero(4, 1), std::vector<int>{0, 1, 0, 1}, 2);
  CHECK(split_validation(small, 0.5, 1).size() == 2);
  CHECK_THROWS_AS(split_validation(small, 0.05, 1), Error);
  CHECK_THROWS_AS(split_validation(small, 1.5, 1), Error);
  const Dataset unlabeled(Matrix::Zero(4, 1), std::nullopt, 2);
  CHECK_THROWS_AS(split_validation(unlabeled, 0.5, 1), Error);
}

TEST_CASE("validation split ignores the features") {
  std::vector<int> labels(200);
  for (int i = 0; i < 200; ++i) labels[static_cast<std::size_t>(i)] = (i * 7) % 4;
  Rng rng(2);
  Matrix a(200, 3), b(200, 3);
  for (Index i = 0; i < a.size(); ++i) {
    a.data()[i] = rng.normal();
    b.data()[i] = rng.normal();
  }
  CHECK(split_validation(Dataset(a, labels, 4), 0.1, 8).indices ==
        split_validation(Dataset(b, labels, 4), 0.1, 8).indices);
}

TEST_CASE("label error") {
  const auto truth = std::vector<int>{0, 1};
  CHECK(label_error(LabelMatrix::one_hot(truth, 2), truth) == 0.0);
  CHECK(label_error(LabelMatrix::one_hot({1, 0}, 2), truth) == 1.0);
  CHECK(label_error(LabelMatrix::uniform(2, 2), truth) == 0.5);
}
