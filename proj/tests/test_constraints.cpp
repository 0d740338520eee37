#include <doctest.h>

#include "oracles.hpp"
#include "stochgall/constraints.hpp"

using namespace stochgall;

namespace {

WeakSignal signal(Vector q, int c = 0) { return {std::move(q), c, "q"}; }

LabelMatrix column_labels(const Vector& y0) {
  Matrix y(y0.size(), 2);
  y.col(0) = y0;
  y.col(1) = Vector::Ones(y0.size()) - y0;
  return LabelMatrix(y);
}

}  // namespace

TEST_CASE("error value examples") {
  CHECK(error_value(Vector::Ones(4), Vector::Ones(4)) == 0.0);
  CHECK(error_value(Vector{{1.0, 0.0}}, Vector{{0.0, 1.0}}) == 1.0);
  CHECK(error_value(Vector{{0.5, 0.5}}, Vector{{1.0, 0.0}}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(error_value(Vector::Ones(3), Vector::Ones(4)), Error);
}

TEST_CASE("precision value examples") {
  const Vector q{{1.0, 0.0, 1.0, 0.0}};
  CHECK(precision_value(q, q) == 1.0);
  CHECK(precision_value(q, Vector::Zero(4)) == 0.0);
  const Vector half{{0.5, 0.5}};
  CHECK(precision_value(half, Vector{{1.0, 0.0}}) == doctest::Approx(0.5));
  CHECK(precision_value(half, Vector{{1.0, 0.0}}) == doctest::Approx(oracle::precision_elementwise(half, Vector{{1.0, 0.0}})));
  try {
    precision_value(Vector::Zero(3), Vector::Ones(3));
    FAIL("expected a degenerate-signal error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Degenerate);
  }
}

TEST_CASE("vectorized and elementwise forms agree") {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 1 + static_cast<Index>(rng.index(20));
    const Vector q = oracle::random_probs(n, rng);
    const Vector y = oracle::random_probs(n, rng);
    CHECK(std::abs(error_value(q, y) - oracle::error_elementwise(q, y)) < 1e-12);
    CHECK(std::abs(precision_value(q, y) - oracle::precision_elementwise(q, y)) < 1e-12);
    const double e = error_value(q, y);
    CHECK(e >= 0.0);
    CHECK(e <= 1.0);
  }
}

TEST_CASE("constraint values and signs") {
  // error_value((0.2,0.4,0.3), truth-like column (0,1,0)) = (0.2 + 0.6 + 0.3)/3
  const Vector q{{0.2, 0.4, 0.3}};
  const auto y = column_labels(Vector{{0.0, 1.0, 0.0}});
  const double err = oracle::error_elementwise(q, Vector{{0.0, 1.0, 0.0}});
  const auto ce = LinearConstraint::error(signal(q), 0, err + 0.1);
  CHECK(ce.value(y) == doctest::Approx(-0.1));
  const double prec = oracle::precision_elementwise(q, Vector{{0.0, 1.0, 0.0}});
  const auto cp = LinearConstraint::precision(signal(q), 0, prec + 0.2);
  CHECK(cp.value(y) == doctest::Approx(0.2));

  ConstraintSet set({ce, cp, LinearConstraint::error(signal(q), 0, 0.0)});
  const Vector g = set.values(y);
  for (std::size_t j = 0; j < set.size(); ++j) CHECK(g[static_cast<Index>(j)] == set[j].value(y));
  CHECK(set.max_violation(y.values()) == doctest::Approx(std::max(0.2, err)));
}

TEST_CASE("constraint gradients") {
  const auto ce = LinearConstraint::error(signal(Vector{{1.0, 0.0, 0.5}}), 0, 0.3);
  const Matrix ge = ce.gradient(3, 2);
  CHECK(ge(0, 0) == doctest::Approx(-1.0 / 3.0));
  CHECK(ge(1, 0) == doctest::Approx(1.0 / 3.0));
  CHECK(ge(2, 0) == doctest::Approx(0.0));
  CHECK(ge.col(1).isZero());

  const auto cp = LinearConstraint::precision(signal(Vector{{1.0, 1.0}}, 1), 0, 0.3);
  const Matrix gp = cp.gradient(2, 2);
  CHECK(gp(0, 1) == doctest::Approx(-0.5));
  CHECK(gp(1, 1) == doctest::Approx(-0.5));
  CHECK(gp.col(0).isZero());

  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Index n = 6;
    const int c = 3;
    const auto s = signal(oracle::random_probs(n, rng), static_cast<int>(rng.index(3)));
    for (const auto& con : {LinearConstraint::error(s, 0, 0.2), LinearConstraint::precision(s, 0, 0.7)}) {
      const Matrix y = oracle::random_simplex_rows(n, c, rng);
      const Matrix grad = con.gradient(n, c);
      const auto f = [&](std::span<const double> x) {
        return con.value(Matrix(Eigen::Map<const Matrix>(x.data(), n, c)));
      };
      CHECK(finite_diff_check(f, std::span<const double>(grad.data(), static_cast<std::size_t>(grad.size())),
                              std::span<const double>(y.data(), static_cast<std::size_t>(y.size())), 1e-5) < 1e-6);
      Matrix acc = Matrix::Zero(n, c);
      con.add_scaled_gradient(2.0, acc);
      CHECK((acc - 2.0 * grad).cwiseAbs().maxCoeff() < 1e-15);
      CHECK(con.gradient_norm_squared() == doctest::Approx(grad.squaredNorm()));
    }
  }
}

TEST_CASE("constraint values are affine in the labels") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 2 + static_cast<Index>(rng.index(10));
    const int c = 2 + static_cast<int>(rng.index(3));
    const auto s = signal(oracle::random_probs(n, rng), static_cast<int>(rng.index(static_cast<std::uint64_t>(c))));
    const Matrix y1 = oracle::random_simplex_rows(n, c, rng);
    const Matrix y2 = oracle::random_simplex_rows(n, c, rng);
    const double a = rng.uniform();
    for (const auto& con : {LinearConstraint::error(s, 0, rng.uniform()), LinearConstraint::precision(s, 0, rng.uniform())}) {
      const double mixed = con.value(Matrix(a * y1 + (1 - a) * y2));
      CHECK(std::abs(mixed - (a * con.value(y1) + (1 - a) * con.value(y2))) < 1e-10);
    }
  }
}

TEST_CASE("generic constraints") {
  Matrix a{{1.0, -1.0}, {0.5, 0.0}};
  const auto con = LinearConstraint::generic(a, -0.25, "custom");
  const Matrix y{{0.5, 0.5}, {1.0, 0.0}};
  CHECK(con.value(y) == doctest::Approx(0.25));
  CHECK(con.gradient(2, 2) == a);
  CHECK(con.kind() == ConstraintKind::Generic);
  CHECK_THROWS_AS(con.value(Matrix::Zero(3, 2)), Error);
}

TEST_CASE("bundle expansion order and modes") {
  std::vector<WeakSignal> s{signal(Vector{{0.9, 0.1}}, 0), signal(Vector::Zero(2), 1), signal(Vector{{0.2, 0.7}}, 1)};
  const SignalBundle b(s, {{0.1, 0.8}, {0.2, 0.7}, {0.3, 0.6}});
  const auto both = ConstraintSet::from_bundle(b, ConstraintMode::ErrorAndPrecision);
  REQUIRE(both.size() == 5);
  CHECK(both[0].kind() == ConstraintKind::Error);
  CHECK(both[1].kind() == ConstraintKind::Precision);
  CHECK(both[2].kind() == ConstraintKind::Error);
  CHECK(both[2].signal_index() == 1);
  CHECK(both[3].signal_index() == 2);
  CHECK(both[4].bound() == 0.6);
  CHECK(ConstraintSet::from_bundle(b, ConstraintMode::ErrorOnly).size() == 3);
  CHECK(ConstraintSet::from_bundle(b, ConstraintMode::PrecisionOnly).size() == 2);
  CHECK(constraint_mode_from_string("stoch-gall") == ConstraintMode::ErrorAndPrecision);
  CHECK(constraint_mode_from_string("error-only") == ConstraintMode::ErrorOnly);
  CHECK_THROWS_AS(constraint_mode_from_string("nope"), Error);
}

TEST_CASE("constraint sets round trip through JSON") {
  Rng rng(2);
  std::vector<WeakSignal> s{signal(oracle::random_probs(4, rng), 0), signal(oracle::random_probs(4, rng), 1)};
  const SignalBundle b(s, {{0.1, 0.8}, {0.2, 0.7}});
  auto set = ConstraintSet::from_bundle(b, ConstraintMode::ErrorAndPrecision);
  set.push_back(LinearConstraint::generic(Matrix::Constant(4, 2, 0.125), 0.5, "g"));
  const auto doc = constraints_to_json(set);
  CHECK(doc.size() == 5);
  CHECK(doc[1]["kind"] == "precision");
  const auto back = constraints_from_json(doc, b);
  const Matrix y = oracle::random_simplex_rows(4, 2, rng);
  CHECK(back.values(y) == set.values(y));
}

TEST_CASE("bound estimation") {
  const Dataset d(Matrix::Zero(10, 1), std::vector<int>{0, 1, 1, 1, 1, 1, 1, 1, 1, 1}, 2);
  ValidationSplit split;
  for (Index i = 0; i < 10; ++i) {
    split.indices.push_back(i);
    split.labels.push_back(d.require_labels()[static_cast<std::size_t>(i)]);
  }
  Vector truth_col = Vector::Zero(10);
  truth_col[0] = 1.0;
  const auto exact = estimate_bounds(signal(truth_col), split, 0.0);
  CHECK(exact.bounds.error == 0.0);
  CHECK(exact.bounds.precision == 1.0);

  const auto constant = estimate_bounds(signal(Vector::Ones(10)), split, 0.0);
  CHECK(constant.bounds.error == doctest::Approx(0.9));
  CHECK(constant.bounds.precision == doctest::Approx(0.1));

  const auto slack = estimate_bounds(signal(Vector::Ones(10)), split, 0.05);
  CHECK(slack.bounds.error == doctest::Approx(0.95));
  CHECK(slack.bounds.precision == doctest::Approx(0.05));
  const auto clipped = estimate_bounds(signal(truth_col), split, 0.05);
  CHECK(clipped.bounds.error == doctest::Approx(0.05));
  CHECK(clipped.bounds.precision == doctest::Approx(0.95));

  const auto zero = estimate_bounds(signal(Vector::Zero(10)), split, 0.0);
  CHECK(zero.degenerate_precision);
  CHECK(zero.bounds.precision == 0.0);

  CHECK_THROWS_AS(estimate_bounds(signal(Vector::Ones(10)), ValidationSplit{}, 0.0), Error);
}
