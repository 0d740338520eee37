#include <doctest.h>

#include "oracles.hpp"
#include "stochgall/envelope.hpp"

using namespace stochgall;

namespace {

struct Tiny {
  ConstraintSet constraints;
  std::vector<int> truth;
};

// Random two-class instance whose bounds are read off a random reference
// labelling, loosened by a random slack, so the set is never empty.
Tiny random_tiny(Rng& rng) {
  const Index n = 2 + static_cast<Index>(rng.index(5));
  std::vector<int> truth(static_cast<std::size_t>(n));
  for (auto& t : truth) t = static_cast<int>(rng.index(2));
  const Matrix reference = oracle::random_simplex_rows(n, 2, rng);
  const auto count = 1 + rng.index(3);
  ConstraintSet set;
  for (std::uint64_t j = 0; j < count; ++j) {
    WeakSignal s{oracle::random_probs(n, rng), static_cast<int>(rng.index(2)), "w"};
    const Vector col = reference.col(s.target_class);
    const double slack = rng.uniform(0.0, 0.1);
    if (rng.uniform() < 0.6) {
      set.push_back(LinearConstraint::error(s, static_cast<Index>(j), oracle::error_elementwise(s.probs, col) + slack));
    } else {
      set.push_back(LinearConstraint::precision(s, static_cast<Index>(j),
                                                oracle::precision_elementwise(s.probs, col) - slack));
    }
  }
  return {std::move(set), std::move(truth)};
}

}  // namespace

TEST_CASE("unconstrained envelope spans everything") {
  const auto truth = LabelMatrix::one_hot({0, 1, 2, 1}, 3);
  CHECK(feasible_error_envelope({}, truth, EnvelopeDirection::Min).value == doctest::Approx(0.0));
  CHECK(feasible_error_envelope({}, truth, EnvelopeDirection::Max).value == doctest::Approx(1.0));
}

TEST_CASE("a perfect signal pins the labels") {
  const std::vector<int> t{0, 1, 1, 0, 1};
  Vector q(5);
  for (Index i = 0; i < 5; ++i) q[i] = t[static_cast<std::size_t>(i)] == 0 ? 1.0 : 0.0;
  ConstraintSet set({LinearConstraint::error({q, 0, "exact"}, 0, 0.0)});
  const auto truth = LabelMatrix::one_hot(t, 2);
  const auto lo = feasible_error_envelope(set, truth, EnvelopeDirection::Min);
  const auto hi = feasible_error_envelope(set, truth, EnvelopeDirection::Max);
  CHECK(lo.feasible());
  CHECK(hi.feasible());
  CHECK(lo.value == doctest::Approx(0.0).epsilon(1e-3));
  CHECK(std::abs(hi.value) < 1e-3);
}

TEST_CASE("envelope matches vertex enumeration on tiny instances") {
  Rng rng(2024);
  int compared = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto inst = random_tiny(rng);
    const auto want = oracle::two_class_error_extremes(inst.constraints, inst.truth);
    REQUIRE(want.feasible);
    const auto truth = LabelMatrix::one_hot(inst.truth, 2);
    const auto lo = feasible_error_envelope(inst.constraints, truth, EnvelopeDirection::Min);
    const auto hi = feasible_error_envelope(inst.constraints, truth, EnvelopeDirection::Max);
    CHECK(lo.feasible());
    CHECK(hi.feasible());
    CHECK(std::abs(lo.value - want.min_error) <= 1e-3);
    CHECK(std::abs(hi.value - want.max_error) <= 1e-3);
    ++compared;
  }
  CHECK(compared == 50);
}

TEST_CASE("contradictory constraints are reported infeasible") {
  const Vector q{{1.0, 0.0, 1.0}};
  ConstraintSet set({LinearConstraint::error({q, 0, "a"}, 0, 0.0),
                     LinearConstraint::error({Vector::Ones(3) - q, 0, "b"}, 1, 0.0)});
  const auto truth = LabelMatrix::one_hot({0, 1, 0}, 2);
  CHECK_FALSE(oracle::two_class_error_extremes(set, {0, 1, 0}).feasible);
  const auto r = feasible_error_envelope(set, truth, EnvelopeDirection::Max);
  CHECK_FALSE(r.feasible());
  CHECK(r.max_violation > 0.1);
}

TEST_CASE("envelope options are validated") {
  EnvelopeOptions opts;
  opts.restarts = 0;
  CHECK_THROWS_AS(feasible_error_envelope({}, LabelMatrix::uniform(2, 2), EnvelopeDirection::Min, opts), Error);
  CHECK_THROWS_AS(maximize_linear(Matrix::Zero(2, 2), {}, Matrix::Zero(3, 2), {}), Error);
}

TEST_CASE("linear maximisation over the bare simplex product") {
  const Matrix w{{0.1, 0.3, 0.2}, {0.5, -1.0, 0.0}};
  const auto r = maximize_linear(w, {}, Matrix::Constant(2, 3, 1.0 / 3.0), {});
  CHECK(r.labels == Matrix{{0, 1, 0}, {1, 0, 0}});
  CHECK(r.objective == doctest::Approx(0.8));
}
