#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "stochgall/baselines.hpp"
#include "stochgall/constraints.hpp"
#include "stochgall/signals.hpp"

using namespace stochgall;

namespace {

WeakSignal sig(std::initializer_list<double> v, int c) {
  std::vector<double> x(v);
  return {Eigen::Map<Vector>(x.data(), static_cast<Index>(x.size())), c, "s"};
}

SignalBundle bundle_of(std::vector<WeakSignal> s) {
  std::vector<Bounds> b(s.size());
  return SignalBundle(std::move(s), std::move(b));
}

}  // namespace

TEST_CASE("majority vote examples") {
  const auto b = bundle_of({sig({0.9, 0.2, 0.5}, 0), sig({0.6, 0.1, 0.1}, 0), sig({0.7, 0.8, 0.5}, 1)});
  const Matrix m = majority_vote(b, 3).values();
  CHECK(m.row(0).isApprox(Matrix{{2.0 / 3.0, 1.0 / 3.0, 0.0}}));
  CHECK(m.row(1).isApprox(Matrix{{0.0, 1.0, 0.0}}));
  // Row 2: half a vote each for classes 0 and 1.
  CHECK(m.row(2).isApprox(Matrix{{0.5, 0.5, 0.0}}));

  const auto silent = bundle_of({sig({0.1, 0.2}, 0)});
  CHECK(majority_vote(silent, 4).values() == Matrix::Constant(2, 4, 0.25));
  CHECK_THROWS_AS(majority_vote(SignalBundle{}, 2), Error);
  CHECK_THROWS_AS(majority_vote(bundle_of({sig({0.1}, 3)}), 2), Error);
}

TEST_CASE("average labels examples") {
  const auto b = bundle_of({sig({0.8, 0.2}, 0), sig({0.4, 0.0}, 0), sig({0.4, 0.0}, 1)});
  const Matrix m = average_labels(b, 2).values();
  CHECK(m(0, 0) == doctest::Approx(0.6));
  CHECK(m(0, 1) == doctest::Approx(0.4));
  CHECK(m(1, 0) == doctest::Approx(1.0));
  CHECK(m(1, 1) == doctest::Approx(0.0));

  const auto zeros = bundle_of({sig({0.0}, 0), sig({0.0}, 1)});
  CHECK(average_labels(zeros, 2).values() == Matrix::Constant(1, 2, 0.5));

  try {
    average_labels(bundle_of({sig({0.5}, 0), sig({0.5}, 2)}), 4);
    FAIL("expected a coverage error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Validation);
    CHECK(std::string(e.what()).find("1, 3") != std::string::npos);
  }
}

TEST_CASE("baselines match elementwise oracles on random bundles") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 1 + static_cast<Index>(rng.index(8));
    const int classes = 2 + static_cast<int>(rng.index(3));
    std::vector<WeakSignal> s;
    for (int c = 0; c < classes; ++c) {
      const int copies = 1 + static_cast<int>(rng.index(3));
      for (int k = 0; k < copies; ++k) s.push_back({oracle::random_probs(n, rng), c, "r"});
    }
    const auto b = bundle_of(s);
    const Matrix mv = majority_vote(b, classes).values();
    const Matrix av = average_labels(b, classes).values();
    for (Index i = 0; i < n; ++i) {
      std::vector<double> votes(static_cast<std::size_t>(classes), 0.0), means(votes), counts(votes);
      for (const auto& w : s) {
        const auto c = static_cast<std::size_t>(w.target_class);
        votes[c] += w.probs[i] > 0.5 ? 1.0 : (w.probs[i] == 0.5 ? 0.5 : 0.0);
        means[c] += w.probs[i];
        counts[c] += 1.0;
      }
      double vt = 0.0, mt = 0.0;
      for (std::size_t c = 0; c < votes.size(); ++c) {
        means[c] /= counts[c];
        vt += votes[c];
        mt += means[c];
      }
      for (int c = 0; c < classes; ++c) {
        const auto k = static_cast<std::size_t>(c);
        const double want_mv = vt > 0 ? votes[k] / vt : 1.0 / classes;
        const double want_av = mt > 0 ? means[k] / mt : 1.0 / classes;
        CHECK(std::abs(mv(i, c) - want_mv) < 1e-12);
        CHECK(std::abs(av(i, c) - want_av) < 1e-12);
      }
    }
  }
}

TEST_CASE("blob generator") {
  const auto gen = BlobGenerator::create(3, 4, 2.0, 0.5, 8);
  const auto a = gen.sample(103, 1);
  const auto b = gen.sample(103, 1);
  CHECK(a.features() == b.features());
  CHECK(a.num_classes() == 4);
  std::vector<int> counts(4, 0);
  for (int y : a.require_labels()) ++counts[static_cast<std::size_t>(y)];
  CHECK(*std::max_element(counts.begin(), counts.end()) - *std::min_element(counts.begin(), counts.end()) <= 1);
  CHECK(gen.sample(103, 2).features() != a.features());
  CHECK_THROWS_AS(BlobGenerator::create(3, 1, 1.0, 1.0, 0), Error);
  CHECK_THROWS_AS(BlobGenerator::create(3, 2, 1.0, 0.0, 0), Error);
}

TEST_CASE("noiseless planted signals are the truth") {
  const auto d = BlobGenerator::create(2, 3, 1.0, 1.0, 2).sample(60, 3);
  PlantedSpec spec;
  spec.signals_per_class = 2;
  spec.flip_noise = 0.0;
  const auto b = plant_signals(d, spec);
  REQUIRE(b.size() == 6);
  for (std::size_t k = 0; k < b.size(); ++k) {
    const auto& s = b.signals()[k];
    CHECK(s.target_class == static_cast<int>(k % 3));
    for (Index i = 0; i < d.size(); ++i) {
      CHECK(s.probs[i] == (d.require_labels()[static_cast<std::size_t>(i)] == s.target_class ? 1.0 : 0.0));
    }
    CHECK(b.bounds()[k].error == 0.0);
    CHECK(b.bounds()[k].precision == 1.0);
  }
  CHECK(b.signals()[0].name == "planted_c0_k0");
  CHECK(b.signals()[4].name == "planted_c1_k1");
}

TEST_CASE("planted noise level and exact bounds") {
  const auto d = BlobGenerator::create(2, 2, 1.0, 1.0, 4).sample(4000, 5);
  PlantedSpec spec;
  spec.signals_per_class = 1;
  spec.flip_noise = 0.3;
  spec.bound_slack = 0.02;
  spec.seed = 9;
  const auto b = plant_signals(d, spec);
  for (std::size_t k = 0; k < b.size(); ++k) {
    const auto& s = b.signals()[k];
    Vector truth_col(d.size());
    for (Index i = 0; i < d.size(); ++i) {
      truth_col[i] = d.require_labels()[static_cast<std::size_t>(i)] == s.target_class ? 1.0 : 0.0;
    }
    const double err = oracle::error_elementwise(s.probs, truth_col);
    // A replaced entry is off by |U - t|, which averages 1/2.
    CHECK(err == doctest::Approx(0.15).epsilon(0.15));
    CHECK(b.bounds()[k].error == doctest::Approx(err + 0.02).epsilon(1e-12));
    CHECK(b.bounds()[k].precision == doctest::Approx(oracle::precision_elementwise(s.probs, truth_col) - 0.02).epsilon(1e-12));
    // The bounds are loose enough that the truth satisfies every constraint.
  }
  const auto cons = ConstraintSet::from_bundle(b, ConstraintMode::ErrorAndPrecision);
  CHECK(cons.max_violation(LabelMatrix::one_hot(d.require_labels(), 2).values()) <= 0.0);
  CHECK(plant_signals(d, spec).signals()[1].probs == b.signals()[1].probs);
}

TEST_CASE("planted copies and confusion") {
  const auto d = BlobGenerator::create(2, 3, 1.0, 1.0, 6).sample(900, 7);
  PlantedSpec spec;
  spec.signals_per_class = 1;
  spec.flip_noise = 0.0;
  spec.confused_signals = 1;
  spec.confusion_rate = 1.0;
  spec.redundancy_copies = 3;
  spec.duplicate_source = 0;
  const auto b = plant_signals(d, spec);
  REQUIRE(b.size() == 6);
  for (std::size_t j = 3; j < 6; ++j) {
    CHECK(b.signals()[j].probs == b.signals()[0].probs);
    CHECK(b.signals()[j].name == "copy" + std::to_string(j - 3) + "_planted_c0_k0");
  }
  // Signal 0 now fires on every class-1 row.
  for (Index i = 0; i < d.size(); ++i) {
    if (d.require_labels()[static_cast<std::size_t>(i)] == 1) CHECK(b.signals()[0].probs[i] >= 0.75);
  }
  CHECK(b.signals()[1].probs.maxCoeff() == 1.0);

  spec.duplicate_jitter = 0.05;
  const auto jittered = plant_signals(d, spec);
  CHECK(jittered.signals()[3].probs != jittered.signals()[0].probs);
  CHECK(jittered.signals()[3].probs.minCoeff() >= 0.0);
  CHECK(jittered.signals()[3].probs.maxCoeff() <= 1.0);

  spec.duplicate_source = 3;
  CHECK_THROWS_AS(plant_signals(d, spec), Error);
  spec = PlantedSpec{};
  spec.flip_noise = 0.5;
  CHECK_THROWS_AS(plant_signals(d, spec), Error);
}

TEST_CASE("exemplar signal by hand") {
  const Dataset d(Matrix{{0.0, 9.0}, {1.0, 9.0}, {2.0, 9.0}, {3.0, 9.0}, {4.0, 9.0}}, std::vector<int>{0, 0, 1, 1, 1}, 2);
  ExemplarSpec spec;
  spec.region = {0};
  const auto r = exemplar_signal(d, spec);
  CHECK_FALSE(r.zero_variance);
  // distances 0..4: mean 2, population std sqrt(2).
  for (Index i = 0; i < 5; ++i) {
    const double z = (static_cast<double>(i) - 2.0) / std::sqrt(2.0);
    CHECK(r.signal.probs[i] == doctest::Approx(1.0 / (1.0 + std::exp(z))).epsilon(1e-14));
  }
  for (Index i = 1; i < 5; ++i) CHECK(r.signal.probs[i] < r.signal.probs[i - 1]);
  CHECK(r.signal.name == "exemplar_0");

  spec.standardize = false;
  CHECK(exemplar_signal(d, spec).signal.probs[0] == 0.5);

  spec.standardize = true;
  spec.region = {1};
  const auto flat = exemplar_signal(d, spec);
  CHECK(flat.zero_variance);
  CHECK(flat.signal.probs == Vector::Constant(5, 0.5));

  spec.region = {2};
  CHECK_THROWS_AS(exemplar_signal(d, spec), Error);
  spec.region = {};
  CHECK_THROWS_AS(exemplar_signal(d, spec), Error);
}

TEST_CASE("threshold signal") {
  const Dataset d(Matrix{{0.5}, {-1.0}, {2.0}}, std::nullopt, 2);
  ThresholdRule rule;
  rule.threshold = 0.5;
  rule.target_class = 1;
  const auto s = threshold_signal(d, rule);
  CHECK(s.probs == Vector{{0.1, 0.1, 0.9}});
  CHECK(s.target_class == 1);
  rule.above = false;
  CHECK(threshold_signal(d, rule).probs == Vector{{0.1, 0.9, 0.1}});
  rule.feature = 1;
  CHECK_THROWS_AS(threshold_signal(d, rule), Error);
}
