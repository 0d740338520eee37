#include "stochgall/signals.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stochgall/numerics.hpp"

namespace stochgall {

BlobGenerator BlobGenerator::create(Index dim, int num_classes, double separation, double noise_std,
                                    std::uint64_t seed) {
  if (dim < 1 || num_classes < 2 || noise_std <= 0.0) {
    throw Error(ErrorKind::Config, "blobs need dim >= 1, at least 2 classes and positive noise");
  }
  Rng rng(seed);
  BlobGenerator g;
  g.noise_std = noise_std;
  g.centers.resize(num_classes, dim);
  for (Index c = 0; c < num_classes; ++c) {
    for (Index j = 0; j < dim; ++j) g.centers(c, j) = separation * rng.normal();
  }
  return g;
}

Dataset BlobGenerator::sample(Index n, std::uint64_t seed) const {
  const auto num_classes = static_cast<int>(centers.rows());
  Rng rng(seed);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = static_cast<int>(i % num_classes);
  rng.shuffle(std::span<int>(labels));
  Matrix x(n, centers.cols());
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < x.cols(); ++j) {
      x(i, j) = centers(labels[static_cast<std::size_t>(i)], j) + noise_std * rng.normal();
    }
  }
  return Dataset(std::move(x), std::move(labels), num_classes);
}

Bounds true_bounds(const WeakSignal& signal, const std::vector<int>& truth, double slack) {
  if (static_cast<Index>(truth.size()) != signal.probs.size()) {
    throw Error(ErrorKind::Dimension, "signal and truth differ in length");
  }
  double err = 0.0;
  double hit = 0.0;
  const double mass = signal.probs.sum();
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double q = signal.probs[static_cast<Index>(i)];
    const double t = truth[i] == signal.target_class ? 1.0 : 0.0;
    err += q * (1.0 - t) + (1.0 - q) * t;
    hit += q * t;
  }
  const auto n = static_cast<double>(truth.size());
  return {std::clamp(err / n + slack, 0.0, 1.0), mass > 0.0 ? std::clamp(hit / mass - slack, 0.0, 1.0) : 0.0};
}

SignalBundle plant_signals(const Dataset& dataset, const PlantedSpec& spec) {
  const auto& truth = dataset.require_labels();
  const int num_classes = dataset.num_classes();
  if (spec.signals_per_class < 1) throw Error(ErrorKind::Config, "signals_per_class must be positive");
  if (!(spec.flip_noise >= 0.0 && spec.flip_noise < 0.5)) {
    throw Error(ErrorKind::Config, "flip_noise must lie in [0, 0.5)");
  }
  if (!(spec.confusion_rate >= 0.0 && spec.confusion_rate <= 1.0)) {
    throw Error(ErrorKind::Config, "confusion_rate must lie in [0, 1]");
  }
  if (spec.redundancy_copies < 0 || spec.duplicate_jitter < 0.0) {
    throw Error(ErrorKind::Config, "redundancy copies and jitter must be nonnegative");
  }
  const Index n = dataset.size();
  const Rng root(spec.seed);

  std::vector<WeakSignal> signals;
  for (int k = 0; k < spec.signals_per_class; ++k) {
    for (int c = 0; c < num_classes; ++c) {
      const auto index = signals.size();
      Rng rng = root.split(index);
      const int partner = (c + 1) % num_classes;
      const bool confused = static_cast<int>(index) < spec.confused_signals;
      WeakSignal s;
      s.target_class = c;
      s.name = "planted_c" + std::to_string(c) + "_k" + std::to_string(k);
      s.probs.resize(n);
      for (Index i = 0; i < n; ++i) {
        const int label = truth[static_cast<std::size_t>(i)];
        double q = label == c ? 1.0 : 0.0;
        // Draw both variates unconditionally so the stream layout is fixed.
        const double flip = rng.uniform();
        const double replacement = rng.uniform();
        const double confuse = rng.uniform();
        const double confused_value = 1.0 - 0.25 * rng.uniform();
        if (flip < spec.flip_noise) q = replacement;
        if (confused && label == partner && confuse < spec.confusion_rate) q = confused_value;
        s.probs[i] = q;
      }
      signals.push_back(std::move(s));
    }
  }

  if (spec.redundancy_copies > 0) {
    if (spec.duplicate_source < 0 || spec.duplicate_source >= static_cast<int>(signals.size())) {
      throw Error(ErrorKind::Config, "duplicate_source outside the base signals");
    }
    const WeakSignal source = signals[static_cast<std::size_t>(spec.duplicate_source)];
    for (int j = 0; j < spec.redundancy_copies; ++j) {
      Rng rng = root.split(0x100000ULL + static_cast<std::uint64_t>(j));
      WeakSignal copy = source;
      copy.name = "copy" + std::to_string(j) + "_" + source.name;
      if (spec.duplicate_jitter > 0.0) {
        for (Index i = 0; i < n; ++i) {
          copy.probs[i] = std::clamp(copy.probs[i] + spec.duplicate_jitter * rng.normal(), 0.0, 1.0);
        }
      }
      signals.push_back(std::move(copy));
    }
  }

  std::vector<Bounds> bounds;
  bounds.reserve(signals.size());
  for (const auto& s : signals) bounds.push_back(true_bounds(s, truth, spec.bound_slack));
  return SignalBundle(std::move(signals), std::move(bounds));
}

ExemplarResult exemplar_signal(const Dataset& dataset, const ExemplarSpec& spec) {
  if (spec.region.empty()) throw Error(ErrorKind::Config, "exemplar region must be nonempty");
  if (spec.reference_index < 0 || spec.reference_index >= dataset.size()) {
    throw Error(ErrorKind::Validation, "exemplar reference index outside dataset");
  }
  for (Index f : spec.region) {
    if (f < 0 || f >= dataset.dim()) throw Error(ErrorKind::Validation, "exemplar region index outside features");
  }
  if (spec.target_class < 0 || spec.target_class >= dataset.num_classes()) {
    throw Error(ErrorKind::Validation, "exemplar target class outside dataset classes");
  }
  const Matrix& x = dataset.features();
  const Index n = dataset.size();
  Vector dist(n);
  for (Index i = 0; i < n; ++i) {
    double sq = 0.0;
    for (Index f : spec.region) {
      const double diff = x(i, f) - x(spec.reference_index, f);
      sq += diff * diff;
    }
    dist[i] = std::sqrt(sq);
  }

  ExemplarResult out;
  out.signal.target_class = spec.target_class;
  out.signal.name = spec.name.empty() ? "exemplar_" + std::to_string(spec.reference_index) : spec.name;
  Vector z = dist;
  if (spec.standardize) {
    const double mean = dist.mean();
    const double std = std::sqrt((dist.array() - mean).square().mean());
    if (!(std > 0.0)) {
      out.signal.probs = Vector::Constant(n, 0.5);
      out.zero_variance = true;
      return out;
    }
    z = (dist.array() - mean) / std;
  }
  out.signal.probs = (1.0 / (1.0 + z.array().exp())).matrix();
  return out;
}

WeakSignal threshold_signal(const Dataset& dataset, const ThresholdRule& rule) {
  if (rule.feature < 0 || rule.feature >= dataset.dim()) {
    throw Error(ErrorKind::Validation, "rule feature outside dataset");
  }
  if (!(rule.p_true >= 0.0 && rule.p_true <= 1.0 && rule.p_false >= 0.0 && rule.p_false <= 1.0)) {
    throw Error(ErrorKind::Validation, "rule probabilities outside [0,1]");
  }
  WeakSignal s;
  s.target_class = rule.target_class;
  s.name = rule.name.empty() ? "rule_f" + std::to_string(rule.feature) : rule.name;
  s.probs.resize(dataset.size());
  for (Index i = 0; i < dataset.size(); ++i) {
    const double v = dataset.features()(i, rule.feature);
    const bool fires = rule.above ? v > rule.threshold : v < rule.threshold;
    s.probs[i] = fires ? rule.p_true : rule.p_false;
  }
  return s;
}

}  // namespace stochgall
