#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stochgall/data.hpp"

namespace stochgall {

/// Isotropic Gaussian class clusters around fixed random centres. Train and
/// test sets drawn with different sample seeds share the same centres.
struct BlobGenerator {
  Matrix centers;  // C x d
  double noise_std = 1.0;

  static BlobGenerator create(Index dim, int num_classes, double separation, double noise_std,
                              std::uint64_t seed);
  /// Balanced classes (counts differ by at most one), rows in shuffled order.
  Dataset sample(Index n, std::uint64_t seed) const;
};

struct PlantedSpec {
  int signals_per_class = 3;
  /// Probability that an entry of the one-hot truth column is replaced by U[0,1].
  double flip_noise = 0.3;
  /// The first `confused_signals` base signals also fire, with probability
  /// `confusion_rate`, on rows of the next class (c + 1 mod C).
  int confused_signals = 0;
  double confusion_rate = 0.0;
  /// Near-duplicates of base signal `duplicate_source`, appended after the base set.
  int redundancy_copies = 0;
  int duplicate_source = 0;
  double duplicate_jitter = 0.0;
  /// Added to the exact error bound and subtracted from the exact precision bound.
  double bound_slack = 0.0;
  std::uint64_t seed = 0;
};

/// Base signals are ordered round-robin over classes (k-th signal of every
/// class before the (k+1)-th), followed by the copies. Bounds are the exact
/// error and precision of each signal against the truth, shifted by the slack.
SignalBundle plant_signals(const Dataset& dataset, const PlantedSpec& spec);

/// Exact error/precision of a signal against the full truth.
Bounds true_bounds(const WeakSignal& signal, const std::vector<int>& truth, double slack = 0.0);

struct ExemplarSpec {
  Index reference_index = 0;
  std::vector<Index> region;  // feature indices compared
  int target_class = 0;
  bool standardize = true;
  std::string name;
};

struct ExemplarResult {
  WeakSignal signal;
  bool zero_variance = false;  // every distance equal; probabilities are all 0.5
};

/// Nearest-neighbour one-versus-rest signal: p_i = 1 / (1 + exp(z_i)) where
/// z_i is the standardised Euclidean distance to the reference on the region.
ExemplarResult exemplar_signal(const Dataset& dataset, const ExemplarSpec& spec);

/// Categorical-metadata style rule: `p_true` where feature `feature` is above
/// (or below) `threshold`, `p_false` elsewhere.
struct ThresholdRule {
  Index feature = 0;
  double threshold = 0.0;
  bool above = true;
  int target_class = 0;
  double p_true = 0.9;
  double p_false = 0.1;
  std::string name;
};

WeakSignal threshold_signal(const Dataset& dataset, const ThresholdRule& rule);

}  // namespace stochgall
