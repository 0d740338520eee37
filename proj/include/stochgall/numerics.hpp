#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "stochgall/data.hpp"
#include "stochgall/types.hpp"

namespace stochgall {

/// Counter-based generator: output k of stream `key` is splitmix64(key + k * golden).
/// Streams derived with split() are independent of the parent's position, so
/// results do not depend on how many draws other components made.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller (no cached second variate).
  double normal();
  /// Uniform on {0, ..., bound - 1}; bound must be positive.
  std::uint64_t index(std::uint64_t bound);

  Rng split(std::uint64_t stream) const;

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Euclidean projection onto the probability simplex by the sorting method.
/// Ties in the sort are broken by index. Throws on non-finite input.
Vector project_row_simplex(std::span<const double> v);
void project_row_simplex_inplace(std::span<double> v);

/// Rowwise simplex projection.
LabelMatrix project_label_matrix(Matrix values);

Vector clip_nonnegative(const Vector& values);

enum class StepDirection { Ascent, Descent };

/// Adagrad: acc += |g|^2; x +/-= rate * g / (sqrt(acc) + eps). With block > 1
/// each run of `block` consecutive coordinates shares one accumulator.
class AdagradState {
 public:
  AdagradState() = default;
  AdagradState(Index size, double base_rate, double epsilon = 1e-8, Index block = 1);

  void step(std::span<double> param, std::span<const double> grad, StepDirection direction);
  void reset() { accumulators_.setZero(); }

  const Vector& accumulators() const noexcept { return accumulators_; }
  Vector& accumulators() noexcept { return accumulators_; }
  double base_rate() const noexcept { return base_rate_; }
  double epsilon() const noexcept { return epsilon_; }
  Index size() const noexcept { return accumulators_.size() * block_; }
  Index block() const noexcept { return block_; }

 private:
  Vector accumulators_;
  Index block_ = 1;
  double base_rate_ = 0.01;
  double epsilon_ = 1e-8;
};

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Max over coordinates of |central difference - grad|.
double finite_diff_check(const ScalarFunction& f, std::span<const double> grad,
                         std::span<const double> point, double h);

inline std::span<double> as_span(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
inline std::span<const double> as_span(const Matrix& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}
inline std::span<double> as_span(Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }
inline std::span<const double> as_span(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace stochgall
