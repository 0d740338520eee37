#include "stochgall/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace stochgall {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : key_(mix64(seed + kGolden)) {}

std::uint64_t Rng::next_u64() {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::index(std::uint64_t bound) {
  // Lemire's multiply-shift with rejection; unbiased.
  std::uint64_t x = next_u64();
  __uint128_t m = static_cast<__uint128_t>(x) * bound;
  auto low = static_cast<std::uint64_t>(m);
  if (low < bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    while (low < threshold) {
      x = next_u64();
      m = static_cast<__uint128_t>(x) * bound;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

Rng Rng::split(std::uint64_t stream) const {
  Rng child(0);
  child.key_ = mix64(key_ ^ mix64(stream + 0x632BE59BD9B4E019ULL));
  return child;
}

void project_row_simplex_inplace(std::span<double> v) {
  const std::size_t k = v.size();
  if (k == 0) {
    throw Error(ErrorKind::Dimension, "cannot project an empty vector");
  }
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw Error(ErrorKind::Validation, "simplex projection of a non-finite vector");
    }
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return v[a] > v[b] || (v[a] == v[b] && a < b);
  });
  // Largest j with u_j - (sum_{i<=j} u_i - 1) / j > 0.
  double cumsum = 0.0;
  double threshold = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    cumsum += v[order[j]];
    const double candidate = (cumsum - 1.0) / static_cast<double>(j + 1);
    if (v[order[j]] - candidate > 0.0) threshold = candidate;
  }
  for (double& x : v) x = std::max(x - threshold, 0.0);
}

Vector project_row_simplex(std::span<const double> v) {
  Vector out(static_cast<Index>(v.size()));
  std::copy(v.begin(), v.end(), out.data());
  project_row_simplex_inplace(as_span(out));
  return out;
}

LabelMatrix project_label_matrix(Matrix values) {
  const auto cols = static_cast<std::size_t>(values.cols());
  for (Index i = 0; i < values.rows(); ++i) {
    project_row_simplex_inplace(std::span<double>(values.row(i).data(), cols));
  }
  return LabelMatrix(std::move(values));
}

Vector clip_nonnegative(const Vector& values) {
  return values.cwiseMax(0.0);
}

AdagradState::AdagradState(Index size, double base_rate, double epsilon, Index block)
    : block_(block), base_rate_(base_rate), epsilon_(epsilon) {
  if (base_rate <= 0.0 || epsilon < 0.0) {
    throw Error(ErrorKind::Config, "adagrad needs base_rate > 0 and epsilon >= 0");
  }
  if (block < 1 || size % block != 0) {
    throw Error(ErrorKind::Config, "adagrad block must be positive and divide the parameter count");
  }
  accumulators_ = Vector::Zero(size / block);
}

void AdagradState::step(std::span<double> param, std::span<const double> grad,
                        StepDirection direction) {
  if (param.size() != grad.size() || static_cast<Index>(param.size()) != size()) {
    throw Error(ErrorKind::Dimension, "adagrad shape mismatch: param " + std::to_string(param.size()) +
                                          ", grad " + std::to_string(grad.size()) + ", state " +
                                          std::to_string(size()));
  }
  const double sign = direction == StepDirection::Ascent ? 1.0 : -1.0;
  const auto block = static_cast<std::size_t>(block_);
  for (Index k = 0; k < accumulators_.size(); ++k) {
    const std::size_t begin = static_cast<std::size_t>(k) * block;
    auto& acc = accumulators_[k];
    for (std::size_t i = begin; i < begin + block; ++i) acc += grad[i] * grad[i];
    if (acc <= 0.0) continue;
    const double scale = sign * base_rate_ / (std::sqrt(acc) + epsilon_);
    for (std::size_t i = begin; i < begin + block; ++i) param[i] += scale * grad[i];
  }
}

double finite_diff_check(const ScalarFunction& f, std::span<const double> grad,
                         std::span<const double> point, double h) {
  if (grad.size() != point.size()) {
    throw Error(ErrorKind::Dimension, "gradient and point differ in length");
  }
  std::vector<double> x(point.begin(), point.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f(x);
    x[i] = saved - h;
    const double down = f(x);
    x[i] = saved;
    worst = std::max(worst, std::abs((up - down) / (2.0 * h) - grad[i]));
  }
  return worst;
}

}  // namespace stochgall
