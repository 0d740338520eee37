#include "stochgall/envelope.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stochgall/numerics.hpp"

namespace stochgall {

namespace {

void project_rows(Matrix& y) {
  const auto cols = static_cast<std::size_t>(y.cols());
  for (Index i = 0; i < y.rows(); ++i) project_row_simplex_inplace(std::span<double>(y.row(i).data(), cols));
}

// Gradient of <W, Y> - lambda'G - (rho/2)||G+||^2.
Matrix ascent_gradient(const Matrix& weights, const ConstraintSet& constraints, const Matrix& y,
                       const Vector& multipliers, double rho) {
  const Vector g = constraints.values(y);
  const Vector scale = -(multipliers + rho * g.cwiseMax(0.0));
  Matrix grad = weights;
  for (std::size_t j = 0; j < constraints.size(); ++j) {
    const double s = scale[static_cast<Index>(j)];
    if (s != 0.0) constraints[j].add_scaled_gradient(s, grad);
  }
  return grad;
}

}  // namespace

LinearProgramResult maximize_linear(const Matrix& weights, const ConstraintSet& constraints,
                                    Matrix start, const EnvelopeOptions& options) {
  if (start.rows() != weights.rows() || start.cols() != weights.cols()) {
    throw Error(ErrorKind::Dimension, "start point and objective differ in shape");
  }
  Matrix y = std::move(start);
  project_rows(y);

  if (constraints.empty()) {
    // Unconstrained: each row independently picks its best vertex.
    for (Index i = 0; i < y.rows(); ++i) {
      Index best = 0;
      for (Index c = 1; c < y.cols(); ++c) {
        if (weights(i, c) > weights(i, best)) best = c;
      }
      y.row(i).setZero();
      y(i, best) = 1.0;
    }
    const double obj = weights.cwiseProduct(y).sum();
    return {std::move(y), obj, 0.0};
  }

  double norm_sum = 0.0;
  for (const auto& c : constraints.constraints()) norm_sum += c.gradient_norm_squared();
  norm_sum = std::max(norm_sum, 1e-300);

  Vector multipliers = Vector::Zero(static_cast<Index>(constraints.size()));
  double rho = options.initial_rho;
  double previous_violation = std::numeric_limits<double>::infinity();
  double previous_objective = std::numeric_limits<double>::quiet_NaN();
  double violation = 0.0;
  for (int outer = 0; outer < options.outer_iters; ++outer) {
    const double step = 1.0 / (rho * norm_sum);
    Matrix z = y;
    double t = 1.0;
    for (int inner = 0; inner < options.inner_iters; ++inner) {
      const Matrix grad = ascent_gradient(weights, constraints, z, multipliers, rho);
      Matrix next = z + step * grad;
      project_rows(next);
      const Matrix delta = next - y;
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      if (grad.cwiseProduct(delta).sum() < 0.0) {
        // Momentum is pointing downhill: restart acceleration.
        z = next;
        t = 1.0;
      } else {
        z = next + ((t - 1.0) / t_next) * delta;
        t = t_next;
      }
      y = std::move(next);
      if (delta.cwiseAbs().maxCoeff() < 1e-10) break;
    }
    const Vector g = constraints.values(y);
    violation = std::max(0.0, g.maxCoeff());
    multipliers = (multipliers + rho * g).cwiseMax(0.0);
    const double objective = weights.cwiseProduct(y).sum();
    if (violation <= 1e-3 * options.feasibility_tol && !std::isnan(previous_objective) &&
        std::abs(objective - previous_objective) <= 1e-9 * std::max(1.0, std::abs(objective))) {
      break;
    }
    if (violation > 0.25 * previous_violation) rho = std::min(rho * 4.0, options.max_rho);
    previous_violation = violation;
    previous_objective = objective;
  }
  const double obj = weights.cwiseProduct(y).sum();
  return {std::move(y), obj, violation};
}

EnvelopeValue feasible_error_envelope(const ConstraintSet& constraints, const LabelMatrix& truth,
                                      EnvelopeDirection direction, const EnvelopeOptions& options) {
  if (options.restarts < 1) throw Error(ErrorKind::Config, "envelope needs at least one restart");
  const Index n = truth.size();
  const int num_classes = truth.num_classes();
  const double sign = direction == EnvelopeDirection::Max ? -1.0 : 1.0;
  const Matrix weights = sign * truth.values() / static_cast<double>(n);
  const Rng root(options.seed);

  bool any_feasible = false;
  double best_value = direction == EnvelopeDirection::Max ? -1.0 : 2.0;
  double best_violation = std::numeric_limits<double>::infinity();
  double least_violation = std::numeric_limits<double>::infinity();
  double least_violation_value = 0.0;
  for (int r = 0; r < options.restarts; ++r) {
    Matrix start = Matrix::Constant(n, num_classes, 1.0 / num_classes);
    if (r > 0) {
      Rng rng = root.split(static_cast<std::uint64_t>(r));
      for (Index i = 0; i < start.size(); ++i) start.data()[i] = rng.uniform();
      for (Index i = 0; i < n; ++i) start.row(i) /= start.row(i).sum();
    }
    const auto lp = maximize_linear(weights, constraints, std::move(start), options);
    const double value = 1.0 - truth.values().cwiseProduct(lp.labels).sum() / static_cast<double>(n);
    if (lp.max_violation <= options.feasibility_tol) {
      const bool better = direction == EnvelopeDirection::Max ? value > best_value : value < best_value;
      if (!any_feasible || better) {
        best_value = value;
        best_violation = lp.max_violation;
      }
      any_feasible = true;
    }
    if (lp.max_violation < least_violation) {
      least_violation = lp.max_violation;
      least_violation_value = value;
    }
  }
  if (any_feasible) return {best_value, FeasibilityStatus::Feasible, best_violation};
  return {least_violation_value, FeasibilityStatus::Infeasible, least_violation};
}

}  // namespace stochgall
