#pragma once

#include <cstdint>
#include <string>

#include "stochgall/adversary.hpp"
#include "stochgall/constraints.hpp"
#include "stochgall/data.hpp"

namespace stochgall {

enum class EnvelopeDirection { Min, Max };

struct EnvelopeOptions {
  int restarts = 5;
  std::uint64_t seed = 0;
  int outer_iters = 60;
  int inner_iters = 300;
  double initial_rho = 10.0;
  double max_rho = 1e6;
  /// A restart counts as feasible when max_j g_j(Y) is at most this.
  double feasibility_tol = 1e-5;
};

struct EnvelopeValue {
  double value = 0.0;
  FeasibilityStatus status = FeasibilityStatus::Feasible;
  double max_violation = 0.0;

  bool feasible() const noexcept { return status == FeasibilityStatus::Feasible; }
};

/// Smallest or largest label error 1 - (1/n) sum_i <y_i, t_i> over label
/// matrices satisfying every constraint. Solved by the method of multipliers
/// with accelerated projected-gradient inner solves, from several starts.
EnvelopeValue feasible_error_envelope(const ConstraintSet& constraints, const LabelMatrix& truth,
                                      EnvelopeDirection direction, const EnvelopeOptions& options = {});

struct LinearProgramResult {
  Matrix labels;
  double objective = 0.0;
  double max_violation = 0.0;
};

/// Maximises <weights, Y> over the constrained simplex product from `start`.
LinearProgramResult maximize_linear(const Matrix& weights, const ConstraintSet& constraints,
                                    Matrix start, const EnvelopeOptions& options);

}  // namespace stochgall
