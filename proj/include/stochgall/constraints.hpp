#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "stochgall/data.hpp"
#include "stochgall/types.hpp"

namespace stochgall {

/// Expected one-versus-rest error (1/n)(q'1 + y_c'(1 - 2q)).
double error_value(const Vector& q, const Eigen::Ref<const Vector>& y_c);
double error_value(const WeakSignal& signal, const LabelMatrix& labels);

/// Expected precision y_c'q / q'1. Throws Degenerate when q'1 == 0.
double precision_value(const Vector& q, const Eigen::Ref<const Vector>& y_c);
double precision_value(const WeakSignal& signal, const LabelMatrix& labels);

enum class ConstraintKind { Error, Precision, Generic };

std::string to_string(ConstraintKind kind);
ConstraintKind constraint_kind_from_string(const std::string& name);

/// g(Y) <= 0 with g affine in Y. Error and precision constraints touch only the
/// target class column: g(Y) = coef' y_c + offset. Generic constraints carry a
/// full n x C coefficient matrix: g(Y) = <A, Y> + offset.
class LinearConstraint {
 public:
  /// error(q, y_c) - bound.
  static LinearConstraint error(const WeakSignal& signal, Index signal_index, double bound);
  /// bound - precision(q, y_c).
  static LinearConstraint precision(const WeakSignal& signal, Index signal_index, double bound);
  static LinearConstraint generic(Matrix coefficients, double offset, std::string label = {});

  double value(const Matrix& labels) const;
  double value(const LabelMatrix& labels) const { return value(labels.values()); }

  /// Dense gradient; independent of Y.
  Matrix gradient(Index n, int num_classes) const;
  /// out += scale * gradient, without materialising the dense gradient.
  void add_scaled_gradient(double scale, Matrix& out) const;
  /// Squared Frobenius norm of the gradient.
  double gradient_norm_squared() const;

  ConstraintKind kind() const noexcept { return kind_; }
  Index signal_index() const noexcept { return signal_index_; }
  int target_class() const noexcept { return target_class_; }
  double bound() const noexcept { return bound_; }
  double offset() const noexcept { return offset_; }
  const Vector& column_coefficients() const noexcept { return column_coef_; }
  const Matrix& coefficients() const noexcept { return generic_coef_; }
  const std::string& label() const noexcept { return label_; }

 private:
  LinearConstraint() = default;

  ConstraintKind kind_ = ConstraintKind::Error;
  Index signal_index_ = -1;
  int target_class_ = -1;
  double bound_ = 0.0;
  double offset_ = 0.0;
  Vector column_coef_;
  Matrix generic_coef_;
  std::string label_;
};

/// Which constraint forms a bundle expands into.
enum class ConstraintMode {
  ErrorAndPrecision,  // Stoch-GALL
  ErrorOnly,          // ALL
  PrecisionOnly,
};

std::string to_string(ConstraintMode mode);
ConstraintMode constraint_mode_from_string(const std::string& name);

class ConstraintSet {
 public:
  ConstraintSet() = default;
  explicit ConstraintSet(std::vector<LinearConstraint> constraints);

  /// One constraint per (signal, form), signal-major, error before precision.
  static ConstraintSet from_bundle(const SignalBundle& bundle, ConstraintMode mode);

  const std::vector<LinearConstraint>& constraints() const noexcept { return constraints_; }
  std::size_t size() const noexcept { return constraints_.size(); }
  bool empty() const noexcept { return constraints_.empty(); }
  const LinearConstraint& operator[](std::size_t j) const { return constraints_[j]; }

  /// G(Y), one entry per constraint.
  Vector values(const Matrix& labels) const;
  Vector values(const LabelMatrix& labels) const { return values(labels.values()); }
  double max_violation(const Matrix& labels) const;

  /// Sum_j weights_j * grad g_j.
  Matrix weighted_gradient(const Vector& weights, Index n, int num_classes) const;

  void push_back(LinearConstraint c) { constraints_.push_back(std::move(c)); }

 private:
  std::vector<LinearConstraint> constraints_;
};

/// List of {kind, signal_index, target_class, bound}; generic constraints add
/// their row-major coefficients and offset.
nlohmann::json constraints_to_json(const ConstraintSet& set);
/// Rebuilds coefficient caches from the signals the entries reference.
ConstraintSet constraints_from_json(const nlohmann::json& doc, const SignalBundle& bundle);

struct BoundEstimate {
  Bounds bounds;
  bool degenerate_precision = false;  // signal sums to 0 on the split
};

/// Error and precision of a signal against one-hot truth on the validation rows,
/// shifted by `slack` (error up, precision down) and clipped to [0,1].
BoundEstimate estimate_bounds(const WeakSignal& signal, const ValidationSplit& split, double slack);

}  // namespace stochgall
