#include "stochgall/constraints.hpp"

#include <algorithm>
#include <cmath>

#include "stochgall/csv.hpp"

namespace stochgall {

using nlohmann::json;

namespace {

void check_length(const Vector& q, Index n) {
  if (q.size() != n) {
    throw Error(ErrorKind::Dimension, "signal length " + std::to_string(q.size()) +
                                          " differs from label rows " + std::to_string(n));
  }
}

void check_class(int c, int num_classes) {
  if (c < 0 || c >= num_classes) {
    throw Error(ErrorKind::Validation, "target class " + std::to_string(c) + " outside label matrix");
  }
}

}  // namespace

double error_value(const Vector& q, const Eigen::Ref<const Vector>& y_c) {
  check_length(q, y_c.size());
  const auto n = static_cast<double>(q.size());
  return (q.sum() + y_c.dot((1.0 - 2.0 * q.array()).matrix())) / n;
}

double error_value(const WeakSignal& signal, const LabelMatrix& labels) {
  check_class(signal.target_class, labels.num_classes());
  return error_value(signal.probs, labels.column(signal.target_class));
}

double precision_value(const Vector& q, const Eigen::Ref<const Vector>& y_c) {
  check_length(q, y_c.size());
  const double mass = q.sum();
  if (mass <= 0.0) {
    throw Error(ErrorKind::Degenerate, "precision undefined for an all-zero signal");
  }
  return y_c.dot(q) / mass;
}

double precision_value(const WeakSignal& signal, const LabelMatrix& labels) {
  check_class(signal.target_class, labels.num_classes());
  return precision_value(signal.probs, labels.column(signal.target_class));
}

std::string to_string(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::Error: return "error";
    case ConstraintKind::Precision: return "precision";
    case ConstraintKind::Generic: return "generic";
  }
  return "unknown";
}

ConstraintKind constraint_kind_from_string(const std::string& name) {
  if (name == "error") return ConstraintKind::Error;
  if (name == "precision") return ConstraintKind::Precision;
  if (name == "generic") return ConstraintKind::Generic;
  throw Error(ErrorKind::Config, "unknown constraint kind '" + name + "'");
}

LinearConstraint LinearConstraint::error(const WeakSignal& signal, Index signal_index, double bound) {
  if (!(bound >= 0.0 && bound <= 1.0)) {
    throw Error(ErrorKind::Validation, "error bound outside [0,1]");
  }
  const auto n = static_cast<double>(signal.probs.size());
  LinearConstraint c;
  c.kind_ = ConstraintKind::Error;
  c.signal_index_ = signal_index;
  c.target_class_ = signal.target_class;
  c.bound_ = bound;
  c.column_coef_ = (1.0 - 2.0 * signal.probs.array()).matrix() / n;
  c.offset_ = signal.probs.sum() / n - bound;
  c.label_ = signal.name;
  return c;
}

LinearConstraint LinearConstraint::precision(const WeakSignal& signal, Index signal_index, double bound) {
  if (!(bound >= 0.0 && bound <= 1.0)) {
    throw Error(ErrorKind::Validation, "precision bound outside [0,1]");
  }
  const double mass = signal.probs.sum();
  if (mass <= 0.0) {
    throw Error(ErrorKind::Degenerate, "precision constraint on all-zero signal " + signal.name);
  }
  LinearConstraint c;
  c.kind_ = ConstraintKind::Precision;
  c.signal_index_ = signal_index;
  c.target_class_ = signal.target_class;
  c.bound_ = bound;
  c.column_coef_ = -signal.probs / mass;
  c.offset_ = bound;
  c.label_ = signal.name;
  return c;
}

LinearConstraint LinearConstraint::generic(Matrix coefficients, double offset, std::string label) {
  if (!coefficients.allFinite() || !std::isfinite(offset)) {
    throw Error(ErrorKind::Validation, "generic constraint coefficients must be finite");
  }
  LinearConstraint c;
  c.kind_ = ConstraintKind::Generic;
  c.generic_coef_ = std::move(coefficients);
  c.offset_ = offset;
  c.bound_ = -offset;
  c.label_ = std::move(label);
  return c;
}

double LinearConstraint::value(const Matrix& labels) const {
  if (kind_ == ConstraintKind::Generic) {
    if (labels.rows() != generic_coef_.rows() || labels.cols() != generic_coef_.cols()) {
      throw Error(ErrorKind::Dimension, "generic constraint shape differs from label matrix");
    }
    return generic_coef_.cwiseProduct(labels).sum() + offset_;
  }
  check_length(column_coef_, labels.rows());
  check_class(target_class_, static_cast<int>(labels.cols()));
  return column_coef_.dot(labels.col(target_class_)) + offset_;
}

Matrix LinearConstraint::gradient(Index n, int num_classes) const {
  Matrix g = Matrix::Zero(n, num_classes);
  add_scaled_gradient(1.0, g);
  return g;
}

void LinearConstraint::add_scaled_gradient(double scale, Matrix& out) const {
  if (kind_ == ConstraintKind::Generic) {
    out += scale * generic_coef_;
    return;
  }
  check_length(column_coef_, out.rows());
  check_class(target_class_, static_cast<int>(out.cols()));
  out.col(target_class_) += scale * column_coef_;
}

double LinearConstraint::gradient_norm_squared() const {
  return kind_ == ConstraintKind::Generic ? generic_coef_.squaredNorm() : column_coef_.squaredNorm();
}

std::string to_string(ConstraintMode mode) {
  switch (mode) {
    case ConstraintMode::ErrorAndPrecision: return "error+precision";
    case ConstraintMode::ErrorOnly: return "error";
    case ConstraintMode::PrecisionOnly: return "precision";
  }
  return "unknown";
}

ConstraintMode constraint_mode_from_string(const std::string& name) {
  if (name == "error+precision" || name == "both" || name == "stoch-gall") {
    return ConstraintMode::ErrorAndPrecision;
  }
  if (name == "error" || name == "error-only" || name == "all" || name == "all-error-only") {
    return ConstraintMode::ErrorOnly;
  }
  if (name == "precision" || name == "precision-only") return ConstraintMode::PrecisionOnly;
  throw Error(ErrorKind::Config, "unknown constraint mode '" + name + "'");
}

ConstraintSet::ConstraintSet(std::vector<LinearConstraint> constraints)
    : constraints_(std::move(constraints)) {}

ConstraintSet ConstraintSet::from_bundle(const SignalBundle& bundle, ConstraintMode mode) {
  ConstraintSet set;
  for (std::size_t k = 0; k < bundle.size(); ++k) {
    const auto& s = bundle.signals()[k];
    const auto& b = bundle.bounds()[k];
    const auto idx = static_cast<Index>(k);
    if (mode != ConstraintMode::PrecisionOnly) {
      set.push_back(LinearConstraint::error(s, idx, b.error));
    }
    // An all-zero signal carries no precision information.
    if (mode != ConstraintMode::ErrorOnly && s.probs.sum() > 0.0) {
      set.push_back(LinearConstraint::precision(s, idx, b.precision));
    }
  }
  return set;
}

Vector ConstraintSet::values(const Matrix& labels) const {
  Vector g(static_cast<Index>(constraints_.size()));
  for (std::size_t j = 0; j < constraints_.size(); ++j) {
    g[static_cast<Index>(j)] = constraints_[j].value(labels);
  }
  return g;
}

double ConstraintSet::max_violation(const Matrix& labels) const {
  if (constraints_.empty()) return 0.0;
  return std::max(0.0, values(labels).maxCoeff());
}

Matrix ConstraintSet::weighted_gradient(const Vector& weights, Index n, int num_classes) const {
  if (weights.size() != static_cast<Index>(constraints_.size())) {
    throw Error(ErrorKind::Dimension, "weight count differs from constraint count");
  }
  Matrix g = Matrix::Zero(n, num_classes);
  for (std::size_t j = 0; j < constraints_.size(); ++j) {
    const double w = weights[static_cast<Index>(j)];
    if (w != 0.0) constraints_[j].add_scaled_gradient(w, g);
  }
  return g;
}

json constraints_to_json(const ConstraintSet& set) {
  json out = json::array();
  for (const auto& c : set.constraints()) {
    json entry = {{"kind", to_string(c.kind())},
                  {"signal_index", c.signal_index()},
                  {"target_class", c.target_class()},
                  {"bound", c.bound()}};
    if (c.kind() == ConstraintKind::Generic) {
      const Matrix& a = c.coefficients();
      entry["rows"] = a.rows();
      entry["cols"] = a.cols();
      entry["coefficients"] = std::vector<double>(a.data(), a.data() + a.size());
      entry["offset"] = c.offset();
      entry["name"] = c.label();
    }
    out.push_back(std::move(entry));
  }
  return out;
}

ConstraintSet constraints_from_json(const json& doc, const SignalBundle& bundle) {
  if (!doc.is_array()) {
    throw Error(ErrorKind::Ingestion, "constraint document must be a JSON array");
  }
  ConstraintSet set;
  for (const auto& entry : doc) {
    const auto kind = constraint_kind_from_string(entry.at("kind").get<std::string>());
    if (kind == ConstraintKind::Generic) {
      const auto rows = entry.at("rows").get<Index>();
      const auto cols = entry.at("cols").get<Index>();
      const auto flat = entry.at("coefficients").get<std::vector<double>>();
      if (static_cast<Index>(flat.size()) != rows * cols) {
        throw Error(ErrorKind::Ingestion, "generic constraint coefficient count mismatch");
      }
      Matrix a = Eigen::Map<const Matrix>(flat.data(), rows, cols);
      set.push_back(LinearConstraint::generic(std::move(a), entry.at("offset").get<double>(),
                                              entry.value("name", std::string{})));
      continue;
    }
    const auto idx = entry.at("signal_index").get<Index>();
    if (idx < 0 || idx >= static_cast<Index>(bundle.size())) {
      throw Error(ErrorKind::Ingestion, "constraint references missing signal " + std::to_string(idx));
    }
    const auto& signal = bundle.signals()[static_cast<std::size_t>(idx)];
    if (entry.contains("target_class") && entry["target_class"].get<int>() != signal.target_class) {
      throw Error(ErrorKind::Ingestion, "constraint target class disagrees with signal " + signal.name);
    }
    const double bound = entry.at("bound").get<double>();
    set.push_back(kind == ConstraintKind::Error ? LinearConstraint::error(signal, idx, bound)
                                                : LinearConstraint::precision(signal, idx, bound));
  }
  return set;
}

BoundEstimate estimate_bounds(const WeakSignal& signal, const ValidationSplit& split, double slack) {
  if (split.indices.empty()) {
    throw Error(ErrorKind::Validation, "cannot estimate bounds on an empty validation split");
  }
  if (split.labels.size() != split.indices.size()) {
    throw Error(ErrorKind::Dimension, "validation labels misaligned with indices");
  }
  double err = 0.0;
  double hit = 0.0;
  double mass = 0.0;
  for (std::size_t r = 0; r < split.indices.size(); ++r) {
    const auto i = split.indices[r];
    if (i < 0 || i >= signal.probs.size()) {
      throw Error(ErrorKind::Dimension, "validation index outside signal");
    }
    const double q = signal.probs[i];
    const double t = split.labels[r] == signal.target_class ? 1.0 : 0.0;
    err += q * (1.0 - t) + (1.0 - q) * t;
    hit += q * t;
    mass += q;
  }
  BoundEstimate out;
  out.bounds.error = std::clamp(err / static_cast<double>(split.size()) + slack, 0.0, 1.0);
  if (mass > 0.0) {
    out.bounds.precision = std::clamp(hit / mass - slack, 0.0, 1.0);
  } else {
    out.bounds.precision = 0.0;
    out.degenerate_precision = true;
  }
  return out;
}

}  // namespace stochgall
