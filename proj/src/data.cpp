#include "stochgall/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <json.hpp>

#include "stochgall/csv.hpp"
#include "stochgall/numerics.hpp"

namespace stochgall {

using nlohmann::json;

Dataset::Dataset(Matrix features, std::optional<std::vector<int>> labels,
                 std::optional<int> num_classes)
    : features_(std::move(features)), labels_(std::move(labels)) {
  if (features_.rows() < 1) {
    throw Error(ErrorKind::Validation, "dataset needs at least one example");
  }
  if (!features_.allFinite()) {
    throw Error(ErrorKind::Validation, "features contain non-finite values");
  }
  int inferred = 0;
  if (labels_) {
    if (static_cast<Index>(labels_->size()) != features_.rows()) {
      throw Error(ErrorKind::Dimension, "labels have " + std::to_string(labels_->size()) +
                                            " rows but features have " +
                                            std::to_string(features_.rows()));
    }
    for (std::size_t i = 0; i < labels_->size(); ++i) {
      if ((*labels_)[i] < 0) {
        throw Error(ErrorKind::Validation, "negative label at row " + std::to_string(i + 1));
      }
      inferred = std::max(inferred, (*labels_)[i] + 1);
    }
  }
  num_classes_ = num_classes.value_or(inferred);
  if (num_classes_ < 2) {
    throw Error(ErrorKind::Config, "class count must be at least 2 (got " +
                                       std::to_string(num_classes_) + ")");
  }
  if (inferred > num_classes_) {
    throw Error(ErrorKind::Validation, "label " + std::to_string(inferred - 1) +
                                           " is not below class count " +
                                           std::to_string(num_classes_));
  }
}

const std::vector<int>& Dataset::require_labels() const {
  if (!labels_) {
    throw Error(ErrorKind::Validation, "operation requires ground-truth labels");
  }
  return *labels_;
}

Dataset Dataset::subset(const std::vector<Index>& rows) const {
  Matrix x(static_cast<Index>(rows.size()), dim());
  std::optional<std::vector<int>> y;
  if (labels_) y.emplace();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    x.row(static_cast<Index>(r)) = features_.row(rows[r]);
    if (y) y->push_back((*labels_)[static_cast<std::size_t>(rows[r])]);
  }
  return Dataset(std::move(x), std::move(y), num_classes_);
}

LabelMatrix::LabelMatrix(Matrix values) : values_(std::move(values)) {
  if (values_.rows() < 1 || values_.cols() < 2) {
    throw Error(ErrorKind::Dimension, "label matrix needs n >= 1 rows and C >= 2 columns");
  }
  for (Index i = 0; i < values_.rows(); ++i) {
    double sum = 0.0;
    for (Index c = 0; c < values_.cols(); ++c) {
      const double v = values_(i, c);
      if (!(v >= 0.0 && v <= 1.0)) {
        throw Error(ErrorKind::Validation, "label entry outside [0,1] at row " + std::to_string(i));
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > kRowSumTolerance) {
      throw Error(ErrorKind::Validation, "label row " + std::to_string(i) + " sums to " +
                                             csv::format_double(sum));
    }
  }
}

LabelMatrix LabelMatrix::uniform(Index n, int num_classes) {
  return LabelMatrix(Matrix::Constant(n, num_classes, 1.0 / num_classes));
}

LabelMatrix LabelMatrix::one_hot(const std::vector<int>& labels, int num_classes) {
  Matrix m = Matrix::Zero(static_cast<Index>(labels.size()), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw Error(ErrorKind::Validation, "label " + std::to_string(labels[i]) + " out of range");
    }
    m(static_cast<Index>(i), labels[i]) = 1.0;
  }
  return LabelMatrix(std::move(m));
}

SignalBundle::SignalBundle(std::vector<WeakSignal> signals, std::vector<Bounds> bounds)
    : signals_(std::move(signals)), bounds_(std::move(bounds)) {
  if (signals_.size() != bounds_.size()) {
    throw Error(ErrorKind::Ingestion, std::to_string(signals_.size()) + " signals but " +
                                          std::to_string(bounds_.size()) + " bound entries");
  }
  for (std::size_t k = 0; k < signals_.size(); ++k) {
    const auto& s = signals_[k];
    if (s.probs.size() != signals_.front().probs.size()) {
      throw Error(ErrorKind::Dimension, "signal " + s.name + " has a different length");
    }
    if (s.target_class < 0) {
      throw Error(ErrorKind::Validation, "signal " + s.name + " has a negative target class");
    }
    for (Index i = 0; i < s.probs.size(); ++i) {
      if (!(s.probs[i] >= 0.0 && s.probs[i] <= 1.0)) {
        throw Error(ErrorKind::Validation, "signal " + s.name + " probability " +
                                               csv::format_double(s.probs[i]) + " outside [0,1] at row " +
                                               std::to_string(i + 1));
      }
    }
    const auto& b = bounds_[k];
    if (!(b.error >= 0.0 && b.error <= 1.0 && b.precision >= 0.0 && b.precision <= 1.0)) {
      throw Error(ErrorKind::Validation, "bounds for signal " + s.name + " outside [0,1]");
    }
  }
}

Index SignalBundle::example_count() const noexcept {
  return signals_.empty() ? 0 : signals_.front().probs.size();
}

int SignalBundle::min_num_classes() const noexcept {
  int c = 0;
  for (const auto& s : signals_) c = std::max(c, s.target_class + 1);
  return c;
}

SignalBundle SignalBundle::prefix(std::size_t count) const {
  count = std::min(count, signals_.size());
  return SignalBundle(std::vector<WeakSignal>(signals_.begin(), signals_.begin() + static_cast<long>(count)),
                      std::vector<Bounds>(bounds_.begin(), bounds_.begin() + static_cast<long>(count)));
}

SignalBundle SignalBundle::concat(const SignalBundle& other) const {
  auto signals = signals_;
  auto bounds = bounds_;
  signals.insert(signals.end(), other.signals_.begin(), other.signals_.end());
  bounds.insert(bounds.end(), other.bounds_.begin(), other.bounds_.end());
  return SignalBundle(std::move(signals), std::move(bounds));
}

SignalBundle SignalBundle::with_bounds(std::vector<Bounds> bounds) const {
  return SignalBundle(signals_, std::move(bounds));
}

Dataset load_dataset(const std::filesystem::path& features_path,
                     const std::optional<std::filesystem::path>& labels_path,
                     std::optional<int> num_classes) {
  Matrix features = csv::read_matrix(features_path);
  std::optional<std::vector<int>> labels;
  if (labels_path) {
    labels = csv::read_integers(*labels_path);
    if (static_cast<Index>(labels->size()) != features.rows()) {
      throw Error(ErrorKind::Dimension, "dimension mismatch: " + labels_path->string() + " has " +
                                            std::to_string(labels->size()) + " rows, " +
                                            features_path.string() + " has " +
                                            std::to_string(features.rows()));
    }
  }
  return Dataset(std::move(features), std::move(labels), num_classes);
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& features_path,
                  const std::optional<std::filesystem::path>& labels_path) {
  csv::write_matrix(features_path, dataset.features());
  if (labels_path) {
    csv::write_integers(*labels_path, dataset.require_labels());
  }
}

SignalBundle load_signals(const std::filesystem::path& signals_path,
                          const std::filesystem::path& meta_path) {
  const Matrix probs = csv::read_matrix(signals_path);
  json meta;
  try {
    meta = json::parse(csv::read_text(meta_path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, meta_path.string() + ": " + e.what());
  }
  if (!meta.is_array()) {
    throw Error(ErrorKind::Ingestion, meta_path.string() + " must hold a JSON array");
  }
  if (static_cast<Index>(meta.size()) != probs.cols()) {
    throw Error(ErrorKind::Ingestion, "meta/column count mismatch: " + std::to_string(meta.size()) +
                                          " meta entries for " + std::to_string(probs.cols()) +
                                          " signal columns");
  }
  for (Index i = 0; i < probs.rows(); ++i) {
    for (Index k = 0; k < probs.cols(); ++k) {
      if (!(probs(i, k) >= 0.0 && probs(i, k) <= 1.0)) {
        throw Error(ErrorKind::Validation, "probability " + csv::format_double(probs(i, k)) +
                                               " outside [0,1] at row " + std::to_string(i + 1) +
                                               " column " + std::to_string(k + 1));
      }
    }
  }
  std::vector<WeakSignal> signals;
  std::vector<Bounds> bounds;
  for (Index k = 0; k < probs.cols(); ++k) {
    const auto& entry = meta[static_cast<std::size_t>(k)];
    try {
      WeakSignal s;
      s.probs = probs.col(k);
      s.target_class = entry.at("target_class").get<int>();
      s.name = entry.value("name", "signal_" + std::to_string(k));
      signals.push_back(std::move(s));
      bounds.push_back({entry.value("b_error", 1.0), entry.value("b_precision", 0.0)});
    } catch (const json::exception& e) {
      throw Error(ErrorKind::Ingestion, meta_path.string() + " entry " + std::to_string(k) + ": " + e.what());
    }
  }
  return SignalBundle(std::move(signals), std::move(bounds));
}

void save_signal_meta(const SignalBundle& bundle, const std::filesystem::path& meta_path) {
  json meta = json::array();
  for (std::size_t k = 0; k < bundle.size(); ++k) {
    const auto& s = bundle.signals()[k];
    meta.push_back({{"name", s.name},
                    {"target_class", s.target_class},
                    {"b_error", bundle.bounds()[k].error},
                    {"b_precision", bundle.bounds()[k].precision}});
  }
  csv::write_text(meta_path, meta.dump(2) + "\n");
}

void save_signals(const SignalBundle& bundle, const std::filesystem::path& signals_path,
                  const std::filesystem::path& meta_path) {
  Matrix probs(bundle.example_count(), static_cast<Index>(bundle.size()));
  for (std::size_t k = 0; k < bundle.size(); ++k) probs.col(static_cast<Index>(k)) = bundle.signals()[k].probs;
  csv::write_matrix(signals_path, probs);
  save_signal_meta(bundle, meta_path);
}

LabelMatrix load_label_matrix(const std::filesystem::path& path) {
  return LabelMatrix(csv::read_matrix(path));
}

void save_label_matrix(const LabelMatrix& labels, const std::filesystem::path& path) {
  csv::write_matrix(path, labels.values());
}

ValidationSplit split_validation(const Dataset& dataset, double fraction, std::uint64_t seed) {
  const auto& truth = dataset.require_labels();
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw Error(ErrorKind::Config, "validation fraction must lie in (0,1)");
  }
  const auto n = static_cast<std::size_t>(dataset.size());
  const auto total = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (total == 0) {
    throw Error(ErrorKind::Config, "validation fraction selects no examples");
  }

  std::map<int, std::vector<Index>> by_class;
  for (std::size_t i = 0; i < n; ++i) by_class[truth[i]].push_back(static_cast<Index>(i));

  // Largest-remainder allocation of `total` across classes.
  std::vector<int> classes;
  std::vector<std::size_t> take;
  std::vector<std::pair<double, int>> remainders;
  std::size_t assigned = 0;
  for (const auto& [c, rows] : by_class) {
    const double exact = static_cast<double>(total) * static_cast<double>(rows.size()) / static_cast<double>(n);
    const auto base = static_cast<std::size_t>(std::floor(exact));
    classes.push_back(c);
    take.push_back(base);
    remainders.emplace_back(exact - static_cast<double>(base), static_cast<int>(classes.size() - 1));
    assigned += base;
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < total && r < remainders.size(); ++r, ++assigned) {
    ++take[static_cast<std::size_t>(remainders[r].second)];
  }
  // Guarantee one row per class when the budget covers every class.
  if (total >= classes.size()) {
    for (std::size_t k = 0; k < classes.size(); ++k) {
      if (take[k] > 0) continue;
      const auto donor = static_cast<std::size_t>(
          std::max_element(take.begin(), take.end()) - take.begin());
      --take[donor];
      take[k] = 1;
    }
  }

  const Rng root(seed);
  ValidationSplit split;
  split.fraction = fraction;
  std::vector<std::pair<Index, int>> chosen;
  for (std::size_t k = 0; k < classes.size(); ++k) {
    auto rows = by_class[classes[k]];
    Rng rng = root.split(static_cast<std::uint64_t>(classes[k]));
    rng.shuffle(std::span<Index>(rows));
    for (std::size_t j = 0; j < std::min(take[k], rows.size()); ++j) {
      chosen.emplace_back(rows[j], classes[k]);
    }
  }
  std::sort(chosen.begin(), chosen.end());
  for (const auto& [idx, c] : chosen) {
    split.indices.push_back(idx);
    split.labels.push_back(c);
  }
  return split;
}

double label_error(const LabelMatrix& labels, const std::vector<int>& truth) {
  if (static_cast<Index>(truth.size()) != labels.size()) {
    throw Error(ErrorKind::Dimension, "truth length differs from label rows");
  }
  double agree = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    agree += labels.values()(static_cast<Index>(i), truth[i]);
  }
  return 1.0 - agree / static_cast<double>(truth.size());
}

}  // namespace stochgall
