#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stochgall/types.hpp"

namespace stochgall {

/// Feature matrix plus optional ground truth. Truth is only ever used for
/// evaluation, bound estimation and validation clamping.
class Dataset {
 public:
  /// `num_classes` may be omitted when labels are given; it is then inferred
  /// as max label + 1 (and must be at least 2).
  Dataset(Matrix features, std::optional<std::vector<int>> labels,
          std::optional<int> num_classes = std::nullopt);

  const Matrix& features() const noexcept { return features_; }
  const std::optional<std::vector<int>>& labels() const noexcept { return labels_; }
  bool has_labels() const noexcept { return labels_.has_value(); }
  /// Throws if the dataset is unlabeled.
  const std::vector<int>& require_labels() const;

  Index size() const noexcept { return features_.rows(); }
  Index dim() const noexcept { return features_.cols(); }
  int num_classes() const noexcept { return num_classes_; }

  Dataset subset(const std::vector<Index>& rows) const;

 private:
  Matrix features_;
  std::optional<std::vector<int>> labels_;
  int num_classes_ = 0;
};

/// n x C matrix whose rows lie on the probability simplex.
class LabelMatrix {
 public:
  static constexpr double kRowSumTolerance = 1e-9;

  explicit LabelMatrix(Matrix values);

  static LabelMatrix uniform(Index n, int num_classes);
  static LabelMatrix one_hot(const std::vector<int>& labels, int num_classes);

  const Matrix& values() const noexcept { return values_; }
  Index size() const noexcept { return values_.rows(); }
  int num_classes() const noexcept { return static_cast<int>(values_.cols()); }
  auto column(int c) const { return values_.col(c); }

 private:
  Matrix values_;
};

/// One-versus-rest probability that each example belongs to `target_class`.
struct WeakSignal {
  Vector probs;
  int target_class = 0;
  std::string name;
};

struct Bounds {
  double error = 1.0;
  double precision = 0.0;
};

/// Weak signals in annotator order, each paired with its bounds.
class SignalBundle {
 public:
  SignalBundle() = default;
  SignalBundle(std::vector<WeakSignal> signals, std::vector<Bounds> bounds);

  const std::vector<WeakSignal>& signals() const noexcept { return signals_; }
  const std::vector<Bounds>& bounds() const noexcept { return bounds_; }
  std::size_t size() const noexcept { return signals_.size(); }
  bool empty() const noexcept { return signals_.empty(); }
  /// Example count shared by every signal (0 when empty).
  Index example_count() const noexcept;
  /// max target class + 1.
  int min_num_classes() const noexcept;

  /// First `count` signals, preserving order.
  SignalBundle prefix(std::size_t count) const;
  /// This bundle followed by `other`.
  SignalBundle concat(const SignalBundle& other) const;
  SignalBundle with_bounds(std::vector<Bounds> bounds) const;

 private:
  std::vector<WeakSignal> signals_;
  std::vector<Bounds> bounds_;
};

struct ValidationSplit {
  std::vector<Index> indices;  // ascending
  std::vector<int> labels;     // aligned with indices
  double fraction = 0.01;

  std::size_t size() const noexcept { return indices.size(); }
};

Dataset load_dataset(const std::filesystem::path& features_path,
                     const std::optional<std::filesystem::path>& labels_path,
                     std::optional<int> num_classes = std::nullopt);
void save_dataset(const Dataset& dataset, const std::filesystem::path& features_path,
                  const std::optional<std::filesystem::path>& labels_path);

SignalBundle load_signals(const std::filesystem::path& signals_path,
                          const std::filesystem::path& meta_path);
void save_signals(const SignalBundle& bundle, const std::filesystem::path& signals_path,
                  const std::filesystem::path& meta_path);
/// Names, target classes and bounds only.
void save_signal_meta(const SignalBundle& bundle, const std::filesystem::path& meta_path);

LabelMatrix load_label_matrix(const std::filesystem::path& path);
void save_label_matrix(const LabelMatrix& labels, const std::filesystem::path& path);

/// Stratified, seeded sample of labeled rows. The per-class allocation follows
/// the class proportions (largest remainder), with at least one row for every
/// present class whenever the requested size allows it.
ValidationSplit split_validation(const Dataset& dataset, double fraction, std::uint64_t seed);

/// Expected label error 1 - (1/n) sum_i <y_i, e_{truth_i}>.
double label_error(const LabelMatrix& labels, const std::vector<int>& truth);

}  // namespace stochgall
