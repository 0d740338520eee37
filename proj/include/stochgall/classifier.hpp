#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stochgall/data.hpp"
#include "stochgall/numerics.hpp"
#include "stochgall/types.hpp"

namespace stochgall {

enum class Activation { Relu, Tanh };

struct Architecture {
  enum class Kind { LinearSoftmax, Mlp };

  Kind kind = Kind::LinearSoftmax;
  Index hidden_width = 0;
  Activation activation = Activation::Relu;

  static Architecture linear() { return {}; }
  static Architecture mlp(Index hidden_width, Activation activation = Activation::Relu) {
    return {Kind::Mlp, hidden_width, activation};
  }
  std::string describe() const;
};

Architecture architecture_from_string(const std::string& name, Index hidden_width);

/// All weights and biases live in one flat vector. Layer l maps
/// in_l -> out_l as X * W_l + b_l with W_l stored row-major (in_l x out_l).
class ClassifierParams {
 public:
  /// Zero-initialised parameters.
  ClassifierParams(Architecture architecture, Index input_dim, int num_classes);
  /// Glorot-uniform weights, zero biases.
  static ClassifierParams random(Architecture architecture, Index input_dim, int num_classes,
                                 std::uint64_t seed);

  const Architecture& architecture() const noexcept { return architecture_; }
  Index input_dim() const noexcept { return input_dim_; }
  int num_classes() const noexcept { return num_classes_; }
  std::size_t layer_count() const noexcept { return layers_.size(); }

  Vector& theta() noexcept { return theta_; }
  const Vector& theta() const noexcept { return theta_; }

  Eigen::Map<const Matrix> weights(std::size_t layer) const;
  Eigen::Map<Matrix> weights(std::size_t layer);
  Eigen::Map<const Eigen::RowVectorXd> bias(std::size_t layer) const;
  Eigen::Map<Eigen::RowVectorXd> bias(std::size_t layer);

  struct Layer {
    Index in = 0;
    Index out = 0;
    Index weight_offset = 0;
    Index bias_offset = 0;
  };
  const std::vector<Layer>& layers() const noexcept { return layers_; }

 private:
  Architecture architecture_;
  Index input_dim_ = 0;
  int num_classes_ = 0;
  std::vector<Layer> layers_;
  Vector theta_;
};

/// n x C class probabilities; softmax uses max-subtraction.
Matrix forward(const ClassifierParams& params, const Matrix& features);

/// -(1/n) sum_i sum_c y_ic log max(f_ic, 1e-12).
double cross_entropy(const Matrix& probs, const Matrix& labels);
double cross_entropy(const ClassifierParams& params, const Matrix& features, const LabelMatrix& labels);

/// Exact gradient of the batch cross-entropy, laid out like theta().
Vector grad_theta(const ClassifierParams& params, const Matrix& features, const Matrix& labels);

struct TrainConfig {
  Index batch_size = 32;
  int epochs_per_round = 2;
  double learning_rate = 0.01;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  double dropout_rate = 0.0;  // hidden layer of mlp only
};

void validate(const TrainConfig& config);

/// Owns the parameters together with their Adagrad accumulators and shuffle
/// stream, so successive rounds continue one optimisation.
class Trainer {
 public:
  Trainer(ClassifierParams params, TrainConfig config);

  /// Runs config.epochs_per_round epochs; returns the per-epoch mean batch losses.
  std::vector<double> run_round(const Matrix& features, const Matrix& labels);
  double run_epoch(const Matrix& features, const Matrix& labels);

  const ClassifierParams& params() const noexcept { return params_; }
  ClassifierParams& params() noexcept { return params_; }
  const TrainConfig& config() const noexcept { return config_; }
  std::int64_t epochs_run() const noexcept { return epochs_; }

 private:
  ClassifierParams params_;
  TrainConfig config_;
  AdagradState optimizer_;
  Rng rng_;
  std::int64_t epochs_ = 0;
};

/// One round of mini-batch Adagrad descent from a fresh optimizer.
ClassifierParams train_rounds(ClassifierParams params, const Matrix& features,
                              const LabelMatrix& labels, const TrainConfig& config);

/// Argmax with ties resolved toward the lower class index.
std::vector<int> predict(const ClassifierParams& params, const Matrix& features);
std::vector<int> argmax_rows(const Matrix& probs);

void save_model(const ClassifierParams& params, const std::filesystem::path& path);
ClassifierParams load_model(const std::filesystem::path& path);

struct PseudolabelConfig {
  Architecture architecture;
  TrainConfig training;
  int epochs = 200;
  int folds = 4;
};

struct PseudolabelResult {
  SignalBundle bundle;  // one signal per class with cross-validated bounds
  int folds_used = 0;
  std::vector<std::string> warnings;
};

/// Trains on the validation rows, predicts every row, and emits column c of the
/// predictions as the class-c signal. Validation rows carry their one-hot truth.
/// Bounds come from k-fold cross-validation on the split.
PseudolabelResult pseudolabel_signals(const Dataset& dataset, const ValidationSplit& split,
                                      const PseudolabelConfig& config);

}  // namespace stochgall
