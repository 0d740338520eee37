#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "stochgall/constraints.hpp"
#include "stochgall/data.hpp"
#include "stochgall/numerics.hpp"

namespace stochgall {

/// Fixed snapshot of the model's n x C predicted probabilities.
class ModelOutputs {
 public:
  static constexpr double kRowSumTolerance = 1e-6;

  explicit ModelOutputs(Matrix probs);

  static ModelOutputs uniform(Index n, int num_classes);
  /// Softmax of standard-normal logits: the output of an untrained model.
  static ModelOutputs random(Index n, int num_classes, std::uint64_t seed);

  const Matrix& probs() const noexcept { return probs_; }
  Index size() const noexcept { return probs_.rows(); }
  int num_classes() const noexcept { return static_cast<int>(probs_.cols()); }

 private:
  Matrix probs_;
};

/// How the multipliers take their step on dL/dlambda = -G.
enum class MultiplierStep {
  Penalty,  // lambda <- max(0, lambda + rho * G)
  Adagrad,  // lambda <- max(0, lambda + adagrad step on G)
};

struct AdversaryConfig {
  double rho = 2.0;
  double label_rate = 0.1;
  double multiplier_rate = 0.1;  // only for MultiplierStep::Adagrad
  double epsilon = 1e-8;
  double feasibility_tol = 1e-3;
  int warm_start_max_iters = 5000;
  /// Warm start gives up as infeasible after this many iterations without a
  /// 1% improvement of the best max violation.
  int infeasible_patience = 1500;
  MultiplierStep multiplier_step = MultiplierStep::Penalty;
};

struct ClampedRow {
  Index row = 0;
  int label = 0;
};

struct GameState {
  LabelMatrix labels;
  Vector multipliers;
  double rho = 2.0;
  AdagradState label_optimizer;  // one accumulator per row of Y
  AdagradState multiplier_optimizer;
  std::int64_t iteration = 0;
  double feasibility_tol = 1e-3;
  MultiplierStep multiplier_step = MultiplierStep::Penalty;
  /// Rows pinned to one-hot truth after every projection.
  std::vector<ClampedRow> clamped;

  /// Uniform labels, zero multipliers, fresh accumulators.
  static GameState initial(Index n, int num_classes, std::size_t constraint_count,
                           const AdversaryConfig& config);
};

/// Applies the clamped rows to `labels` in place.
void apply_clamps(Matrix& labels, const std::vector<ClampedRow>& clamped);
std::vector<ClampedRow> clamps_from_split(const ValidationSplit& split);

/// Expected model error against the labels: 1 - (1/n) sum_i <f_i, y_i>.
double adversary_loss(const ModelOutputs& outputs, const Matrix& labels);
inline double adversary_loss(const ModelOutputs& outputs, const LabelMatrix& labels) {
  return adversary_loss(outputs, labels.values());
}

/// L(Y) - lambda'G - (rho/2) ||max(G, 0)||^2.
double augmented_objective(const ModelOutputs& outputs, const Matrix& labels,
                           const Vector& multipliers, double rho, const Vector& constraint_values);
double augmented_objective(const ModelOutputs& outputs, const GameState& state,
                           const Vector& constraint_values);

/// Exact gradient of the augmented objective with respect to Y.
Matrix grad_labels(const ModelOutputs& outputs, const Matrix& labels, const Vector& multipliers,
                   double rho, const ConstraintSet& constraints);
Matrix grad_labels(const ModelOutputs& outputs, const GameState& state,
                   const ConstraintSet& constraints);

/// Adagrad ascent on Y, rowwise simplex projection, then clamping.
void update_labels(GameState& state, const Matrix& grad);
/// Multiplier step on the constraint values, clipped at zero.
void update_multipliers(GameState& state, const Vector& constraint_values);

enum class FeasibilityStatus { Feasible, Infeasible, IterationLimit };
std::string to_string(FeasibilityStatus status);

struct WarmStartResult {
  GameState state;
  FeasibilityStatus status = FeasibilityStatus::IterationLimit;
  int iterations = 0;
  double max_violation = 0.0;

  bool feasible() const noexcept { return status == FeasibilityStatus::Feasible; }
};

/// Alternates label and multiplier updates against fixed model outputs until
/// max_j g_j(Y) <= feasibility_tol. When feasibility is not reached, the
/// returned labels are the iterate with the smallest max violation.
WarmStartResult warm_start(const ModelOutputs& outputs, const ConstraintSet& constraints,
                           GameState state, int max_iters, int patience = 1500);

enum class LabelInit { Uniform, RandomModel };
LabelInit label_init_from_string(const std::string& name);

struct InferResult {
  LabelMatrix labels;
  FeasibilityStatus status = FeasibilityStatus::IterationLimit;
  int iterations = 0;
  double max_violation = 0.0;

  bool feasible() const noexcept { return status == FeasibilityStatus::Feasible; }
};

/// Label-quality mode: feasible labels fit adversarially against a fixed
/// snapshot, with no model training.
InferResult infer_labels(const SignalBundle& bundle, const ConstraintSet& constraints,
                         const ModelOutputs& snapshot, const AdversaryConfig& config,
                         const std::vector<ClampedRow>& clamped = {});
InferResult infer_labels(const SignalBundle& bundle, const ConstraintSet& constraints,
                         int num_classes, LabelInit init, std::uint64_t seed,
                         const AdversaryConfig& config, const std::vector<ClampedRow>& clamped = {});

/// Versioned JSON checkpoint with row-major matrices.
void save_game_state(const GameState& state, const std::filesystem::path& path);
GameState load_game_state(const std::filesystem::path& path);

}  // namespace stochgall
