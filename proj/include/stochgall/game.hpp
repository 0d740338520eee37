#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stochgall/adversary.hpp"
#include "stochgall/classifier.hpp"
#include "stochgall/constraints.hpp"
#include "stochgall/data.hpp"

namespace stochgall {

struct GameConfig {
  int outer_rounds_max = 50;
  double convergence_tol = 1e-4;  // relative change of the model loss
  int convergence_window = 3;
  Architecture architecture;
  TrainConfig training;  // epochs_per_round lives here
  AdversaryConfig adversary;
  std::uint64_t seed = 0;
  int snapshot_every = 0;  // 0 disables checkpoints
  std::optional<std::filesystem::path> checkpoint_dir;
  /// Abort with ErrorKind::Infeasible when the warm start cannot reach feasibility.
  bool strict = false;
  /// Clear the label/multiplier Adagrad accumulators after the warm start.
  bool reset_adversary_accumulators = false;
};

void validate(const GameConfig& config);
/// Overrides fields present in `doc`; unknown keys are rejected.
GameConfig game_config_from_json(const nlohmann::json& doc, GameConfig base = {});
nlohmann::json game_config_to_json(const GameConfig& config);

struct RoundRecord {
  int round = 0;
  double model_loss = 0.0;
  double adversary_loss = 0.0;
  double max_violation = 0.0;
  double label_error = std::numeric_limits<double>::quiet_NaN();
  double test_error = std::numeric_limits<double>::quiet_NaN();
  double multiplier_norm = 0.0;
};

struct GameTrace {
  std::vector<RoundRecord> rounds;

  void append(const RoundRecord& r) { rounds.push_back(r); }
  std::size_t size() const noexcept { return rounds.size(); }
  /// round, model_loss, adv_loss, max_violation, label_error, test_error, lambda_norm
  std::string to_csv() const;
};

struct GameExtras {
  /// Validation rows pinned to their truth in Y.
  std::optional<ValidationSplit> clamp;
  /// Scored once per round into the trace when present.
  const Dataset* test = nullptr;
};

struct GameResult {
  ClassifierParams params;
  LabelMatrix labels;
  GameTrace trace;
  FeasibilityStatus warm_start_status = FeasibilityStatus::Feasible;
  int warm_start_iterations = 0;
  double warm_start_violation = 0.0;
  int rounds = 0;
  bool converged = false;
};

/// Warm start against an untrained model, then alternate training rounds on
/// theta with one full-gradient label/multiplier update per round.
GameResult run_stoch_gall(const Dataset& dataset, const SignalBundle& bundle,
                          const ConstraintSet& constraints, const GameConfig& config,
                          const GameExtras& extras = {});

struct Evaluation {
  double error = 0.0;
  Eigen::MatrixXi confusion;  // rows: truth, cols: prediction
};

Evaluation evaluate(const ClassifierParams& params, const Dataset& test);

/// Plain supervised training for `epochs` epochs on soft or hard labels.
ClassifierParams train_supervised(const Dataset& dataset, const LabelMatrix& labels,
                                  const Architecture& architecture, const TrainConfig& training,
                                  int epochs, std::uint64_t seed);

}  // namespace stochgall
