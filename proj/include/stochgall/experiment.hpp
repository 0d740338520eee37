#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stochgall/envelope.hpp"
#include "stochgall/game.hpp"
#include "stochgall/signals.hpp"

namespace stochgall {

enum class ExperimentMode { LabelQuality, TrainWeak, TrainPseudolabelWeak };
enum class Method { StochGall, AllErrorOnly, Average, MajorityVote };
enum class BoundSource { Given, Validation };

std::string to_string(ExperimentMode mode);
std::string to_string(Method method);
Method method_from_string(const std::string& name);

struct SyntheticData {
  Index n = 1000;
  Index test_n = 1000;
  Index dim = 10;
  int num_classes = 4;
  double separation = 1.5;
  double noise_std = 1.0;
  PlantedSpec planted;
};

struct FileData {
  std::filesystem::path features;
  std::filesystem::path labels;
  std::optional<std::filesystem::path> test_features;
  std::optional<std::filesystem::path> test_labels;
  std::filesystem::path signals;
  std::filesystem::path meta;
  std::optional<int> num_classes;
};

struct ExperimentSpec {
  ExperimentMode mode = ExperimentMode::LabelQuality;
  std::uint64_t seed = 0;
  std::vector<Method> methods{Method::StochGall, Method::AllErrorOnly, Method::Average,
                              Method::MajorityVote};
  /// Signal-prefix sizes in bundle order. In pseudolabel mode they count the
  /// weak signals added on top of the pseudolabels.
  std::vector<std::size_t> sweep;
  std::optional<SyntheticData> synthetic;
  std::optional<FileData> files;
  BoundSource bounds = BoundSource::Given;
  double validation_fraction = 0.01;
  double bound_slack = 0.0;
  bool clamp_validation = true;
  LabelInit infer_init = LabelInit::RandomModel;
  GameConfig game;
  /// Epochs for models trained on baseline labels; 0 means
  /// outer_rounds_max * epochs_per_round of the game.
  int baseline_epochs = 0;
  int pseudolabel_epochs = 200;
  int pseudolabel_folds = 4;
  bool envelope = true;
  EnvelopeOptions envelope_options;
  bool record_wall_clock = false;
};

void validate(const ExperimentSpec& spec);
/// Relative file paths resolve against `base_dir`.
ExperimentSpec experiment_spec_from_json(const nlohmann::json& doc,
                                         const std::filesystem::path& base_dir = {});

struct ResultRow {
  std::size_t sweep_size = 0;
  std::string method;  // a Method name, or "envelope"
  std::optional<double> label_error;
  std::optional<double> test_error;
  std::optional<double> min_error;
  std::optional<double> max_error;
  std::string feasible;  // "true", "false", or "error"
  std::optional<double> wall_clock_s;
  std::string note;      // failure message, if any
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  nlohmann::json summary;

  /// sweep_size, method, label_error, test_error, min_error, max_error, feasible, wall_clock_s
  std::string results_csv() const;
};

/// Runs every (sweep point, method) cell and the envelope per sweep point.
/// Cells run on up to GALL_THREADS threads; output does not depend on the
/// thread count. Writes results.csv, summary.json, bounds.csv and per-run
/// traces under `out_dir` when it is given.
ExperimentResult run_experiment(const ExperimentSpec& spec,
                                const std::optional<std::filesystem::path>& out_dir);

/// GALL_THREADS, clamped to at least 1; 1 when unset.
unsigned experiment_threads();

}  // namespace stochgall
