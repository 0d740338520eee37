#include "stochgall/adversary.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "stochgall/csv.hpp"

namespace stochgall {

using nlohmann::json;

namespace {

void check_shapes(const ModelOutputs& outputs, const Matrix& labels) {
  if (outputs.probs().rows() != labels.rows() || outputs.probs().cols() != labels.cols()) {
    throw Error(ErrorKind::Dimension, "model outputs " + std::to_string(outputs.probs().rows()) + "x" +
                                          std::to_string(outputs.probs().cols()) + " vs labels " +
                                          std::to_string(labels.rows()) + "x" +
                                          std::to_string(labels.cols()));
  }
}

}  // namespace

ModelOutputs::ModelOutputs(Matrix probs) : probs_(std::move(probs)) {
  if (probs_.rows() < 1 || probs_.cols() < 2) {
    throw Error(ErrorKind::Dimension, "model outputs need n >= 1 rows and C >= 2 columns");
  }
  for (Index i = 0; i < probs_.rows(); ++i) {
    if (!probs_.row(i).allFinite() || probs_.row(i).minCoeff() < 0.0 ||
        std::abs(probs_.row(i).sum() - 1.0) > kRowSumTolerance) {
      throw Error(ErrorKind::Validation, "model output row " + std::to_string(i) +
                                             " is not a probability distribution");
    }
  }
}

ModelOutputs ModelOutputs::uniform(Index n, int num_classes) {
  return ModelOutputs(Matrix::Constant(n, num_classes, 1.0 / num_classes));
}

ModelOutputs ModelOutputs::random(Index n, int num_classes, std::uint64_t seed) {
  Rng rng(seed);
  Matrix p(n, num_classes);
  for (Index i = 0; i < n; ++i) {
    for (Index c = 0; c < num_classes; ++c) p(i, c) = rng.normal();
    p.row(i) = (p.row(i).array() - p.row(i).maxCoeff()).exp();
    p.row(i) /= p.row(i).sum();
  }
  return ModelOutputs(std::move(p));
}

GameState GameState::initial(Index n, int num_classes, std::size_t constraint_count,
                             const AdversaryConfig& config) {
  if (config.rho <= 0.0) {
    throw Error(ErrorKind::Config, "penalty parameter rho must be positive");
  }
  const auto m = static_cast<Index>(constraint_count);
  return GameState{LabelMatrix::uniform(n, num_classes),
                   Vector::Zero(m),
                   config.rho,
                   AdagradState(n * num_classes, config.label_rate, config.epsilon, num_classes),
                   AdagradState(m, config.multiplier_rate, config.epsilon),
                   0,
                   config.feasibility_tol,
                   config.multiplier_step,
                   {}};
}

void apply_clamps(Matrix& labels, const std::vector<ClampedRow>& clamped) {
  for (const auto& [row, label] : clamped) {
    if (row < 0 || row >= labels.rows() || label < 0 || label >= labels.cols()) {
      throw Error(ErrorKind::Validation, "clamped row outside label matrix");
    }
    labels.row(row).setZero();
    labels(row, label) = 1.0;
  }
}

std::vector<ClampedRow> clamps_from_split(const ValidationSplit& split) {
  std::vector<ClampedRow> out;
  out.reserve(split.size());
  for (std::size_t r = 0; r < split.size(); ++r) out.push_back({split.indices[r], split.labels[r]});
  return out;
}

double adversary_loss(const ModelOutputs& outputs, const Matrix& labels) {
  check_shapes(outputs, labels);
  return 1.0 - outputs.probs().cwiseProduct(labels).sum() / static_cast<double>(labels.rows());
}

double augmented_objective(const ModelOutputs& outputs, const Matrix& labels,
                           const Vector& multipliers, double rho, const Vector& constraint_values) {
  if (multipliers.size() != constraint_values.size()) {
    throw Error(ErrorKind::Dimension, "multiplier count differs from constraint count");
  }
  const double penalty = constraint_values.cwiseMax(0.0).squaredNorm();
  return adversary_loss(outputs, labels) - multipliers.dot(constraint_values) - 0.5 * rho * penalty;
}

double augmented_objective(const ModelOutputs& outputs, const GameState& state,
                           const Vector& constraint_values) {
  return augmented_objective(outputs, state.labels.values(), state.multipliers, state.rho,
                             constraint_values);
}

Matrix grad_labels(const ModelOutputs& outputs, const Matrix& labels, const Vector& multipliers,
                   double rho, const ConstraintSet& constraints) {
  check_shapes(outputs, labels);
  if (multipliers.size() != static_cast<Index>(constraints.size())) {
    throw Error(ErrorKind::Dimension, "multiplier count differs from constraint count");
  }
  const Index n = labels.rows();
  const int num_classes = static_cast<int>(labels.cols());
  Matrix grad = -outputs.probs() / static_cast<double>(n);
  if (constraints.empty()) return grad;
  const Vector g = constraints.values(labels);
  const Vector weights = -(multipliers + rho * g.cwiseMax(0.0));
  grad += constraints.weighted_gradient(weights, n, num_classes);
  return grad;
}

Matrix grad_labels(const ModelOutputs& outputs, const GameState& state,
                   const ConstraintSet& constraints) {
  return grad_labels(outputs, state.labels.values(), state.multipliers, state.rho, constraints);
}

void update_labels(GameState& state, const Matrix& grad) {
  Matrix y = state.labels.values();
  if (grad.rows() != y.rows() || grad.cols() != y.cols()) {
    throw Error(ErrorKind::Dimension, "label gradient shape mismatch");
  }
  if (!grad.allFinite()) {
    throw Error(ErrorKind::Validation, "non-finite label gradient");
  }
  state.label_optimizer.step(as_span(y), as_span(grad), StepDirection::Ascent);
  const auto cols = static_cast<std::size_t>(y.cols());
  for (Index i = 0; i < y.rows(); ++i) {
    project_row_simplex_inplace(std::span<double>(y.row(i).data(), cols));
  }
  apply_clamps(y, state.clamped);
  state.labels = LabelMatrix(std::move(y));
  ++state.iteration;
}

void update_multipliers(GameState& state, const Vector& constraint_values) {
  if (constraint_values.size() != state.multipliers.size()) {
    throw Error(ErrorKind::Dimension, "constraint value count differs from multiplier count");
  }
  if (state.multiplier_step == MultiplierStep::Penalty) {
    state.multipliers += state.rho * constraint_values;
  } else {
    state.multiplier_optimizer.step(as_span(state.multipliers), as_span(constraint_values),
                                    StepDirection::Ascent);
  }
  state.multipliers = clip_nonnegative(state.multipliers);
}

std::string to_string(FeasibilityStatus status) {
  switch (status) {
    case FeasibilityStatus::Feasible: return "feasible";
    case FeasibilityStatus::Infeasible: return "infeasible";
    case FeasibilityStatus::IterationLimit: return "iteration-limit";
  }
  return "unknown";
}

WarmStartResult warm_start(const ModelOutputs& outputs, const ConstraintSet& constraints,
                           GameState state, int max_iters, int patience) {
  check_shapes(outputs, state.labels.values());
  if (state.multipliers.size() != static_cast<Index>(constraints.size())) {
    throw Error(ErrorKind::Dimension, "game state has " + std::to_string(state.multipliers.size()) +
                                          " multipliers for " + std::to_string(constraints.size()) +
                                          " constraints");
  }
  WarmStartResult result{std::move(state), FeasibilityStatus::IterationLimit, 0, 0.0};
  GameState& s = result.state;

  double best = std::numeric_limits<double>::infinity();
  Matrix best_labels = s.labels.values();
  int since_improvement = 0;
  Vector g = constraints.values(s.labels);
  for (int it = 0;; ++it) {
    const double violation = constraints.empty() ? 0.0 : std::max(0.0, g.maxCoeff());
    if (violation < best) {
      if (violation < 0.99 * best) since_improvement = 0;
      best = violation;
      best_labels = s.labels.values();
    }
    if (violation <= s.feasibility_tol) {
      result.status = FeasibilityStatus::Feasible;
      result.max_violation = violation;
      result.iterations = it;
      return result;
    }
    if (it >= max_iters) {
      result.status = FeasibilityStatus::IterationLimit;
      result.iterations = it;
      break;
    }
    if (since_improvement >= patience) {
      result.status = FeasibilityStatus::Infeasible;
      result.iterations = it;
      break;
    }
    ++since_improvement;
    update_labels(s, grad_labels(outputs, s, constraints));
    g = constraints.values(s.labels);
    update_multipliers(s, g);
  }
  s.labels = LabelMatrix(std::move(best_labels));
  result.max_violation = best;
  return result;
}

LabelInit label_init_from_string(const std::string& name) {
  if (name == "uniform") return LabelInit::Uniform;
  if (name == "random-model" || name == "random") return LabelInit::RandomModel;
  throw Error(ErrorKind::Config, "unknown label init '" + name + "'");
}

InferResult infer_labels(const SignalBundle& bundle, const ConstraintSet& constraints,
                         const ModelOutputs& snapshot, const AdversaryConfig& config,
                         const std::vector<ClampedRow>& clamped) {
  if (!bundle.empty() && bundle.example_count() != snapshot.size()) {
    throw Error(ErrorKind::Dimension, "signals and model snapshot differ in example count");
  }
  if (bundle.min_num_classes() > snapshot.num_classes()) {
    throw Error(ErrorKind::Validation, "signal target class exceeds class count");
  }
  GameState state = GameState::initial(snapshot.size(), snapshot.num_classes(), constraints.size(), config);
  state.clamped = clamped;
  {
    Matrix y = state.labels.values();
    apply_clamps(y, state.clamped);
    state.labels = LabelMatrix(std::move(y));
  }

  if (constraints.empty()) {
    // Nothing to stop on: run the plain ascent for the whole budget.
    for (int it = 0; it < config.warm_start_max_iters; ++it) {
      update_labels(state, grad_labels(snapshot, state, constraints));
    }
    return InferResult{std::move(state.labels), FeasibilityStatus::Feasible,
                       config.warm_start_max_iters, 0.0};
  }

  auto ws = warm_start(snapshot, constraints, std::move(state), config.warm_start_max_iters,
                       config.infeasible_patience);
  return InferResult{std::move(ws.state.labels), ws.status, ws.iterations, ws.max_violation};
}

InferResult infer_labels(const SignalBundle& bundle, const ConstraintSet& constraints,
                         int num_classes, LabelInit init, std::uint64_t seed,
                         const AdversaryConfig& config, const std::vector<ClampedRow>& clamped) {
  const Index n = bundle.example_count();
  if (n == 0) {
    throw Error(ErrorKind::Validation, "label inference needs at least one signal");
  }
  const auto snapshot = init == LabelInit::Uniform ? ModelOutputs::uniform(n, num_classes)
                                                   : ModelOutputs::random(n, num_classes, seed);
  return infer_labels(bundle, constraints, snapshot, config, clamped);
}

namespace {

json matrix_to_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()},
          {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Index>();
  const auto cols = j.at("cols").get<Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Index>(data.size()) != rows * cols) {
    throw Error(ErrorKind::Ingestion, "checkpoint matrix has wrong element count");
  }
  return Eigen::Map<const Matrix>(data.data(), rows, cols);
}

json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(data.data(), static_cast<Index>(data.size()));
}

}  // namespace

void save_game_state(const GameState& state, const std::filesystem::path& path) {
  json clamped = json::array();
  for (const auto& c : state.clamped) clamped.push_back({c.row, c.label});
  const json doc = {
      {"format", "stochgall.game_state"},
      {"version", 1},
      {"rho", state.rho},
      {"iteration", state.iteration},
      {"feasibility_tol", state.feasibility_tol},
      {"multiplier_step", state.multiplier_step == MultiplierStep::Penalty ? "penalty" : "adagrad"},
      {"labels", matrix_to_json(state.labels.values())},
      {"multipliers", vector_to_json(state.multipliers)},
      {"label_optimizer",
       {{"base_rate", state.label_optimizer.base_rate()},
        {"epsilon", state.label_optimizer.epsilon()},
        {"block", state.label_optimizer.block()},
        {"accumulators", vector_to_json(state.label_optimizer.accumulators())}}},
      {"multiplier_optimizer",
       {{"base_rate", state.multiplier_optimizer.base_rate()},
        {"epsilon", state.multiplier_optimizer.epsilon()},
        {"block", state.multiplier_optimizer.block()},
        {"accumulators", vector_to_json(state.multiplier_optimizer.accumulators())}}},
      {"clamped", clamped},
  };
  csv::write_text(path, doc.dump() + "\n");
}

GameState load_game_state(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(csv::read_text(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
  }
  if (doc.value("format", "") != "stochgall.game_state" || doc.value("version", 0) != 1) {
    throw Error(ErrorKind::Ingestion, path.string() + " is not a version 1 game-state checkpoint");
  }
  auto optimizer = [](const json& j) {
    const auto block = j.value("block", Index{1});
    AdagradState opt(static_cast<Index>(j.at("accumulators").size()) * block, j.at("base_rate").get<double>(),
                     j.at("epsilon").get<double>(), block);
    opt.accumulators() = vector_from_json(j.at("accumulators"));
    return opt;
  };
  GameState state{LabelMatrix(matrix_from_json(doc.at("labels"))),
                  vector_from_json(doc.at("multipliers")),
                  doc.at("rho").get<double>(),
                  optimizer(doc.at("label_optimizer")),
                  optimizer(doc.at("multiplier_optimizer")),
                  doc.at("iteration").get<std::int64_t>(),
                  doc.at("feasibility_tol").get<double>(),
                  doc.at("multiplier_step").get<std::string>() == "penalty" ? MultiplierStep::Penalty
                                                                            : MultiplierStep::Adagrad,
                  {}};
  for (const auto& c : doc.at("clamped")) {
    state.clamped.push_back({c.at(0).get<Index>(), c.at(1).get<int>()});
  }
  return state;
}

}  // namespace stochgall
