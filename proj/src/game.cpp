#include "stochgall/game.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "stochgall/csv.hpp"

namespace stochgall {

using nlohmann::json;

namespace {

// Independent streams for model initialisation and mini-batch shuffling.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;

std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t stream) {
  return Rng(seed).split(stream).next_u64();
}

std::string format_optional(double v) {
  return std::isnan(v) ? std::string{} : csv::format_double(v);
}

}  // namespace

void validate(const GameConfig& config) {
  if (config.outer_rounds_max < 0) throw Error(ErrorKind::Config, "outer_rounds_max must be nonnegative");
  if (config.convergence_tol <= 0.0) throw Error(ErrorKind::Config, "convergence_tol must be positive");
  if (config.convergence_window < 1) throw Error(ErrorKind::Config, "convergence_window must be positive");
  if (config.adversary.feasibility_tol <= 0.0) throw Error(ErrorKind::Config, "feasibility_tol must be positive");
  if (config.adversary.rho <= 0.0) throw Error(ErrorKind::Config, "rho must be positive");
  if (config.adversary.warm_start_max_iters < 0) throw Error(ErrorKind::Config, "warm_start_max_iters must be nonnegative");
  if (config.snapshot_every < 0) throw Error(ErrorKind::Config, "snapshot_every must be nonnegative");
  validate(config.training);
}

GameConfig game_config_from_json(const json& doc, GameConfig base) {
  if (!doc.is_object()) throw Error(ErrorKind::Config, "game config must be a JSON object");
  static const std::set<std::string> known = {
      "outer_rounds_max", "convergence_tol", "convergence_window", "architecture", "hidden_width",
      "batch_size", "epochs_per_round", "learning_rate", "epsilon", "dropout_rate", "rho",
      "label_rate", "multiplier_rate", "multiplier_step", "feasibility_tol", "warm_start_max_iters",
      "infeasible_patience", "seed", "snapshot_every", "strict", "reset_adversary_accumulators"};
  for (const auto& [key, value] : doc.items()) {
    if (!known.contains(key)) throw Error(ErrorKind::Config, "unknown game config key '" + key + "'");
  }
  GameConfig c = std::move(base);
  try {
    c.outer_rounds_max = doc.value("outer_rounds_max", c.outer_rounds_max);
    c.convergence_tol = doc.value("convergence_tol", c.convergence_tol);
    c.convergence_window = doc.value("convergence_window", c.convergence_window);
    if (doc.contains("architecture") || doc.contains("hidden_width")) {
      const auto width = doc.value("hidden_width", c.architecture.hidden_width > 0 ? c.architecture.hidden_width : Index{32});
      c.architecture = architecture_from_string(doc.value("architecture", std::string("mlp")), width);
    }
    c.training.batch_size = doc.value("batch_size", c.training.batch_size);
    c.training.epochs_per_round = doc.value("epochs_per_round", c.training.epochs_per_round);
    c.training.learning_rate = doc.value("learning_rate", c.training.learning_rate);
    c.training.epsilon = doc.value("epsilon", c.training.epsilon);
    c.training.dropout_rate = doc.value("dropout_rate", c.training.dropout_rate);
    c.adversary.rho = doc.value("rho", c.adversary.rho);
    c.adversary.label_rate = doc.value("label_rate", c.adversary.label_rate);
    c.adversary.multiplier_rate = doc.value("multiplier_rate", c.adversary.multiplier_rate);
    if (doc.contains("multiplier_step")) {
      const auto step = doc["multiplier_step"].get<std::string>();
      if (step != "penalty" && step != "adagrad") throw Error(ErrorKind::Config, "multiplier_step must be penalty or adagrad");
      c.adversary.multiplier_step = step == "penalty" ? MultiplierStep::Penalty : MultiplierStep::Adagrad;
    }
    c.adversary.feasibility_tol = doc.value("feasibility_tol", c.adversary.feasibility_tol);
    c.adversary.warm_start_max_iters = doc.value("warm_start_max_iters", c.adversary.warm_start_max_iters);
    c.adversary.infeasible_patience = doc.value("infeasible_patience", c.adversary.infeasible_patience);
    c.seed = doc.value("seed", c.seed);
    c.snapshot_every = doc.value("snapshot_every", c.snapshot_every);
    c.strict = doc.value("strict", c.strict);
    c.reset_adversary_accumulators = doc.value("reset_adversary_accumulators", c.reset_adversary_accumulators);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Config, std::string("game config: ") + e.what());
  }
  validate(c);
  return c;
}

json game_config_to_json(const GameConfig& c) {
  json doc = {
      {"outer_rounds_max", c.outer_rounds_max},
      {"convergence_tol", c.convergence_tol},
      {"convergence_window", c.convergence_window},
      {"architecture", c.architecture.kind == Architecture::Kind::LinearSoftmax
                           ? "linear"
                           : (c.architecture.activation == Activation::Relu ? "mlp" : "mlp-tanh")},
      {"batch_size", c.training.batch_size},
      {"epochs_per_round", c.training.epochs_per_round},
      {"learning_rate", c.training.learning_rate},
      {"epsilon", c.training.epsilon},
      {"dropout_rate", c.training.dropout_rate},
      {"rho", c.adversary.rho},
      {"label_rate", c.adversary.label_rate},
      {"multiplier_rate", c.adversary.multiplier_rate},
      {"multiplier_step", c.adversary.multiplier_step == MultiplierStep::Penalty ? "penalty" : "adagrad"},
      {"feasibility_tol", c.adversary.feasibility_tol},
      {"warm_start_max_iters", c.adversary.warm_start_max_iters},
      {"infeasible_patience", c.adversary.infeasible_patience},
      {"seed", c.seed},
      {"snapshot_every", c.snapshot_every},
      {"strict", c.strict},
      {"reset_adversary_accumulators", c.reset_adversary_accumulators},
  };
  if (c.architecture.kind == Architecture::Kind::Mlp) doc["hidden_width"] = c.architecture.hidden_width;
  return doc;
}

std::string GameTrace::to_csv() const {
  std::ostringstream out;
  out << "round,model_loss,adv_loss,max_violation,label_error,test_error,lambda_norm\n";
  for (const auto& r : rounds) {
    out << r.round << ',' << csv::format_double(r.model_loss) << ',' << csv::format_double(r.adversary_loss)
        << ',' << csv::format_double(r.max_violation) << ',' << format_optional(r.label_error) << ','
        << format_optional(r.test_error) << ',' << csv::format_double(r.multiplier_norm) << '\n';
  }
  return out.str();
}

GameResult run_stoch_gall(const Dataset& dataset, const SignalBundle& bundle,
                          const ConstraintSet& constraints, const GameConfig& config,
                          const GameExtras& extras) {
  validate(config);
  const Index n = dataset.size();
  const int num_classes = dataset.num_classes();
  if (!bundle.empty() && bundle.example_count() != n) {
    throw Error(ErrorKind::Dimension, "signals cover " + std::to_string(bundle.example_count()) +
                                          " examples but the dataset has " + std::to_string(n));
  }
  if (bundle.min_num_classes() > num_classes) {
    throw Error(ErrorKind::Validation, "a signal targets a class outside the dataset");
  }
  for (const auto& c : constraints.constraints()) {
    if (c.kind() != ConstraintKind::Generic && c.signal_index() >= static_cast<Index>(bundle.size())) {
      throw Error(ErrorKind::Validation, "constraint references signal " + std::to_string(c.signal_index()) +
                                             " outside the bundle");
    }
  }

  const Matrix& x = dataset.features();
  auto params = ClassifierParams::random(config.architecture, dataset.dim(), num_classes,
                                         derived_seed(config.seed, kInitStream));
  const ModelOutputs initial_snapshot(forward(params, x));

  GameState state = GameState::initial(n, num_classes, constraints.size(), config.adversary);
  if (extras.clamp) state.clamped = clamps_from_split(*extras.clamp);
  {
    Matrix y = state.labels.values();
    apply_clamps(y, state.clamped);
    state.labels = LabelMatrix(std::move(y));
  }

  auto ws = warm_start(initial_snapshot, constraints, std::move(state),
                       config.adversary.warm_start_max_iters, config.adversary.infeasible_patience);
  if (!ws.feasible() && config.strict) {
    throw Error(ErrorKind::Infeasible, "warm start ended " + to_string(ws.status) +
                                           " with max violation " + csv::format_double(ws.max_violation));
  }
  state = std::move(ws.state);
  if (config.reset_adversary_accumulators) {
    state.label_optimizer.reset();
    state.multiplier_optimizer.reset();
  }

  TrainConfig training = config.training;
  training.seed = derived_seed(config.seed, kShuffleStream);
  Trainer trainer(std::move(params), training);

  GameTrace trace;
  const auto* truth = dataset.has_labels() ? &*dataset.labels() : nullptr;
  int stable_rounds = 0;
  double previous_loss = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
  int round = 0;
  while (round < config.outer_rounds_max) {
    ++round;
    trainer.run_round(x, state.labels.values());
    const ModelOutputs outputs(forward(trainer.params(), x));

    RoundRecord rec;
    rec.round = round;
    rec.model_loss = cross_entropy(outputs.probs(), state.labels.values());
    if (!std::isfinite(rec.model_loss)) {
      throw Error(ErrorKind::Validation, "model loss became non-finite in round " + std::to_string(round));
    }

    update_labels(state, grad_labels(outputs, state, constraints));
    const Vector g = constraints.values(state.labels);
    update_multipliers(state, g);

    rec.adversary_loss = adversary_loss(outputs, state.labels);
    rec.max_violation = constraints.empty() ? 0.0 : std::max(0.0, g.maxCoeff());
    rec.multiplier_norm = state.multipliers.norm();
    if (truth) rec.label_error = label_error(state.labels, *truth);
    if (extras.test) rec.test_error = evaluate(trainer.params(), *extras.test).error;
    trace.append(rec);

    if (config.snapshot_every > 0 && config.checkpoint_dir && round % config.snapshot_every == 0) {
      const auto tag = "round_" + std::to_string(round);
      save_game_state(state, *config.checkpoint_dir / (tag + "_game_state.json"));
      save_model(trainer.params(), *config.checkpoint_dir / (tag + "_model.json"));
    }

    if (!std::isnan(previous_loss)) {
      const double change = std::abs(rec.model_loss - previous_loss) / std::max(std::abs(previous_loss), 1e-12);
      stable_rounds = change < config.convergence_tol ? stable_rounds + 1 : 0;
      if (stable_rounds >= config.convergence_window) {
        converged = true;
        break;
      }
    }
    previous_loss = rec.model_loss;
  }

  return GameResult{trainer.params(), std::move(state.labels), std::move(trace), ws.status,
                    ws.iterations, ws.max_violation, round, converged};
}

Evaluation evaluate(const ClassifierParams& params, const Dataset& test) {
  const auto& truth = test.require_labels();
  const auto predicted = predict(params, test.features());
  const int num_classes = std::max(test.num_classes(), params.num_classes());
  Evaluation ev;
  ev.confusion = Eigen::MatrixXi::Zero(num_classes, num_classes);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++ev.confusion(truth[i], predicted[i]);
    if (truth[i] != predicted[i]) ++wrong;
  }
  ev.error = static_cast<double>(wrong) / static_cast<double>(truth.size());
  return ev;
}

ClassifierParams train_supervised(const Dataset& dataset, const LabelMatrix& labels,
                                  const Architecture& architecture, const TrainConfig& training,
                                  int epochs, std::uint64_t seed) {
  auto params = ClassifierParams::random(architecture, dataset.dim(), dataset.num_classes(),
                                         derived_seed(seed, kInitStream));
  TrainConfig cfg = training;
  cfg.seed = derived_seed(seed, kShuffleStream);
  Trainer trainer(std::move(params), cfg);
  for (int e = 0; e < epochs; ++e) trainer.run_epoch(dataset.features(), labels.values());
  return trainer.params();
}

}  // namespace stochgall
