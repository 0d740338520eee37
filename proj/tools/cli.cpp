#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "stochgall/baselines.hpp"
#include "stochgall/csv.hpp"
#include "stochgall/envelope.hpp"
#include "stochgall/experiment.hpp"
#include "stochgall/game.hpp"
#include "stochgall/signals.hpp"

namespace gall {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stochgall;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
  std::string config;
  std::string out;
  bool verbose = false;
};

json read_json(const fs::path& path) {
  try {
    return json::parse(csv::read_text(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& doc) { csv::write_text(path, doc.dump(2) + "\n"); }

void require_out(const Globals& g, const std::string& what) {
  if (g.out.empty()) throw CLI::RequiredError("--out (" + what + ")");
}

GameConfig load_game_config(const Globals& g) {
  GameConfig cfg = g.config.empty() ? GameConfig{} : game_config_from_json(read_json(g.config));
  if (g.seed_opt->count() > 0) cfg.seed = g.seed;
  return cfg;
}

int resolve_classes(std::optional<int> flag, const SignalBundle& bundle, const Dataset* truth) {
  if (flag) return *flag;
  if (truth != nullptr) return truth->num_classes();
  return bundle.min_num_classes();
}

std::optional<fs::path> opt_path(const std::string& s) {
  return s.empty() ? std::nullopt : std::optional<fs::path>(s);
}

struct SignalArgs {
  std::string signals;
  std::string meta;
  std::optional<int> classes;

  void add(CLI::App* sub) {
    sub->add_option("--signals", signals, "weak signal probabilities, one column per signal")->required();
    sub->add_option("--meta", meta, "JSON metadata with target classes and bounds")->required();
    sub->add_option("--classes", classes, "number of classes");
  }
  SignalBundle load() const { return load_signals(signals, meta); }
};

struct SynthArgs {
  Index n = 1000;
  Index test_n = 1000;
  Index dim = 10;
  int classes = 4;
  double separation = 1.5;
  double noise_std = 1.0;
  PlantedSpec planted;
};

int run_synth(const Globals& g, const SynthArgs& a) {
  require_out(g, "output directory");
  const Rng root(g.seed);
  const auto gen = BlobGenerator::create(a.dim, a.classes, a.separation, a.noise_std, root.split(1).next_u64());
  const Dataset train = gen.sample(a.n, root.split(2).next_u64());
  PlantedSpec planted = a.planted;
  planted.seed = root.split(4).next_u64();
  const SignalBundle bundle = plant_signals(train, planted);
  const fs::path dir(g.out);
  save_dataset(train, dir / "features.csv", dir / "labels.csv");
  if (a.test_n > 0) {
    const Dataset test = gen.sample(a.test_n, root.split(3).next_u64());
    save_dataset(test, dir / "test_features.csv", dir / "test_labels.csv");
  }
  save_signals(bundle, dir / "signals.csv", dir / "meta.json");
  if (g.verbose) std::cerr << "wrote " << train.size() << " rows and " << bundle.size() << " signals to " << dir << "\n";
  return kOk;
}

struct BoundsArgs {
  std::string features;
  std::string labels;
  SignalArgs sig;
  double fraction = 0.01;
  double slack = 0.0;
  std::string split_out;
};

int run_bounds(const Globals& g, const BoundsArgs& a) {
  require_out(g, "metadata JSON path");
  const Dataset data = load_dataset(a.features, fs::path(a.labels), a.sig.classes);
  const SignalBundle bundle = a.sig.load();
  if (static_cast<Index>(bundle.example_count()) != data.size()) {
    throw Error(ErrorKind::Dimension, "signals and features differ in example count");
  }
  const auto split = split_validation(data, a.fraction, Rng(g.seed).split(1).next_u64());
  std::vector<Bounds> bounds;
  for (const auto& s : bundle.signals()) {
    const auto est = estimate_bounds(s, split, a.slack);
    if (est.degenerate_precision) std::cerr << "warning: signal '" << s.name << "' has no mass on the validation rows\n";
    bounds.push_back(est.bounds);
  }
  save_signal_meta(bundle.with_bounds(std::move(bounds)), g.out);
  if (!a.split_out.empty()) {
    std::vector<int> rows(split.indices.begin(), split.indices.end());
    csv::write_integers(a.split_out, rows);
  }
  if (g.verbose) std::cerr << "estimated bounds from " << split.indices.size() << " validation rows\n";
  return kOk;
}

struct InferArgs {
  SignalArgs sig;
  std::string constraints = "stoch-gall";
  std::string init = "random-model";
  std::string truth;
  bool strict = false;
};

int run_infer(const Globals& g, const InferArgs& a) {
  require_out(g, "labels CSV path");
  const GameConfig cfg = load_game_config(g);
  const SignalBundle bundle = a.sig.load();
  std::optional<Dataset> truth;
  if (!a.truth.empty()) {
    truth = Dataset(Matrix::Zero(static_cast<Index>(bundle.example_count()), 1), csv::read_integers(a.truth), a.sig.classes);
  }
  const int classes = resolve_classes(a.sig.classes, bundle, truth ? &*truth : nullptr);
  const auto cons = ConstraintSet::from_bundle(bundle, constraint_mode_from_string(a.constraints));
  const auto result = infer_labels(bundle, cons, classes, label_init_from_string(a.init), cfg.seed, cfg.adversary);
  save_label_matrix(result.labels, g.out);
  std::cout << "status=" << to_string(result.status) << " iterations=" << result.iterations
            << " max_violation=" << csv::format_double(result.max_violation);
  if (truth) std::cout << " label_error=" << csv::format_double(label_error(result.labels, truth->require_labels()));
  std::cout << "\n";
  if (a.strict && !result.feasible()) {
    std::cerr << "error: constraints could not be satisfied\n";
    return kInfeasible;
  }
  return kOk;
}

struct TrainArgs {
  std::string features;
  std::string labels;
  std::string test_features;
  std::string test_labels;
  SignalArgs sig;
  std::string constraints = "stoch-gall";
  double validation_fraction = 0.0;
  std::optional<int> rounds;
  std::optional<std::string> architecture;
  bool strict = false;
};

int run_train(const Globals& g, const TrainArgs& a) {
  require_out(g, "output directory");
  GameConfig cfg = load_game_config(g);
  if (a.rounds) cfg.outer_rounds_max = *a.rounds;
  if (a.architecture) {
    cfg.architecture = architecture_from_string(*a.architecture, cfg.architecture.hidden_width > 0 ? cfg.architecture.hidden_width : 32);
  }
  if (a.strict) cfg.strict = true;
  const Dataset data = load_dataset(a.features, opt_path(a.labels), a.sig.classes);
  const SignalBundle bundle = a.sig.load();
  std::optional<Dataset> test;
  if (!a.test_features.empty()) test = load_dataset(a.test_features, opt_path(a.test_labels), data.num_classes());
  const auto cons = ConstraintSet::from_bundle(bundle, constraint_mode_from_string(a.constraints));
  GameExtras extras;
  if (a.validation_fraction > 0.0) extras.clamp = split_validation(data, a.validation_fraction, Rng(cfg.seed).split(7).next_u64());
  if (test && test->has_labels()) extras.test = &*test;

  const auto result = run_stoch_gall(data, bundle, cons, cfg, extras);
  const fs::path dir(g.out);
  save_model(result.params, dir / "model.json");
  save_label_matrix(result.labels, dir / "labels.csv");
  csv::write_text(dir / "trace.csv", result.trace.to_csv());
  json summary = {{"warm_start_status", to_string(result.warm_start_status)},
                  {"warm_start_iterations", result.warm_start_iterations},
                  {"warm_start_violation", result.warm_start_violation},
                  {"rounds", result.rounds},
                  {"converged", result.converged}};
  if (data.has_labels()) summary["label_error"] = label_error(result.labels, data.require_labels());
  if (extras.test != nullptr) summary["test_error"] = evaluate(result.params, *test).error;
  write_json(dir / "summary.json", summary);
  if (g.verbose) std::cerr << summary.dump() << "\n";
  return kOk;
}

struct BaselineArgs {
  SignalArgs sig;
  std::string method = "majority-vote";
  std::string truth;
};

int run_baseline(const Globals& g, const BaselineArgs& a) {
  require_out(g, "labels CSV path");
  const SignalBundle bundle = a.sig.load();
  const int classes = resolve_classes(a.sig.classes, bundle, nullptr);
  const Method method = method_from_string(a.method);
  if (method != Method::Average && method != Method::MajorityVote) {
    throw CLI::ValidationError("--method", "must be average or majority-vote");
  }
  const LabelMatrix labels = method == Method::Average ? average_labels(bundle, classes) : majority_vote(bundle, classes);
  save_label_matrix(labels, g.out);
  if (!a.truth.empty()) {
    std::cout << "label_error=" << csv::format_double(label_error(labels, csv::read_integers(a.truth))) << "\n";
  }
  return kOk;
}

struct EnvelopeArgs {
  SignalArgs sig;
  std::string truth;
  std::string constraints = "stoch-gall";
  int restarts = 5;
};

int run_envelope(const Globals& g, const EnvelopeArgs& a) {
  const SignalBundle bundle = a.sig.load();
  const auto truth_labels = csv::read_integers(a.truth);
  const Dataset truth(Matrix::Zero(static_cast<Index>(truth_labels.size()), 1), truth_labels, a.sig.classes);
  const int classes = resolve_classes(a.sig.classes, bundle, &truth);
  const auto cons = ConstraintSet::from_bundle(bundle, constraint_mode_from_string(a.constraints));
  EnvelopeOptions opts;
  opts.restarts = a.restarts;
  opts.seed = g.seed;
  const auto one_hot = LabelMatrix::one_hot(truth_labels, classes);
  const auto lo = feasible_error_envelope(cons, one_hot, EnvelopeDirection::Min, opts);
  const auto hi = feasible_error_envelope(cons, one_hot, EnvelopeDirection::Max, opts);
  const json doc = {{"min_error", lo.value},
                    {"max_error", hi.value},
                    {"min_status", to_string(lo.status)},
                    {"max_status", to_string(hi.status)},
                    {"min_violation", lo.max_violation},
                    {"max_violation", hi.max_violation}};
  if (!g.out.empty()) write_json(g.out, doc);
  std::cout << "min_error=" << csv::format_double(lo.value) << " max_error=" << csv::format_double(hi.value) << "\n";
  return lo.feasible() && hi.feasible() ? kOk : kRuntime;
}

int run_experiment_cmd(const Globals& g) {
  if (g.config.empty()) throw CLI::RequiredError("--config");
  require_out(g, "output directory");
  const fs::path config(g.config);
  auto spec = experiment_spec_from_json(read_json(config), config.parent_path());
  if (g.seed_opt->count() > 0) spec.seed = g.seed;
  const auto result = run_experiment(spec, fs::path(g.out));
  std::size_t failures = 0;
  for (const auto& r : result.rows) {
    if (r.feasible == "error") {
      ++failures;
      std::cerr << "cell k=" << r.sweep_size << " " << r.method << " failed: " << r.note << "\n";
    }
  }
  if (g.verbose) std::cerr << result.rows.size() << " rows written to " << g.out << "\n";
  return failures == result.rows.size() ? kRuntime : kOk;
}

struct EvalArgs {
  std::string model;
  std::string predictions;
  std::string features;
  std::string labels;
};

int run_eval(const Globals& g, const EvalArgs& a) {
  const auto truth = csv::read_integers(a.labels);
  json doc;
  if (!a.model.empty()) {
    if (a.features.empty()) throw CLI::RequiredError("--features");
    const auto params = load_model(a.model);
    const Dataset test = load_dataset(a.features, fs::path(a.labels), params.num_classes());
    const auto ev = evaluate(params, test);
    json confusion = json::array();
    for (Index r = 0; r < ev.confusion.rows(); ++r) {
      json row = json::array();
      for (Index c = 0; c < ev.confusion.cols(); ++c) row.push_back(ev.confusion(r, c));
      confusion.push_back(row);
    }
    doc = {{"test_error", ev.error}, {"confusion", confusion}};
    std::cout << "test_error=" << csv::format_double(ev.error) << "\n";
  } else if (!a.predictions.empty()) {
    const auto labels = load_label_matrix(a.predictions);
    const double err = label_error(labels, truth);
    doc = {{"label_error", err}};
    std::cout << "label_error=" << csv::format_double(err) << "\n";
  } else {
    throw CLI::RequiredError("--model or --predictions");
  }
  if (!g.out.empty()) write_json(g.out, doc);
  return kOk;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Constrained adversarial label learning from weak signals", "gall"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  g.seed_opt = app.add_option("--seed", g.seed, "random seed");
  app.add_option("--config", g.config, "JSON config (game settings, or the experiment spec)");
  app.add_option("--out", g.out, "output file or directory");
  app.add_flag("--verbose", g.verbose, "progress on stderr");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "generate blobs with planted weak signals");
  s->add_option("--n", synth.n, "training rows");
  s->add_option("--test-n", synth.test_n, "test rows (0 to skip)");
  s->add_option("--dim", synth.dim, "feature dimension");
  s->add_option("--classes", synth.classes, "number of classes");
  s->add_option("--separation", synth.separation, "scale of the class centers");
  s->add_option("--noise-std", synth.noise_std, "within-class standard deviation");
  s->add_option("--signals-per-class", synth.planted.signals_per_class);
  s->add_option("--flip-noise", synth.planted.flip_noise, "chance an entry is replaced by U[0,1]");
  s->add_option("--confused", synth.planted.confused_signals, "signals that also fire on the next class");
  s->add_option("--confusion-rate", synth.planted.confusion_rate);
  s->add_option("--copies", synth.planted.redundancy_copies, "duplicates of --copy-source appended");
  s->add_option("--copy-source", synth.planted.duplicate_source);
  s->add_option("--copy-jitter", synth.planted.duplicate_jitter);
  s->add_option("--bound-slack", synth.planted.bound_slack);

  BoundsArgs bounds;
  auto* b = app.add_subcommand("bounds", "estimate bounds on a labeled validation split; --out names the new metadata");
  b->add_option("--features", bounds.features)->required();
  b->add_option("--labels", bounds.labels)->required();
  bounds.sig.add(b);
  b->add_option("--fraction", bounds.fraction, "validation fraction");
  b->add_option("--slack", bounds.slack);
  b->add_option("--split-out", bounds.split_out, "write the validation row indices here");

  InferArgs infer;
  auto* i = app.add_subcommand("infer", "fit feasible labels against a fixed random model");
  infer.sig.add(i);
  i->add_option("--constraints", infer.constraints, "stoch-gall, error-only or precision-only");
  i->add_option("--init", infer.init, "uniform or random-model");
  i->add_option("--truth", infer.truth, "true labels, to report label error");
  i->add_flag("--strict", infer.strict, "exit 3 when the constraints cannot be satisfied");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "run the full game");
  t->add_option("--features", train.features)->required();
  t->add_option("--labels", train.labels, "true labels (validation clamping and reporting)");
  t->add_option("--test-features", train.test_features);
  t->add_option("--test-labels", train.test_labels);
  train.sig.add(t);
  t->add_option("--constraints", train.constraints);
  t->add_option("--validation-fraction", train.validation_fraction, "clamp this share of labeled rows");
  t->add_option("--rounds", train.rounds);
  t->add_option("--architecture", train.architecture, "linear, mlp or mlp-tanh");
  t->add_flag("--strict", train.strict);

  BaselineArgs baseline;
  auto* bl = app.add_subcommand("baseline", "average or majority-vote labels");
  baseline.sig.add(bl);
  bl->add_option("--method", baseline.method, "average or majority-vote");
  bl->add_option("--truth", baseline.truth);

  EnvelopeArgs envelope;
  auto* e = app.add_subcommand("envelope", "smallest and largest label error over feasible labels");
  envelope.sig.add(e);
  e->add_option("--truth", envelope.truth)->required();
  e->add_option("--constraints", envelope.constraints);
  e->add_option("--restarts", envelope.restarts);

  auto* x = app.add_subcommand("experiment", "run a sweep described by --config");

  EvalArgs eval;
  auto* ev = app.add_subcommand("eval", "score a saved model or label matrix");
  ev->add_option("--model", eval.model);
  ev->add_option("--predictions", eval.predictions, "label matrix CSV");
  ev->add_option("--features", eval.features);
  ev->add_option("--labels", eval.labels)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err) == 0 ? kOk : kUsage;
  }

  try {
    if (s->parsed()) return run_synth(g, synth);
    if (b->parsed()) return run_bounds(g, bounds);
    if (i->parsed()) return run_infer(g, infer);
    if (t->parsed()) return run_train(g, train);
    if (bl->parsed()) return run_baseline(g, baseline);
    if (e->parsed()) return run_envelope(g, envelope);
    if (x->parsed()) return run_experiment_cmd(g);
    if (ev->parsed()) return run_eval(g, eval);
  } catch (const CLI::ParseError& err) {
    return app.exit(err) == 0 ? kOk : kUsage;
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return err.kind() == ErrorKind::Infeasible ? kInfeasible : kRuntime;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}

int cli_main(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"gall"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace gall
