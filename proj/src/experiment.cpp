#include "stochgall/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <sstream>
#include <thread>

#include "stochgall/baselines.hpp"
#include "stochgall/csv.hpp"

namespace stochgall {

using nlohmann::json;

std::string to_string(ExperimentMode mode) {
  switch (mode) {
    case ExperimentMode::LabelQuality: return "label-quality";
    case ExperimentMode::TrainWeak: return "train-weak";
    case ExperimentMode::TrainPseudolabelWeak: return "train-pseudolabel-weak";
  }
  return "unknown";
}

std::string to_string(Method method) {
  switch (method) {
    case Method::StochGall: return "stoch-gall";
    case Method::AllErrorOnly: return "all-error-only";
    case Method::Average: return "average";
    case Method::MajorityVote: return "majority-vote";
  }
  return "unknown";
}

Method method_from_string(const std::string& name) {
  if (name == "stoch-gall") return Method::StochGall;
  if (name == "all-error-only" || name == "all") return Method::AllErrorOnly;
  if (name == "average") return Method::Average;
  if (name == "majority-vote") return Method::MajorityVote;
  throw Error(ErrorKind::Config, "unknown method '" + name + "'");
}

namespace {

ExperimentMode mode_from_string(const std::string& name) {
  if (name == "label-quality") return ExperimentMode::LabelQuality;
  if (name == "train-weak") return ExperimentMode::TrainWeak;
  if (name == "train-pseudolabel-weak") return ExperimentMode::TrainPseudolabelWeak;
  throw Error(ErrorKind::Config, "unknown experiment mode '" + name + "'");
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

PlantedSpec planted_from_json(const json& j) {
  PlantedSpec p;
  p.signals_per_class = j.value("signals_per_class", p.signals_per_class);
  p.flip_noise = j.value("flip_noise", p.flip_noise);
  p.confused_signals = j.value("confused_signals", p.confused_signals);
  p.confusion_rate = j.value("confusion_rate", p.confusion_rate);
  p.redundancy_copies = j.value("redundancy_copies", p.redundancy_copies);
  p.duplicate_source = j.value("duplicate_source", p.duplicate_source);
  p.duplicate_jitter = j.value("duplicate_jitter", p.duplicate_jitter);
  p.bound_slack = j.value("bound_slack", p.bound_slack);
  p.seed = j.value("seed", p.seed);
  return p;
}

std::string format_opt(const std::optional<double>& v) {
  return v ? csv::format_double(*v) : std::string{};
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

struct Prepared {
  Dataset train;
  std::optional<Dataset> test;
  SignalBundle weak;
  SignalBundle pseudo;
  std::optional<ValidationSplit> split;
  json pseudo_info = json::object();
};

Prepared prepare(const ExperimentSpec& spec) {
  const Rng root(spec.seed);
  std::optional<Dataset> train;
  std::optional<Dataset> test;
  SignalBundle weak;
  if (spec.synthetic) {
    const auto& s = *spec.synthetic;
    const auto gen = BlobGenerator::create(s.dim, s.num_classes, s.separation, s.noise_std,
                                           root.split(10).next_u64());
    train = gen.sample(s.n, root.split(11).next_u64());
    if (s.test_n > 0) test = gen.sample(s.test_n, root.split(12).next_u64());
    PlantedSpec planted = s.planted;
    planted.seed = root.split(13).next_u64() ^ s.planted.seed;
    weak = plant_signals(*train, planted);
  } else {
    const auto& f = *spec.files;
    train = load_dataset(f.features, f.labels, f.num_classes);
    if (f.test_features) {
      test = load_dataset(*f.test_features, f.test_labels, train->num_classes());
    }
    weak = load_signals(f.signals, f.meta);
    if (weak.example_count() != train->size()) {
      throw Error(ErrorKind::Dimension, "signals and features differ in example count");
    }
  }

  Prepared p{std::move(*train), std::move(test), std::move(weak), {}, std::nullopt};
  const bool needs_split =
      spec.bounds == BoundSource::Validation || spec.mode == ExperimentMode::TrainPseudolabelWeak;
  if (needs_split) {
    p.split = split_validation(p.train, spec.validation_fraction, root.split(14).next_u64());
  }
  if (spec.bounds == BoundSource::Validation) {
    std::vector<Bounds> bounds;
    for (const auto& s : p.weak.signals()) bounds.push_back(estimate_bounds(s, *p.split, spec.bound_slack).bounds);
    p.weak = p.weak.with_bounds(std::move(bounds));
  }
  if (spec.mode == ExperimentMode::TrainPseudolabelWeak) {
    PseudolabelConfig cfg;
    cfg.architecture = spec.game.architecture;
    cfg.training = spec.game.training;
    cfg.training.seed = root.split(15).next_u64();
    cfg.epochs = spec.pseudolabel_epochs;
    cfg.folds = spec.pseudolabel_folds;
    auto pl = pseudolabel_signals(p.train, *p.split, cfg);
    p.pseudo = std::move(pl.bundle);
    p.pseudo_info = {{"folds_used", pl.folds_used}, {"warnings", pl.warnings}};
  }
  return p;
}

struct CellOutput {
  ResultRow row;
  std::string trace_csv;
};

}  // namespace

void validate(const ExperimentSpec& spec) {
  if (spec.methods.empty()) throw Error(ErrorKind::Config, "experiment needs at least one method");
  if (spec.sweep.empty()) throw Error(ErrorKind::Config, "experiment needs at least one sweep size");
  for (std::size_t i = 1; i < spec.sweep.size(); ++i) {
    if (spec.sweep[i] < spec.sweep[i - 1]) throw Error(ErrorKind::Config, "sweep sizes must be nondecreasing");
  }
  if (spec.synthetic.has_value() == spec.files.has_value()) {
    throw Error(ErrorKind::Config, "experiment data must be either synthetic or file based");
  }
  if (spec.mode != ExperimentMode::LabelQuality) {
    const bool has_test = spec.synthetic ? spec.synthetic->test_n > 0
                                         : (spec.files->test_features && spec.files->test_labels);
    if (!has_test) throw Error(ErrorKind::Config, "training modes need a labeled test set");
  }
  validate(spec.game);
}

ExperimentSpec experiment_spec_from_json(const json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw Error(ErrorKind::Config, "experiment spec must be a JSON object");
  ExperimentSpec spec;
  try {
    spec.mode = mode_from_string(doc.value("mode", std::string("label-quality")));
    spec.seed = doc.value("seed", spec.seed);
    if (doc.contains("methods")) {
      spec.methods.clear();
      for (const auto& m : doc["methods"]) spec.methods.push_back(method_from_string(m.get<std::string>()));
    }
    spec.sweep = doc.at("sweep").get<std::vector<std::size_t>>();
    const auto& data = doc.at("data");
    if (data.contains("synthetic")) {
      const auto& s = data["synthetic"];
      SyntheticData syn;
      syn.n = s.value("n", syn.n);
      syn.test_n = s.value("test_n", syn.test_n);
      syn.dim = s.value("dim", syn.dim);
      syn.num_classes = s.value("classes", syn.num_classes);
      syn.separation = s.value("separation", syn.separation);
      syn.noise_std = s.value("noise_std", syn.noise_std);
      if (s.contains("planted")) syn.planted = planted_from_json(s["planted"]);
      spec.synthetic = syn;
    } else {
      FileData f;
      f.features = resolve(base_dir, data.at("features").get<std::string>());
      f.labels = resolve(base_dir, data.at("labels").get<std::string>());
      if (data.contains("test_features")) f.test_features = resolve(base_dir, data["test_features"].get<std::string>());
      if (data.contains("test_labels")) f.test_labels = resolve(base_dir, data["test_labels"].get<std::string>());
      f.signals = resolve(base_dir, data.at("signals").get<std::string>());
      f.meta = resolve(base_dir, data.at("meta").get<std::string>());
      if (data.contains("classes")) f.num_classes = data["classes"].get<int>();
      spec.files = f;
    }
    const auto default_bounds = spec.mode == ExperimentMode::LabelQuality ? "given" : "validation";
    const auto bounds = doc.value("bounds", std::string(default_bounds));
    if (bounds != "given" && bounds != "validation") throw Error(ErrorKind::Config, "bounds must be given or validation");
    spec.bounds = bounds == "given" ? BoundSource::Given : BoundSource::Validation;
    spec.validation_fraction = doc.value("validation_fraction", spec.validation_fraction);
    spec.bound_slack = doc.value("bound_slack", spec.bound_slack);
    spec.clamp_validation = doc.value("clamp_validation", spec.clamp_validation);
    spec.infer_init = label_init_from_string(doc.value("infer_init", std::string("random-model")));
    if (doc.contains("game")) spec.game = game_config_from_json(doc["game"]);
    spec.baseline_epochs = doc.value("baseline_epochs", spec.baseline_epochs);
    spec.pseudolabel_epochs = doc.value("pseudolabel_epochs", spec.pseudolabel_epochs);
    spec.pseudolabel_folds = doc.value("pseudolabel_folds", spec.pseudolabel_folds);
    if (doc.contains("envelope")) {
      const auto& e = doc["envelope"];
      spec.envelope = e.value("enabled", true);
      spec.envelope_options.restarts = e.value("restarts", spec.envelope_options.restarts);
      spec.envelope_options.outer_iters = e.value("outer_iters", spec.envelope_options.outer_iters);
      spec.envelope_options.inner_iters = e.value("inner_iters", spec.envelope_options.inner_iters);
    }
    spec.record_wall_clock = doc.value("record_wall_clock", spec.record_wall_clock);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Config, std::string("experiment spec: ") + e.what());
  }
  validate(spec);
  return spec;
}

std::string ExperimentResult::results_csv() const {
  std::ostringstream out;
  out << "sweep_size,method,label_error,test_error,min_error,max_error,feasible,wall_clock_s\n";
  for (const auto& r : rows) {
    out << r.sweep_size << ',' << r.method << ',' << format_opt(r.label_error) << ','
        << format_opt(r.test_error) << ',' << format_opt(r.min_error) << ',' << format_opt(r.max_error)
        << ',' << r.feasible << ',' << format_opt(r.wall_clock_s) << '\n';
  }
  return out.str();
}

unsigned experiment_threads() {
  const char* env = std::getenv("GALL_THREADS");
  if (env == nullptr) return 1;
  const long v = std::strtol(env, nullptr, 10);
  return v < 1 ? 1U : static_cast<unsigned>(v);
}

ExperimentResult run_experiment(const ExperimentSpec& spec,
                                const std::optional<std::filesystem::path>& out_dir) {
  validate(spec);
  const Prepared data = prepare(spec);
  const int num_classes = data.train.num_classes();
  const auto& truth = data.train.require_labels();
  const bool training_mode = spec.mode != ExperimentMode::LabelQuality;
  const auto clamps = (data.split && spec.clamp_validation) ? clamps_from_split(*data.split)
                                                           : std::vector<ClampedRow>{};
  const int baseline_epochs = spec.baseline_epochs > 0
                                  ? spec.baseline_epochs
                                  : spec.game.outer_rounds_max * spec.game.training.epochs_per_round;
  const Rng root(spec.seed);

  auto active_bundle = [&](std::size_t k) {
    const auto weak = data.weak.prefix(k);
    return spec.mode == ExperimentMode::TrainPseudolabelWeak ? data.pseudo.concat(weak) : weak;
  };

  const std::size_t per_point = spec.methods.size() + (spec.envelope ? 1 : 0);
  std::vector<CellOutput> cells(spec.sweep.size() * per_point);
  std::vector<std::function<void()>> tasks;

  for (std::size_t s = 0; s < spec.sweep.size(); ++s) {
    const std::size_t k = spec.sweep[s];
    for (std::size_t mi = 0; mi < spec.methods.size(); ++mi) {
      const Method method = spec.methods[mi];
      CellOutput& cell = cells[s * per_point + mi];
      tasks.emplace_back([&, k, method, mi, &cell = cell] {
        cell.row.sweep_size = k;
        cell.row.method = to_string(method);
        const auto started = std::chrono::steady_clock::now();
        try {
          const SignalBundle sub = active_bundle(k);
          const auto cell_seed = root.split(100 + mi).next_u64();
          const ConstraintSet full = ConstraintSet::from_bundle(sub, ConstraintMode::ErrorAndPrecision);
          if (method == Method::StochGall || method == Method::AllErrorOnly) {
            const ConstraintSet cons = method == Method::StochGall
                                           ? full
                                           : ConstraintSet::from_bundle(sub, ConstraintMode::ErrorOnly);
            if (!training_mode) {
              const auto inferred = infer_labels(sub, cons, num_classes, spec.infer_init, cell_seed,
                                                 spec.game.adversary, clamps);
              cell.row.label_error = label_error(inferred.labels, truth);
              cell.row.feasible = inferred.feasible() ? "true" : "false";
            } else {
              GameConfig cfg = spec.game;
              cfg.seed = cell_seed;
              cfg.checkpoint_dir.reset();
              GameExtras extras;
              if (spec.clamp_validation && data.split) extras.clamp = data.split;
              extras.test = &*data.test;
              const auto result = run_stoch_gall(data.train, sub, cons, cfg, extras);
              cell.row.label_error = label_error(result.labels, truth);
              cell.row.test_error = evaluate(result.params, *data.test).error;
              cell.row.feasible = result.warm_start_status == FeasibilityStatus::Feasible ? "true" : "false";
              cell.trace_csv = result.trace.to_csv();
            }
          } else {
            Matrix y = (method == Method::Average ? average_labels(sub, num_classes)
                                                  : majority_vote(sub, num_classes))
                           .values();
            apply_clamps(y, clamps);
            const LabelMatrix labels(std::move(y));
            cell.row.label_error = label_error(labels, truth);
            cell.row.feasible =
                full.max_violation(labels.values()) <= spec.game.adversary.feasibility_tol ? "true" : "false";
            if (training_mode) {
              const auto params = train_supervised(data.train, labels, spec.game.architecture,
                                                   spec.game.training, baseline_epochs, cell_seed);
              cell.row.test_error = evaluate(params, *data.test).error;
            }
          }
        } catch (const std::exception& e) {
          cell.row.feasible = "error";
          cell.row.note = e.what();
        }
        if (spec.record_wall_clock) {
          cell.row.wall_clock_s =
              std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        }
      });
    }
    if (spec.envelope) {
      CellOutput& cell = cells[s * per_point + spec.methods.size()];
      tasks.emplace_back([&, k, &cell = cell] {
        cell.row.sweep_size = k;
        cell.row.method = "envelope";
        const auto started = std::chrono::steady_clock::now();
        try {
          const SignalBundle sub = active_bundle(k);
          const ConstraintSet cons = ConstraintSet::from_bundle(sub, ConstraintMode::ErrorAndPrecision);
          const auto one_hot = LabelMatrix::one_hot(truth, num_classes);
          EnvelopeOptions opts = spec.envelope_options;
          opts.seed = root.split(200).next_u64();
          const auto lo = feasible_error_envelope(cons, one_hot, EnvelopeDirection::Min, opts);
          const auto hi = feasible_error_envelope(cons, one_hot, EnvelopeDirection::Max, opts);
          cell.row.min_error = lo.value;
          cell.row.max_error = hi.value;
          cell.row.feasible = lo.feasible() && hi.feasible() ? "true" : "false";
        } catch (const std::exception& e) {
          cell.row.feasible = "error";
          cell.row.note = e.what();
        }
        if (spec.record_wall_clock) {
          cell.row.wall_clock_s =
              std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        }
      });
    }
  }

  const unsigned threads = std::min<unsigned>(experiment_threads(), static_cast<unsigned>(tasks.size()));
  if (threads <= 1) {
    for (auto& t : tasks) t();
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) tasks[i]();
      });
    }
  }

  ExperimentResult result;
  json rows = json::array();
  json failures = json::array();
  for (const auto& c : cells) {
    result.rows.push_back(c.row);
    rows.push_back({{"sweep_size", c.row.sweep_size},
                    {"method", c.row.method},
                    {"label_error", opt_json(c.row.label_error)},
                    {"test_error", opt_json(c.row.test_error)},
                    {"min_error", opt_json(c.row.min_error)},
                    {"max_error", opt_json(c.row.max_error)},
                    {"feasible", c.row.feasible}});
    if (!c.row.note.empty()) {
      failures.push_back({{"sweep_size", c.row.sweep_size}, {"method", c.row.method}, {"error", c.row.note}});
    }
  }
  json methods = json::array();
  for (auto m : spec.methods) methods.push_back(to_string(m));
  result.summary = {
      {"mode", to_string(spec.mode)},
      {"seed", spec.seed},
      {"classes", num_classes},
      {"train_n", data.train.size()},
      {"test_n", data.test ? data.test->size() : 0},
      {"weak_signals", data.weak.size()},
      {"pseudolabel_signals", data.pseudo.size()},
      {"validation_size", data.split ? data.split->size() : 0},
      {"sweep", spec.sweep},
      {"methods", methods},
      {"results", rows},
      {"failures", failures},
      {"pseudolabel", data.pseudo_info},
      {"game", game_config_to_json(spec.game)},
  };

  if (out_dir) {
    csv::write_text(*out_dir / "results.csv", result.results_csv());
    csv::write_text(*out_dir / "summary.json", result.summary.dump(2) + "\n");
    std::ostringstream bounds;
    bounds << "sweep_size,signal_index,name,target_class,b_error,b_precision\n";
    for (std::size_t k : spec.sweep) {
      const auto sub = active_bundle(k);
      for (std::size_t j = 0; j < sub.size(); ++j) {
        bounds << k << ',' << j << ',' << sub.signals()[j].name << ',' << sub.signals()[j].target_class << ','
               << csv::format_double(sub.bounds()[j].error) << ','
               << csv::format_double(sub.bounds()[j].precision) << '\n';
      }
    }
    csv::write_text(*out_dir / "bounds.csv", bounds.str());
    for (const auto& c : cells) {
      if (c.trace_csv.empty()) continue;
      csv::write_text(*out_dir / "traces" / ("trace_k" + std::to_string(c.row.sweep_size) + "_" + c.row.method + ".csv"),
                      c.trace_csv);
    }
  }
  return result;
}

}  // namespace stochgall
