#include "stochgall/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <json.hpp>

#include "stochgall/constraints.hpp"
#include "stochgall/csv.hpp"

namespace stochgall {

using nlohmann::json;

namespace {

constexpr double kLogFloor = 1e-12;

struct ForwardCache {
  Matrix pre_activation;  // hidden layer, mlp only
  Matrix hidden;          // after activation and dropout
  Matrix dropout_scale;   // empty when no dropout
  Matrix probs;
};

void softmax_rows(Matrix& logits) {
  for (Index i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    row = (row.array() - row.maxCoeff()).exp();
    row /= row.sum();
  }
}

Matrix activate(const Matrix& a, Activation act) {
  return act == Activation::Relu ? Matrix(a.cwiseMax(0.0)) : Matrix(a.array().tanh().matrix());
}

Matrix activation_derivative(const Matrix& a, Activation act) {
  if (act == Activation::Relu) return (a.array() > 0.0).cast<double>().matrix();
  return (1.0 - a.array().tanh().square()).matrix();
}

void check_features(const ClassifierParams& params, const Matrix& features) {
  if (features.cols() != params.input_dim()) {
    throw Error(ErrorKind::Dimension, "feature dimension " + std::to_string(features.cols()) +
                                          " but model expects " + std::to_string(params.input_dim()));
  }
}

ForwardCache run_forward(const ClassifierParams& params, const Matrix& x, double dropout_rate, Rng* rng) {
  ForwardCache cache;
  if (params.architecture().kind == Architecture::Kind::LinearSoftmax) {
    cache.probs = x * params.weights(0);
    cache.probs.rowwise() += params.bias(0);
  } else {
    cache.pre_activation = x * params.weights(0);
    cache.pre_activation.rowwise() += params.bias(0);
    cache.hidden = activate(cache.pre_activation, params.architecture().activation);
    if (dropout_rate > 0.0 && rng != nullptr) {
      cache.dropout_scale.resize(cache.hidden.rows(), cache.hidden.cols());
      const double keep = 1.0 - dropout_rate;
      for (Index i = 0; i < cache.dropout_scale.size(); ++i) {
        cache.dropout_scale.data()[i] = rng->uniform() < keep ? 1.0 / keep : 0.0;
      }
      cache.hidden = cache.hidden.cwiseProduct(cache.dropout_scale);
    }
    cache.probs = cache.hidden * params.weights(1);
    cache.probs.rowwise() += params.bias(1);
  }
  softmax_rows(cache.probs);
  return cache;
}

Vector backward(const ClassifierParams& params, const Matrix& x, const Matrix& y,
                const ForwardCache& cache) {
  const auto batch = static_cast<double>(x.rows());
  Vector grad = Vector::Zero(params.theta().size());
  const Matrix d_logits = (cache.probs - y) / batch;
  auto write = [&](std::size_t layer, const Matrix& dw, const Eigen::RowVectorXd& db) {
    const auto& l = params.layers()[layer];
    Eigen::Map<Matrix>(grad.data() + l.weight_offset, l.in, l.out) = dw;
    Eigen::Map<Eigen::RowVectorXd>(grad.data() + l.bias_offset, l.out) = db;
  };
  if (params.architecture().kind == Architecture::Kind::LinearSoftmax) {
    write(0, x.transpose() * d_logits, d_logits.colwise().sum());
    return grad;
  }
  write(1, cache.hidden.transpose() * d_logits, d_logits.colwise().sum());
  Matrix d_hidden = d_logits * params.weights(1).transpose();
  if (cache.dropout_scale.size() > 0) d_hidden = d_hidden.cwiseProduct(cache.dropout_scale);
  const Matrix d_pre =
      d_hidden.cwiseProduct(activation_derivative(cache.pre_activation, params.architecture().activation));
  write(0, x.transpose() * d_pre, d_pre.colwise().sum());
  return grad;
}

Matrix gather_rows(const Matrix& m, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = m.row(rows[r]);
  return out;
}

}  // namespace

std::string Architecture::describe() const {
  if (kind == Kind::LinearSoftmax) return "linear";
  return "mlp(" + std::to_string(hidden_width) + "," +
         (activation == Activation::Relu ? "relu" : "tanh") + ")";
}

Architecture architecture_from_string(const std::string& name, Index hidden_width) {
  if (name == "linear" || name == "linear-softmax") return Architecture::linear();
  if (name == "mlp" || name == "mlp-relu") return Architecture::mlp(hidden_width, Activation::Relu);
  if (name == "mlp-tanh") return Architecture::mlp(hidden_width, Activation::Tanh);
  throw Error(ErrorKind::Config, "unknown architecture '" + name + "'");
}

ClassifierParams::ClassifierParams(Architecture architecture, Index input_dim, int num_classes)
    : architecture_(architecture), input_dim_(input_dim), num_classes_(num_classes) {
  if (input_dim < 1 || num_classes < 2) {
    throw Error(ErrorKind::Config, "classifier needs input_dim >= 1 and at least 2 classes");
  }
  std::vector<std::pair<Index, Index>> shapes;
  if (architecture.kind == Architecture::Kind::LinearSoftmax) {
    shapes.emplace_back(input_dim, num_classes);
  } else {
    if (architecture.hidden_width < 1) {
      throw Error(ErrorKind::Config, "mlp hidden width must be positive");
    }
    shapes.emplace_back(input_dim, architecture.hidden_width);
    shapes.emplace_back(architecture.hidden_width, num_classes);
  }
  Index offset = 0;
  for (const auto& [in, out] : shapes) {
    Layer l{in, out, offset, offset + in * out};
    offset = l.bias_offset + out;
    layers_.push_back(l);
  }
  theta_ = Vector::Zero(offset);
}

ClassifierParams ClassifierParams::random(Architecture architecture, Index input_dim, int num_classes,
                                          std::uint64_t seed) {
  ClassifierParams p(architecture, input_dim, num_classes);
  Rng rng(seed);
  for (std::size_t l = 0; l < p.layer_count(); ++l) {
    const auto& layer = p.layers_[l];
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
    auto w = p.weights(l);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-limit, limit);
  }
  return p;
}

Eigen::Map<const Matrix> ClassifierParams::weights(std::size_t layer) const {
  const auto& l = layers_.at(layer);
  return {theta_.data() + l.weight_offset, l.in, l.out};
}

Eigen::Map<Matrix> ClassifierParams::weights(std::size_t layer) {
  const auto& l = layers_.at(layer);
  return {theta_.data() + l.weight_offset, l.in, l.out};
}

Eigen::Map<const Eigen::RowVectorXd> ClassifierParams::bias(std::size_t layer) const {
  const auto& l = layers_.at(layer);
  return {theta_.data() + l.bias_offset, l.out};
}

Eigen::Map<Eigen::RowVectorXd> ClassifierParams::bias(std::size_t layer) {
  const auto& l = layers_.at(layer);
  return {theta_.data() + l.bias_offset, l.out};
}

Matrix forward(const ClassifierParams& params, const Matrix& features) {
  check_features(params, features);
  return run_forward(params, features, 0.0, nullptr).probs;
}

double cross_entropy(const Matrix& probs, const Matrix& labels) {
  if (probs.rows() != labels.rows() || probs.cols() != labels.cols()) {
    throw Error(ErrorKind::Dimension, "cross-entropy shape mismatch");
  }
  const double total = (labels.array() * probs.array().max(kLogFloor).log()).sum();
  return -total / static_cast<double>(labels.rows());
}

double cross_entropy(const ClassifierParams& params, const Matrix& features, const LabelMatrix& labels) {
  return cross_entropy(forward(params, features), labels.values());
}

Vector grad_theta(const ClassifierParams& params, const Matrix& features, const Matrix& labels) {
  check_features(params, features);
  if (features.rows() < 1 || labels.rows() != features.rows() || labels.cols() != params.num_classes()) {
    throw Error(ErrorKind::Dimension, "batch features and labels disagree");
  }
  return backward(params, features, labels, run_forward(params, features, 0.0, nullptr));
}

void validate(const TrainConfig& config) {
  if (config.batch_size < 1) throw Error(ErrorKind::Config, "batch_size must be at least 1");
  if (config.epochs_per_round < 1) throw Error(ErrorKind::Config, "epochs_per_round must be at least 1");
  if (config.learning_rate <= 0.0) throw Error(ErrorKind::Config, "learning_rate must be positive");
  if (!(config.dropout_rate >= 0.0 && config.dropout_rate < 1.0)) {
    throw Error(ErrorKind::Config, "dropout_rate must lie in [0,1)");
  }
}

Trainer::Trainer(ClassifierParams params, TrainConfig config)
    : params_(std::move(params)), config_(config), rng_(config.seed) {
  validate(config_);
  optimizer_ = AdagradState(params_.theta().size(), config_.learning_rate, config_.epsilon);
}

double Trainer::run_epoch(const Matrix& features, const Matrix& labels) {
  check_features(params_, features);
  if (labels.rows() != features.rows() || labels.cols() != params_.num_classes()) {
    throw Error(ErrorKind::Dimension, "training labels do not match features");
  }
  std::vector<Index> order(static_cast<std::size_t>(features.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  rng_.shuffle(std::span<Index>(order));

  const double dropout =
      params_.architecture().kind == Architecture::Kind::Mlp ? config_.dropout_rate : 0.0;
  double loss_sum = 0.0;
  std::size_t batches = 0;
  const auto batch_size = static_cast<std::size_t>(config_.batch_size);
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const auto rows = std::span<const Index>(order).subspan(start, std::min(batch_size, order.size() - start));
    const Matrix xb = gather_rows(features, rows);
    const Matrix yb = gather_rows(labels, rows);
    const auto cache = run_forward(params_, xb, dropout, &rng_);
    loss_sum += cross_entropy(cache.probs, yb);
    const Vector g = backward(params_, xb, yb, cache);
    optimizer_.step(as_span(params_.theta()), as_span(g), StepDirection::Descent);
    ++batches;
  }
  ++epochs_;
  return loss_sum / static_cast<double>(batches);
}

std::vector<double> Trainer::run_round(const Matrix& features, const Matrix& labels) {
  std::vector<double> losses;
  for (int e = 0; e < config_.epochs_per_round; ++e) losses.push_back(run_epoch(features, labels));
  return losses;
}

ClassifierParams train_rounds(ClassifierParams params, const Matrix& features,
                              const LabelMatrix& labels, const TrainConfig& config) {
  Trainer trainer(std::move(params), config);
  trainer.run_round(features, labels.values());
  return trainer.params();
}

std::vector<int> argmax_rows(const Matrix& probs) {
  std::vector<int> out(static_cast<std::size_t>(probs.rows()));
  for (Index i = 0; i < probs.rows(); ++i) {
    int best = 0;
    for (Index c = 1; c < probs.cols(); ++c) {
      if (probs(i, c) > probs(i, best)) best = static_cast<int>(c);
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

std::vector<int> predict(const ClassifierParams& params, const Matrix& features) {
  return argmax_rows(forward(params, features));
}

void save_model(const ClassifierParams& params, const std::filesystem::path& path) {
  const auto& arch = params.architecture();
  json layers = json::array();
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    const auto w = params.weights(l);
    const auto b = params.bias(l);
    layers.push_back({{"in", w.rows()},
                      {"out", w.cols()},
                      {"weights", std::vector<double>(w.data(), w.data() + w.size())},
                      {"bias", std::vector<double>(b.data(), b.data() + b.size())}});
  }
  const json doc = {
      {"format", "stochgall.model"},
      {"version", 1},
      {"architecture",
       {{"kind", arch.kind == Architecture::Kind::LinearSoftmax ? "linear" : "mlp"},
        {"hidden_width", arch.hidden_width},
        {"activation", arch.activation == Activation::Relu ? "relu" : "tanh"}}},
      {"input_dim", params.input_dim()},
      {"num_classes", params.num_classes()},
      {"layers", layers},
  };
  csv::write_text(path, doc.dump() + "\n");
}

ClassifierParams load_model(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(csv::read_text(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
  }
  if (doc.value("format", "") != "stochgall.model" || doc.value("version", 0) != 1) {
    throw Error(ErrorKind::Ingestion, path.string() + " is not a version 1 model checkpoint");
  }
  const auto& a = doc.at("architecture");
  Architecture arch;
  if (a.at("kind").get<std::string>() == "mlp") {
    arch = Architecture::mlp(a.at("hidden_width").get<Index>(),
                             a.at("activation").get<std::string>() == "tanh" ? Activation::Tanh
                                                                            : Activation::Relu);
  }
  ClassifierParams params(arch, doc.at("input_dim").get<Index>(), doc.at("num_classes").get<int>());
  const auto& layers = doc.at("layers");
  if (layers.size() != params.layer_count()) {
    throw Error(ErrorKind::Ingestion, "model checkpoint layer count disagrees with architecture");
  }
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    const auto w = layers[l].at("weights").get<std::vector<double>>();
    const auto b = layers[l].at("bias").get<std::vector<double>>();
    auto wm = params.weights(l);
    auto bm = params.bias(l);
    if (static_cast<Index>(w.size()) != wm.size() || static_cast<Index>(b.size()) != bm.size()) {
      throw Error(ErrorKind::Ingestion, "model checkpoint layer " + std::to_string(l) + " has wrong size");
    }
    std::copy(w.begin(), w.end(), wm.data());
    std::copy(b.begin(), b.end(), bm.data());
  }
  return params;
}

PseudolabelResult pseudolabel_signals(const Dataset& dataset, const ValidationSplit& split,
                                      const PseudolabelConfig& config) {
  if (split.size() == 0) {
    throw Error(ErrorKind::Validation, "pseudolabels need a nonempty validation split");
  }
  const int num_classes = dataset.num_classes();
  PseudolabelResult result;

  std::map<int, std::vector<std::size_t>> positions;  // class -> positions within the split
  for (std::size_t r = 0; r < split.size(); ++r) positions[split.labels[r]].push_back(r);
  std::size_t smallest = split.size();
  for (int c = 0; c < num_classes; ++c) {
    const auto it = positions.find(c);
    smallest = std::min(smallest, it == positions.end() ? std::size_t{0} : it->second.size());
  }
  int folds = config.folds;
  if (smallest < static_cast<std::size_t>(folds)) {
    folds = static_cast<int>(smallest);
    if (folds < 2) {
      throw Error(ErrorKind::Validation, "validation split has fewer than 2 examples of some class; "
                                         "cannot cross-validate pseudolabel bounds");
    }
    result.warnings.push_back("reduced cross-validation folds from " + std::to_string(config.folds) +
                              " to " + std::to_string(folds));
  }
  result.folds_used = folds;

  TrainConfig training = config.training;
  training.epochs_per_round = std::max(1, config.epochs);
  auto fit = [&](const std::vector<std::size_t>& train_positions, std::uint64_t stream) {
    Matrix x(static_cast<Index>(train_positions.size()), dataset.dim());
    std::vector<int> y;
    for (std::size_t r = 0; r < train_positions.size(); ++r) {
      x.row(static_cast<Index>(r)) = dataset.features().row(split.indices[train_positions[r]]);
      y.push_back(split.labels[train_positions[r]]);
    }
    TrainConfig cfg = training;
    cfg.seed = Rng(training.seed).split(stream).next_u64();
    auto init = ClassifierParams::random(config.architecture, dataset.dim(), num_classes, cfg.seed);
    return train_rounds(std::move(init), x, LabelMatrix::one_hot(y, num_classes), cfg);
  };

  // Final model on the whole split.
  std::vector<std::size_t> all(split.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto model = fit(all, 0);
  Matrix probs = forward(model, dataset.features());
  for (std::size_t r = 0; r < split.size(); ++r) {
    probs.row(split.indices[r]).setZero();
    probs(split.indices[r], split.labels[r]) = 1.0;
  }

  // Stratified fold assignment, then out-of-fold predictions on the split.
  std::vector<int> fold_of(split.size(), 0);
  Rng fold_rng = Rng(training.seed).split(0xF01D);
  for (auto& [c, pos] : positions) {
    auto shuffled = pos;
    fold_rng.shuffle(std::span<std::size_t>(shuffled));
    for (std::size_t j = 0; j < shuffled.size(); ++j) fold_of[shuffled[j]] = static_cast<int>(j % static_cast<std::size_t>(folds));
  }
  Matrix held_out(static_cast<Index>(split.size()), num_classes);
  for (int f = 0; f < folds; ++f) {
    std::vector<std::size_t> train_pos;
    std::vector<std::size_t> test_pos;
    for (std::size_t r = 0; r < split.size(); ++r) (fold_of[r] == f ? test_pos : train_pos).push_back(r);
    const auto fold_model = fit(train_pos, static_cast<std::uint64_t>(f + 1));
    Matrix x(static_cast<Index>(test_pos.size()), dataset.dim());
    for (std::size_t r = 0; r < test_pos.size(); ++r) {
      x.row(static_cast<Index>(r)) = dataset.features().row(split.indices[test_pos[r]]);
    }
    const Matrix p = forward(fold_model, x);
    for (std::size_t r = 0; r < test_pos.size(); ++r) held_out.row(static_cast<Index>(test_pos[r])) = p.row(static_cast<Index>(r));
  }

  ValidationSplit local;
  local.labels = split.labels;
  local.fraction = split.fraction;
  for (std::size_t r = 0; r < split.size(); ++r) local.indices.push_back(static_cast<Index>(r));

  std::vector<WeakSignal> signals;
  std::vector<Bounds> bounds;
  for (int c = 0; c < num_classes; ++c) {
    const WeakSignal cv_signal{held_out.col(c), c, "cv"};
    const auto est = estimate_bounds(cv_signal, local, 0.0);
    if (est.degenerate_precision) {
      result.warnings.push_back("pseudolabel class " + std::to_string(c) + " never predicted in CV");
    }
    signals.push_back({probs.col(c), c, "pseudolabel_" + std::to_string(c)});
    bounds.push_back(est.bounds);
  }
  result.bundle = SignalBundle(std::move(signals), std::move(bounds));
  return result;
}

}  // namespace stochgall
