#include "stochgall/baselines.hpp"

#include <string>
#include <vector>

namespace stochgall {

namespace {

void normalise_rows(Matrix& m) {
  for (Index i = 0; i < m.rows(); ++i) {
    const double total = m.row(i).sum();
    if (total > 0.0) {
      m.row(i) /= total;
    } else {
      m.row(i).setConstant(1.0 / static_cast<double>(m.cols()));
    }
  }
}

void check_bundle(const SignalBundle& bundle, int num_classes) {
  if (bundle.empty()) throw Error(ErrorKind::Validation, "baseline needs at least one signal");
  if (bundle.min_num_classes() > num_classes) {
    throw Error(ErrorKind::Validation, "signal target class exceeds class count");
  }
}

}  // namespace

LabelMatrix majority_vote(const SignalBundle& bundle, int num_classes) {
  check_bundle(bundle, num_classes);
  Matrix votes = Matrix::Zero(bundle.example_count(), num_classes);
  for (const auto& s : bundle.signals()) {
    for (Index i = 0; i < s.probs.size(); ++i) {
      if (s.probs[i] > 0.5) {
        votes(i, s.target_class) += 1.0;
      } else if (s.probs[i] == 0.5) {
        votes(i, s.target_class) += 0.5;
      }
    }
  }
  normalise_rows(votes);
  return LabelMatrix(std::move(votes));
}

LabelMatrix average_labels(const SignalBundle& bundle, int num_classes) {
  check_bundle(bundle, num_classes);
  Matrix sums = Matrix::Zero(bundle.example_count(), num_classes);
  std::vector<int> counts(static_cast<std::size_t>(num_classes), 0);
  for (const auto& s : bundle.signals()) {
    sums.col(s.target_class) += s.probs;
    ++counts[static_cast<std::size_t>(s.target_class)];
  }
  std::string missing;
  for (int c = 0; c < num_classes; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) {
      missing += (missing.empty() ? "" : ", ") + std::to_string(c);
    } else {
      sums.col(c) /= counts[static_cast<std::size_t>(c)];
    }
  }
  if (!missing.empty()) {
    throw Error(ErrorKind::Validation, "no signal covers class(es) " + missing);
  }
  normalise_rows(sums);
  return LabelMatrix(std::move(sums));
}

}  // namespace stochgall
