#pragma once

#include "stochgall/data.hpp"

namespace stochgall {

/// Each signal votes for its class where prob > 0.5 (half a vote at exactly
/// 0.5). Rows hold normalised tallies; rows with no votes are uniform.
LabelMatrix majority_vote(const SignalBundle& bundle, int num_classes);

/// Per class, the mean of all signals targeting it; rows normalised to sum 1
/// (uniform where every class mean is zero). Throws if a class has no signal.
LabelMatrix average_labels(const SignalBundle& bundle, int num_classes);

}  // namespace stochgall
