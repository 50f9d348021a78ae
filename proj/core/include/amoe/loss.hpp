#pragma once

#include <span>
#include <vector>
#include <vector>

#include "amoe/autodiff.hpp"

namespace amoe {

// Mean negative log softmax probability of target ids over masked rows.
// mask[i] selects which logit rows contribute (answer positions).
Node cross_entropy(Tape& t, const Node& logits, std::span<const int> targets,
                   const std::vector<bool>& mask);

}  // namespace amoe
