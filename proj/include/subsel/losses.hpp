#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include "subsel/tensor.hpp"

namespace subsel {

// -log softmax(logits)[label] for a 1 x k row of logits.
inline Var cross_entropy(Var logits, std::size_t label) {
  if (logits.rows() != 1) throw std::invalid_argument("cross_entropy: expected 1 x k logits");
  if (label >= logits.cols()) {
    throw std::out_of_range("cross_entropy: label " + std::to_string(label) + " out of range for " +
                            std::to_string(logits.cols()) + " classes");
  }
  return neg(pick(log_softmax(logits, 1), 0, label));
}

// Mean absolute error against a constant target of the same shape.
inline Var mae(Var pred, const Tensor& target) {
  if (!pred.value().same_shape(target)) throw std::invalid_argument("mae: shape mismatch");
  const Var diff = sub(pred, pred.tape->constant(target));
  return scale(sum_all(abs(diff)), 1.0 / static_cast<double>(target.size()));
}

}  // namespace subsel
