// SPDX-License-Identifier: Apache-2.0
#include "brainstack/optim.hpp"

#include <cmath>

#include "brainstack/errors.hpp"

namespace brainstack {

void sgd_step(const std::vector<Parameter*>& params, double lr, double momentum,
              double weight_decay) {
  for (const Parameter* p : params) {
    if (!p->grad.all_finite()) {
      throw NumericError("sgd_step: non-finite gradient in parameter '" + p->id + "'");
    }
  }
  for (Parameter* p : params) {
    int64_t n = p->value.numel();
    for (int64_t i = 0; i < n; ++i) {
      double v = momentum * p->momentum[i] + p->grad[i] + weight_decay * p->value[i];
      p->momentum[i] = v;
      p->value[i] -= lr * v;
      p->grad[i] = 0.0;
    }
  }
}

void zero_grads(const std::vector<Parameter*>& params) {
  for (Parameter* p : params) p->grad.fill(0.0);
}

std::vector<Tensor> snapshot_values(const std::vector<Parameter*>& params) {
  std::vector<Tensor> snap;
  snap.reserve(params.size());
  for (const Parameter* p : params) snap.push_back(p->value);
  return snap;
}

void restore_values(const std::vector<Parameter*>& params, const std::vector<Tensor>& snap) {
  if (snap.size() != params.size()) {
    throw StateError("restore_values: snapshot size does not match parameter list");
  }
  for (size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i]->value, snap[i], "restore_values");
    params[i]->value = snap[i];
  }
}

}  // namespace brainstack
