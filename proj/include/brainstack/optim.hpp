// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "brainstack/graph.hpp"

namespace brainstack {

// One SGD update with classic momentum and decoupled-from-nothing L2 decay:
//   v <- momentum * v + grad + weight_decay * value
//   value <- value - lr * v
// Gradients are zeroed after a successful step. A non-finite gradient aborts
// the whole step before any parameter is touched.
void sgd_step(const std::vector<Parameter*>& params, double lr, double momentum,
              double weight_decay);

void zero_grads(const std::vector<Parameter*>& params);

std::vector<Tensor> snapshot_values(const std::vector<Parameter*>& params);
void restore_values(const std::vector<Parameter*>& params, const std::vector<Tensor>& snap);

}  // namespace brainstack
