// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "brainstack/graph.hpp"

namespace brainstack {

// Central-difference gradient of a scalar-valued function of the given
// parameters: g_i = (f(theta_i + eps) - f(theta_i - eps)) / (2 eps), one
// entry at a time, all arithmetic in 64-bit. loss_fn must be deterministic;
// this is verified by evaluating it twice up front.
std::vector<Tensor> finite_difference_gradient(const std::function<double()>& loss_fn,
                                               const std::vector<Parameter*>& params,
                                               double eps = 1e-3);

// max over entries of |a-b| / max(1, |a|, |b|).
double max_rel_err(const Tensor& a, const Tensor& b);

// Convenience: max_rel_err between each parameter's accumulated grad and the
// matching oracle tensor, reduced over the whole list.
double max_rel_err(const std::vector<Parameter*>& params, const std::vector<Tensor>& oracle);

}  // namespace brainstack
