// SPDX-License-Identifier: Apache-2.0
#include "brainstack/fdcheck.hpp"

#include <cmath>

#include "brainstack/errors.hpp"

namespace brainstack {

std::vector<Tensor> finite_difference_gradient(const std::function<double()>& loss_fn,
                                               const std::vector<Parameter*>& params,
                                               double eps) {
  if (!(eps > 0.0)) throw ConfigError("finite_difference_gradient: eps must be positive");
  double f0 = loss_fn();
  double f1 = loss_fn();
  if (!(f0 == f1)) {
    throw OracleError("finite_difference_gradient: loss_fn is not deterministic (" +
                      std::to_string(f0) + " vs " + std::to_string(f1) + ")");
  }
  if (!std::isfinite(f0)) {
    throw NumericError("finite_difference_gradient: loss_fn is non-finite at the base point");
  }
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (Parameter* p : params) {
    Tensor g(p->value.shape());
    for (int64_t i = 0; i < p->value.numel(); ++i) {
      double saved = p->value[i];
      p->value[i] = saved + eps;
      double fp = loss_fn();
      p->value[i] = saved - eps;
      double fm = loss_fn();
      p->value[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw NumericError("finite_difference_gradient: non-finite probe at parameter '" +
                           p->id + "'");
      }
      g[i] = (fp - fm) / (2.0 * eps);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

double max_rel_err(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_rel_err");
  double worst = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    double denom = std::max({1.0, std::fabs(a[i]), std::fabs(b[i])});
    worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
  }
  return worst;
}

double max_rel_err(const std::vector<Parameter*>& params, const std::vector<Tensor>& oracle) {
  if (params.size() != oracle.size()) {
    throw StateError("max_rel_err: parameter list and oracle list differ in length");
  }
  double worst = 0.0;
  for (size_t i = 0; i < params.size(); ++i) {
    worst = std::max(worst, max_rel_err(params[i]->grad, oracle[i]));
  }
  return worst;
}

}  // namespace brainstack
