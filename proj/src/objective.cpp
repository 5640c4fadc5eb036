// SPDX-License-Identifier: Apache-2.0
#include "brainstack/objective.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace brainstack {

namespace {

std::vector<double> softened_probs(const std::vector<double>& logits, double temperature) {
  std::vector<double> p(logits.size());
  double m = logits[0] / temperature;
  for (size_t i = 1; i < logits.size(); ++i) m = std::max(m, logits[i] / temperature);
  double z = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] / temperature - m);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

}  // namespace

void ScheduleConfig::validate() const {
  if (t_warmup < 0) throw ConfigError("schedule: t_warmup must be >= 0");
  if (t_transition < 1) throw ConfigError("schedule: t_transition must be >= 1");
  if (!(lambda_min <= lambda_max)) throw ConfigError("schedule: lambda_min must be <= lambda_max");
  if (lambda_min < 0.0 || alpha_max < 0.0 || beta_max < 0.0 || gamma_max < 0.0) {
    throw ConfigError("schedule: loss weights must be nonnegative");
  }
  if (!(temperature > 0.0)) throw ConfigError("schedule: temperature must be positive");
}

double cross_entropy(const std::vector<double>& logits, int label) {
  int64_t k = static_cast<int64_t>(logits.size());
  if (label < 0 || label >= k) {
    throw ShapeError("cross_entropy: label " + std::to_string(label) + " out of range for K=" +
                     std::to_string(k));
  }
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - m);
  return m + std::log(z) - logits[static_cast<size_t>(label)];
}

double distill_loss(const std::vector<double>& global_logits,
                    const std::vector<std::vector<double>>& regional_logits, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("distill_loss: temperature must be positive");
  if (regional_logits.empty()) throw ConfigError("distill_loss: regional logits list is empty");
  std::vector<double> p = softened_probs(global_logits, temperature);
  double total = 0.0;
  for (const std::vector<double>& rl : regional_logits) {
    if (rl.size() != global_logits.size()) {
      throw ShapeError("distill_loss: regional logits length does not match teacher");
    }
    std::vector<double> q = softened_probs(rl, temperature);
    double kl = 0.0;
    for (size_t j = 0; j < p.size(); ++j) {
      if (p[j] > 0.0) kl += p[j] * (std::log(p[j]) - std::log(q[j]));
    }
    total += std::max(kl, 0.0);
  }
  return total;
}

double progress(int epoch, int t_warmup, int t_transition) {
  if (epoch < 0) throw ConfigError("progress: epoch must be >= 0");
  if (t_transition < 1) throw ConfigError("progress: t_transition must be >= 1");
  double p = static_cast<double>(epoch - t_warmup) / static_cast<double>(t_transition);
  return std::clamp(p, 0.0, 1.0);
}

double fused_weight(double P, double lambda_min, double lambda_max) {
  return (1.0 - P) * lambda_min + P * lambda_max;
}

double aux_weight(double x_max, double P, double fused_loss, double max_loss_estimate) {
  if (!(max_loss_estimate > 0.0)) {
    throw ConfigError("aux_weight: max_loss_estimate must be positive");
  }
  double gate = 1.0 - std::min(fused_loss / max_loss_estimate, 1.0);
  return x_max * P * gate;
}

ScheduledWeights schedule_weights(int epoch, double fused_loss, const ScheduleConfig& cfg) {
  cfg.validate();
  if (!(cfg.max_loss_estimate > 0.0)) {
    throw ConfigError("schedule_weights: max_loss_estimate must be resolved to a positive value");
  }
  ScheduledWeights w;
  if (epoch < cfg.t_warmup) {
    w.lambda = 0.0;
    w.alpha = cfg.alpha_max;
    w.beta = 0.0;
    w.gamma = 0.0;
    return w;
  }
  double P = progress(epoch, cfg.t_warmup, cfg.t_transition);
  double gate = 1.0 - std::min(fused_loss / cfg.max_loss_estimate, 1.0);
  w.lambda = fused_weight(P, cfg.lambda_min, cfg.lambda_max);
  w.alpha = cfg.alpha_max * (1.0 - P) * gate;
  w.beta = aux_weight(cfg.beta_max, P, fused_loss, cfg.max_loss_estimate);
  w.gamma = aux_weight(cfg.gamma_max, P, fused_loss, cfg.max_loss_estimate) * P;
  return w;
}

LossBreakdown total_loss(double fused, double global_ce, double local, double distill,
                         const ScheduledWeights& w) {
  if (fused < 0.0 || global_ce < 0.0 || local < 0.0 || distill < 0.0) {
    throw NumericError("total_loss: loss components must be nonnegative");
  }
  LossBreakdown b;
  b.fused = fused;
  b.global_ce = global_ce;
  b.local = local;
  b.distill = distill;
  b.total = w.lambda * fused + w.alpha * global_ce + w.beta * local + w.gamma * distill;
  return b;
}

}  // namespace brainstack
