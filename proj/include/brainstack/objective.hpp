// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "brainstack/errors.hpp"

namespace brainstack {

// Epoch- and loss-dependent weighting of the four loss components.
struct ScheduleConfig {
  int t_warmup = 5;
  int t_transition = 20;
  double lambda_min = 0.2;
  double lambda_max = 1.0;
  double alpha_max = 0.8;
  double beta_max = 0.5;
  double gamma_max = 0.5;
  double max_loss_estimate = 0.0;  // resolved to ln(K) by the harness when <= 0
  double temperature = 4.0;

  void validate() const;
};

struct ScheduledWeights {
  double lambda = 0.0;  // fused
  double alpha = 0.0;   // global
  double beta = 0.0;    // local
  double gamma = 0.0;   // distill
};

struct LossBreakdown {
  double fused = 0.0;
  double global_ce = 0.0;
  double local = 0.0;
  double distill = 0.0;
  double total = 0.0;
};

// -log softmax(logits)[label], log-sum-exp stable.
double cross_entropy(const std::vector<double>& logits, int label);

// Sum over regional heads of KL(softmax(global/T) || softmax(regional/T)).
// Numeric form; the graph counterpart keeps the teacher constant.
double distill_loss(const std::vector<double>& global_logits,
                    const std::vector<std::vector<double>>& regional_logits, double temperature);

// clamp((epoch - t_warmup) / t_transition, 0, 1).
double progress(int epoch, int t_warmup, int t_transition);

// (1-P) * lambda_min + P * lambda_max.
double fused_weight(double P, double lambda_min, double lambda_max);

// x_max * P * (1 - min(fused_loss / max_loss_estimate, 1)).
double aux_weight(double x_max, double P, double fused_loss, double max_loss_estimate);

// Warm-up epochs (epoch < t_warmup) train the global expert only:
// (lambda, alpha, beta, gamma) = (0, alpha_max, 0, 0). Afterwards, with
// P = progress(epoch) and gate = 1 - min(fused_loss/max_loss_estimate, 1):
//   lambda = fused_weight(P)
//   alpha  = alpha_max * (1-P) * gate   (decays toward 0 as P -> 1)
//   beta   = beta_max * P * gate
//   gamma  = gamma_max * P * gate * P   (extra progress factor)
ScheduledWeights schedule_weights(int epoch, double fused_loss, const ScheduleConfig& cfg);

LossBreakdown total_loss(double fused, double global_ce, double local, double distill,
                         const ScheduledWeights& w);

}  // namespace brainstack
