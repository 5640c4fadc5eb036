// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "brainstack/data.hpp"
#include "brainstack/metrics.hpp"
#include "brainstack/model.hpp"
#include "brainstack/objective.hpp"

namespace brainstack {

struct TrainConfig {
  double lr = 5e-3;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch_size = 32;
  int max_epochs = 100;
  int patience = 5;
  uint64_t seed = 0;
  ScheduleConfig schedule;
  Variant variant = Variant::kFull;

  void validate() const;
};

// Variant overrides on top of a base schedule: no_warmup and local_only drop
// the warm-up phase; no_distill and single-family ensembles zero the weights
// of loss terms whose inputs do not exist.
ScheduleConfig variant_schedule(const ScheduleConfig& base, Variant v);

struct EpochRow {
  int epoch = 0;
  double P = 0.0;
  // Epoch means of the per-batch applied weights.
  double lambda = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  // Epoch means of the unweighted components and the weighted total.
  double fused = 0.0;
  double global_ce = 0.0;
  double local = 0.0;
  double distill = 0.0;
  double total = 0.0;
  double val_acc = 0.0;
};

struct TrainResult {
  std::vector<EpochRow> history;
  int best_epoch = -1;
  double best_val_acc = 0.0;
  int epochs_run = 0;
};

// Minibatch SGD with the scheduled multi-objective loss. On return the model
// holds the parameters (and batch-norm statistics) of the best-validation
// epoch. Stops early once `patience` epochs pass without a new best.
TrainResult train_model(Model& model, const TrialSet& train_set, const TrialSet& val_set,
                        const TrainConfig& tc);

Metrics evaluate_model(Model& model, const TrialSet& test_set);

// Pinned history CSV layout:
// epoch,P,lambda,alpha,beta,gamma,L_fused,L_global,L_local,L_distill,L_total,val_acc
std::string history_csv(const std::vector<EpochRow>& history);
void write_history_csv(const std::string& path, const std::vector<EpochRow>& history);

// Per-trial routing snapshot. Weight column 0 is the global expert; columns
// 1..7 are the regions in canonical order; slots a variant lacks read 0.
struct RouteTrialRow {
  int trial_id = 0;
  std::string subject;
  int label = 0;
  int pred = 0;
  std::array<double, 1 + kNumRegions> alpha{};
};

std::vector<RouteTrialRow> route_rows(Model& model, const TrialSet& ts);

// Pinned routing CSV layout:
// trial_id,subject,label,pred,alpha_global,alpha_prefrontal,alpha_frontal,
// alpha_central,alpha_ltemporal,alpha_rtemporal,alpha_parietal,alpha_occipital
std::string route_rows_csv(const std::vector<RouteTrialRow>& rows);

struct SubjectRouteStats {
  std::string subject;
  int64_t trials = 0;
  double accuracy = 0.0;
  std::array<double, 1 + kNumRegions> mean_alpha{};
};

struct RouteReport {
  std::vector<RouteTrialRow> rows;
  std::vector<SubjectRouteStats> subjects;
  // Pearson r of (per-subject mean weight) against (per-subject accuracy),
  // one entry per expert column.
  std::array<double, 1 + kNumRegions> weight_accuracy_r{};
};

// One trained model plus its held-out trials for one subject.
struct SubjectEval {
  std::string subject;
  Model* model = nullptr;
  const TrialSet* test_set = nullptr;
};

RouteReport route_report(const std::vector<SubjectEval>& subjects);
std::string route_summary_csv(const RouteReport& report);

struct AblationRow {
  Variant variant = Variant::kFull;
  std::vector<uint64_t> seeds;
  double mean_accuracy = 0.0;
  double min_accuracy = 0.0;
  double max_accuracy = 0.0;
};

// Fresh init + train + test evaluation per (variant, seed).
std::vector<AblationRow> run_ablation(const ModelConfig& base_model, const TrainConfig& base_tc,
                                      const SplitSets& splits,
                                      const std::vector<Variant>& variants,
                                      const std::vector<uint64_t>& seeds);
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace brainstack
