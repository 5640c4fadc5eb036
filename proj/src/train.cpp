// SPDX-License-Identifier: Apache-2.0
#include "brainstack/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "brainstack/optim.hpp"
#include "brainstack/rng.hpp"

namespace brainstack {

namespace {

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

void check_compat(const Model& model, const TrialSet& ts, const char* what) {
  const ModelConfig& mc = model.config();
  if (ts.size() == 0) throw ConfigError(std::string(what) + " split is empty");
  if (ts.C != mc.montage.montage.channel_count()) {
    throw ConfigError(std::string(what) + " split has " + std::to_string(ts.C) +
                      " channels, model expects " +
                      std::to_string(mc.montage.montage.channel_count()));
  }
  if (ts.T != mc.cnet.time_len) {
    throw ConfigError(std::string(what) + " split has T=" + std::to_string(ts.T) +
                      ", model expects " + std::to_string(mc.cnet.time_len));
  }
  if (ts.K != mc.cnet.num_classes) {
    throw ConfigError(std::string(what) + " split has K=" + std::to_string(ts.K) +
                      ", model expects " + std::to_string(mc.cnet.num_classes));
  }
}

// Z-scores each listed trial and packs it into one (B,1,C,T) slab.
Tensor make_batch(const TrialSet& ts, const std::vector<int64_t>& order, int64_t from, int64_t to,
                  std::vector<int>* labels) {
  const int64_t B = to - from;
  const int64_t C = ts.C;
  const int64_t T = ts.T;
  Tensor batch({B, 1, C, T});
  labels->clear();
  labels->reserve(static_cast<size_t>(B));
  for (int64_t i = from; i < to; ++i) {
    const Trial& t = ts.trials[static_cast<size_t>(order[static_cast<size_t>(i)])];
    Trial z = zscore_normalize(t);
    std::copy(z.x.data(), z.x.data() + C * T, batch.data() + (i - from) * C * T);
    labels->push_back(t.label);
  }
  return batch;
}

std::vector<Tensor> snapshot_buffers(const std::vector<std::pair<std::string, Tensor*>>& bufs) {
  std::vector<Tensor> out;
  out.reserve(bufs.size());
  for (const auto& b : bufs) out.push_back(*b.second);
  return out;
}

void restore_buffers(const std::vector<std::pair<std::string, Tensor*>>& bufs,
                     const std::vector<Tensor>& snap) {
  for (size_t i = 0; i < bufs.size(); ++i) *bufs[i].second = snap[i];
}

// Column in the 8-wide weight layout for a slot: 0 global, 1.. regions.
size_t slot_column(const ExpertSlot& slot) {
  if (slot.is_global) return 0;
  return 1 + static_cast<size_t>(static_cast<int>(slot.region));
}

}  // namespace

void TrainConfig::validate() const {
  std::string bad;
  auto check = [&bad](bool ok, const char* what) {
    if (!ok) {
      if (!bad.empty()) bad += "; ";
      bad += what;
    }
  };
  check(lr > 0.0, "lr must be > 0");
  check(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0,1)");
  check(weight_decay >= 0.0, "weight_decay must be >= 0");
  check(batch_size >= 1, "batch_size must be >= 1");
  check(max_epochs >= 1, "max_epochs must be >= 1");
  check(patience >= 1, "patience must be >= 1");
  if (!bad.empty()) throw ConfigError("train config: " + bad);
  schedule.validate();
}

ScheduleConfig variant_schedule(const ScheduleConfig& base, Variant v) {
  ScheduleConfig s = base;
  switch (v) {
    case Variant::kFull:
    case Variant::kHomogeneousCNet:
    case Variant::kHomogeneousCTNet:
      break;
    case Variant::kLocalOnly:
      // No global expert: nothing to warm up, no global loss, no teacher.
      s.t_warmup = 0;
      s.alpha_max = 0.0;
      s.gamma_max = 0.0;
      break;
    case Variant::kGlobalOnly:
      // No regional experts: no local loss, no students to distill into.
      s.beta_max = 0.0;
      s.gamma_max = 0.0;
      break;
    case Variant::kNoDistill:
      s.gamma_max = 0.0;
      break;
    case Variant::kNoWarmup:
      s.t_warmup = 0;
      break;
  }
  return s;
}

TrainResult train_model(Model& model, const TrialSet& train_set, const TrialSet& val_set,
                        const TrainConfig& tc) {
  tc.validate();
  if (model.config().variant != tc.variant) {
    throw ConfigError(std::string("train config names variant ") + variant_name(tc.variant) +
                      " but the model was built as " + variant_name(model.config().variant));
  }
  check_compat(model, train_set, "train");
  check_compat(model, val_set, "validation");

  ScheduleConfig sched = variant_schedule(tc.schedule, tc.variant);
  if (sched.max_loss_estimate <= 0.0) {
    sched.max_loss_estimate = std::log(static_cast<double>(model.num_classes()));
  }
  sched.validate();

  std::vector<Parameter*> all_params = model.parameters();
  std::vector<Parameter*> global_params = model.global_parameters();
  std::vector<std::pair<std::string, Tensor*>> bufs = model.buffers();

  TrainResult res;
  std::vector<Tensor> best_params = snapshot_values(all_params);
  std::vector<Tensor> best_bufs = snapshot_buffers(bufs);

  const int64_t N = train_set.size();
  int last_improve = 0;
  Rng epoch_root = Rng(tc.seed).split("epoch");

  for (int epoch = 0; epoch < tc.max_epochs; ++epoch) {
    const bool warm = epoch < sched.t_warmup;
    Rng er = epoch_root.split(static_cast<uint64_t>(epoch));
    std::vector<int64_t> order(static_cast<size_t>(N));
    std::iota(order.begin(), order.end(), 0);
    er.shuffle(order);
    Rng batch_root = er.split("batch");

    const int64_t num_batches = (N + tc.batch_size - 1) / tc.batch_size;
    EpochRow row;
    row.epoch = epoch;
    row.P = progress(epoch, sched.t_warmup, sched.t_transition);

    for (int64_t b = 0; b < num_batches; ++b) {
      try {
        const int64_t from = b * tc.batch_size;
        const int64_t to = std::min<int64_t>(N, from + tc.batch_size);
        Rng br = batch_root.split(static_cast<uint64_t>(b));
        const uint64_t graph_seed = br.next_u64();

        std::vector<int> labels;
        Tensor batch = make_batch(train_set, order, from, to, &labels);

        Graph g(Mode::kTrain, graph_seed);
        BatchNodes bn = model.forward(g, batch);

        NodeId fused = g.cross_entropy(bn.router.logits, labels);
        const double fused_v = g.value(fused)[0];
        ScheduledWeights w = schedule_weights(epoch, fused_v, sched);

        NodeId global_ce = kNoNode;
        double global_v = 0.0;
        if (bn.global_logits != kNoNode) {
          global_ce = g.cross_entropy(bn.global_logits, labels);
          global_v = g.value(global_ce)[0];
        }
        NodeId local = kNoNode;
        double local_v = 0.0;
        if (!bn.regional_logits.empty()) {
          for (NodeId lg : bn.regional_logits) {
            NodeId ce = g.cross_entropy(lg, labels);
            local = local == kNoNode ? ce : g.add(local, ce);
          }
          local = g.scale(local, 1.0 / static_cast<double>(bn.regional_logits.size()));
          local_v = g.value(local)[0];
        }
        NodeId distill = kNoNode;
        double distill_v = 0.0;
        if (bn.global_logits != kNoNode && !bn.regional_logits.empty()) {
          for (NodeId lg : bn.regional_logits) {
            NodeId kl = g.kl_softened(lg, bn.global_logits, sched.temperature);
            distill = distill == kNoNode ? kl : g.add(distill, kl);
          }
          distill_v = g.value(distill)[0];
        }

        NodeId total = kNoNode;
        auto add_term = [&](NodeId term, double weight) {
          if (term == kNoNode || weight == 0.0) return;
          NodeId scaled = g.scale(term, weight);
          total = total == kNoNode ? scaled : g.add(total, scaled);
        };
        add_term(fused, w.lambda);
        add_term(global_ce, w.alpha);
        add_term(local, w.beta);
        add_term(distill, w.gamma);
        if (total == kNoNode) total = g.scale(fused, 0.0);

        g.backward(total);
        sgd_step(warm ? global_params : all_params, tc.lr, tc.momentum, tc.weight_decay);
        zero_grads(all_params);

        row.lambda += w.lambda;
        row.alpha += w.alpha;
        row.beta += w.beta;
        row.gamma += w.gamma;
        row.fused += fused_v;
        row.global_ce += global_v;
        row.local += local_v;
        row.distill += distill_v;
        row.total += total_loss(fused_v, global_v, local_v, distill_v, w).total;
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + " batch " + std::to_string(b) +
                           ": " + e.what());
      }
    }

    const double inv = 1.0 / static_cast<double>(num_batches);
    row.lambda *= inv;
    row.alpha *= inv;
    row.beta *= inv;
    row.gamma *= inv;
    row.fused *= inv;
    row.global_ce *= inv;
    row.local *= inv;
    row.distill *= inv;
    row.total *= inv;
    row.val_acc = evaluate_model(model, val_set).accuracy;
    res.history.push_back(row);

    // Strict improvement resets patience and snapshots the parameters, so the
    // returned model is the first epoch that attained the best accuracy.
    if (res.best_epoch < 0 || row.val_acc > res.best_val_acc) {
      last_improve = epoch;
      res.best_epoch = epoch;
      res.best_val_acc = row.val_acc;
      best_params = snapshot_values(all_params);
      best_bufs = snapshot_buffers(bufs);
    }
    if (epoch - last_improve >= tc.patience) break;
  }

  res.epochs_run = static_cast<int>(res.history.size());
  restore_values(all_params, best_params);
  restore_buffers(bufs, best_bufs);
  return res;
}

Metrics evaluate_model(Model& model, const TrialSet& test_set) {
  check_compat(model, test_set, "evaluation");
  const int64_t N = test_set.size();
  const int64_t kEvalBatch = 64;
  std::vector<int64_t> order(static_cast<size_t>(N));
  std::iota(order.begin(), order.end(), 0);

  std::vector<int> labels_all;
  std::vector<int> preds_all;
  labels_all.reserve(static_cast<size_t>(N));
  preds_all.reserve(static_cast<size_t>(N));
  const int K = model.num_classes();

  for (int64_t from = 0; from < N; from += kEvalBatch) {
    const int64_t to = std::min(N, from + kEvalBatch);
    std::vector<int> labels;
    Tensor batch = make_batch(test_set, order, from, to, &labels);
    Graph g(Mode::kEval, 0);
    BatchNodes bn = model.forward(g, batch);
    const Tensor& logits = g.value(bn.router.logits);
    for (int64_t r = 0; r < to - from; ++r) {
      std::vector<double> rowv(static_cast<size_t>(K));
      for (int k = 0; k < K; ++k) rowv[static_cast<size_t>(k)] = logits[r * K + k];
      preds_all.push_back(argmax_index(rowv));
    }
    labels_all.insert(labels_all.end(), labels.begin(), labels.end());
  }
  return compute_metrics(labels_all, preds_all, K);
}

std::string history_csv(const std::vector<EpochRow>& history) {
  std::string out =
      "epoch,P,lambda,alpha,beta,gamma,L_fused,L_global,L_local,L_distill,L_total,val_acc\n";
  for (const EpochRow& r : history) {
    out += std::to_string(r.epoch);
    for (double v : {r.P, r.lambda, r.alpha, r.beta, r.gamma, r.fused, r.global_ce, r.local,
                     r.distill, r.total, r.val_acc}) {
      out += ",";
      out += fmt_g(v);
    }
    out += "\n";
  }
  return out;
}

void write_history_csv(const std::string& path, const std::vector<EpochRow>& history) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open '" + path + "' for writing");
  const std::string body = history_csv(history);
  f.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!f) throw FormatError("failed writing '" + path + "'");
}

std::vector<RouteTrialRow> route_rows(Model& model, const TrialSet& ts) {
  check_compat(model, ts, "routing");
  const int64_t N = ts.size();
  const int64_t kEvalBatch = 64;
  std::vector<int64_t> order(static_cast<size_t>(N));
  std::iota(order.begin(), order.end(), 0);
  const int K = model.num_classes();
  const size_t E = model.slots().size();

  std::vector<RouteTrialRow> rows;
  rows.reserve(static_cast<size_t>(N));
  for (int64_t from = 0; from < N; from += kEvalBatch) {
    const int64_t to = std::min(N, from + kEvalBatch);
    std::vector<int> labels;
    Tensor batch = make_batch(ts, order, from, to, &labels);
    Graph g(Mode::kEval, 0);
    BatchNodes bn = model.forward(g, batch);
    const Tensor& logits = g.value(bn.router.logits);
    const Tensor& weights = g.value(bn.router.weights);
    for (int64_t r = 0; r < to - from; ++r) {
      const Trial& t = ts.trials[static_cast<size_t>(from + r)];
      RouteTrialRow row;
      row.trial_id = t.trial_id;
      row.subject = t.subject_id;
      row.label = t.label;
      std::vector<double> rowv(static_cast<size_t>(K));
      for (int k = 0; k < K; ++k) rowv[static_cast<size_t>(k)] = logits[r * K + k];
      row.pred = argmax_index(rowv);
      row.alpha.fill(0.0);
      for (size_t e = 0; e < E; ++e) {
        row.alpha[slot_column(model.slots()[e])] =
            weights[r * static_cast<int64_t>(E) + static_cast<int64_t>(e)];
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string route_rows_csv(const std::vector<RouteTrialRow>& rows) {
  std::string out =
      "trial_id,subject,label,pred,alpha_global,alpha_prefrontal,alpha_frontal,alpha_central,"
      "alpha_ltemporal,alpha_rtemporal,alpha_parietal,alpha_occipital\n";
  for (const RouteTrialRow& r : rows) {
    out += std::to_string(r.trial_id);
    out += "," + r.subject;
    out += "," + std::to_string(r.label);
    out += "," + std::to_string(r.pred);
    for (double a : r.alpha) {
      out += ",";
      out += fmt_g(a);
    }
    out += "\n";
  }
  return out;
}

RouteReport route_report(const std::vector<SubjectEval>& subjects) {
  if (subjects.size() < 2) {
    throw ConfigError("routing correlation needs at least 2 subjects, got " +
                      std::to_string(subjects.size()));
  }
  RouteReport rep;
  std::vector<double> acc_series;
  std::vector<std::array<double, 1 + kNumRegions>> alpha_series;
  for (const SubjectEval& s : subjects) {
    if (s.model == nullptr || s.test_set == nullptr) {
      throw ConfigError("subject '" + s.subject + "' is missing a model or a trial set");
    }
    std::vector<RouteTrialRow> rows = route_rows(*s.model, *s.test_set);
    SubjectRouteStats st;
    st.subject = s.subject;
    st.trials = static_cast<int64_t>(rows.size());
    st.mean_alpha.fill(0.0);
    int64_t correct = 0;
    for (const RouteTrialRow& r : rows) {
      if (r.pred == r.label) ++correct;
      for (size_t c = 0; c < st.mean_alpha.size(); ++c) st.mean_alpha[c] += r.alpha[c];
    }
    for (double& v : st.mean_alpha) v /= static_cast<double>(st.trials);
    st.accuracy = static_cast<double>(correct) / static_cast<double>(st.trials);
    acc_series.push_back(st.accuracy);
    alpha_series.push_back(st.mean_alpha);
    rep.subjects.push_back(st);
    rep.rows.insert(rep.rows.end(), rows.begin(), rows.end());
  }
  for (size_t c = 0; c < rep.weight_accuracy_r.size(); ++c) {
    std::vector<double> xs;
    xs.reserve(alpha_series.size());
    for (const auto& a : alpha_series) xs.push_back(a[c]);
    rep.weight_accuracy_r[c] = pearson_r(xs, acc_series);
  }
  return rep;
}

std::string route_summary_csv(const RouteReport& report) {
  std::vector<std::string> cols = {"global"};
  for (int r = 0; r < kNumRegions; ++r) cols.push_back(region_column(static_cast<Region>(r)));

  std::string out = "section,key,value\n";
  for (const SubjectRouteStats& s : report.subjects) {
    out += "subject:" + s.subject + ",trials," + std::to_string(s.trials) + "\n";
    out += "subject:" + s.subject + ",accuracy," + fmt_g(s.accuracy) + "\n";
    for (size_t c = 0; c < cols.size(); ++c) {
      out += "subject:" + s.subject + ",mean_alpha_" + cols[c] + "," + fmt_g(s.mean_alpha[c]) +
             "\n";
    }
  }
  for (size_t c = 0; c < cols.size(); ++c) {
    out += "correlation,r_" + cols[c] + "," + fmt_g(report.weight_accuracy_r[c]) + "\n";
  }
  return out;
}

std::vector<AblationRow> run_ablation(const ModelConfig& base_model, const TrainConfig& base_tc,
                                      const SplitSets& splits,
                                      const std::vector<Variant>& variants,
                                      const std::vector<uint64_t>& seeds) {
  if (variants.empty()) throw ConfigError("ablation needs at least one variant");
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");

  std::vector<AblationRow> out;
  for (Variant v : variants) {
    AblationRow row;
    row.variant = v;
    row.seeds = seeds;
    double sum = 0.0;
    double lo = 1.0;
    double hi = 0.0;
    for (uint64_t seed : seeds) {
      ModelConfig mc = base_model;
      mc.variant = v;
      mc.init_seed = seed;
      TrainConfig tc = base_tc;
      tc.variant = v;
      tc.seed = seed;
      Model model(mc);
      train_model(model, splits.train, splits.val, tc);
      double acc = evaluate_model(model, splits.test).accuracy;
      sum += acc;
      lo = std::min(lo, acc);
      hi = std::max(hi, acc);
    }
    row.mean_accuracy = sum / static_cast<double>(seeds.size());
    row.min_accuracy = lo;
    row.max_accuracy = hi;
    out.push_back(std::move(row));
  }
  return out;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "variant,seeds,mean_accuracy,min_accuracy,max_accuracy\n";
  for (const AblationRow& r : rows) {
    out += variant_name(r.variant);
    out += ",";
    for (size_t i = 0; i < r.seeds.size(); ++i) {
      if (i) out += " ";
      out += std::to_string(r.seeds[i]);
    }
    out += ",";
    out += fmt_g(r.mean_accuracy);
    out += ",";
    out += fmt_g(r.min_accuracy);
    out += ",";
    out += fmt_g(r.max_accuracy);
    out += "\n";
  }
  return out;
}

}  // namespace brainstack
