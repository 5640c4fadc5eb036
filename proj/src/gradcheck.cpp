// SPDX-License-Identifier: Apache-2.0
#include "brainstack/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <utility>

#include "brainstack/errors.hpp"
#include "brainstack/experts.hpp"
#include "brainstack/fdcheck.hpp"
#include "brainstack/graph.hpp"
#include "brainstack/optim.hpp"
#include "brainstack/rng.hpp"
#include "brainstack/router.hpp"

namespace brainstack {

namespace {

// An elu site in build order, paired with the additive per-channel parameter
// whose entries shift that elu's inputs one-for-one.
struct KinkShift {
  int elu_index;
  Parameter* bias;
};

// One randomized instance of a check: owned leaves plus a builder that
// reconstructs the identical graph from the current parameter values.
struct Case {
  std::vector<std::unique_ptr<Parameter>> owned;
  std::vector<std::unique_ptr<BatchNormState>> states;
  std::unique_ptr<Expert> expert;
  std::unique_ptr<RouterParams> router;
  std::vector<Parameter*> params;
  std::vector<KinkShift> kink_shifts;
  std::function<NodeId(Graph&)> build;
  Mode mode = Mode::kTrain;
  uint64_t graph_seed = 0;
};

Tensor rand_tensor(Rng& rng, std::vector<int64_t> shape, double lo, double hi) {
  Tensor t(std::move(shape));
  for (size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Magnitudes bounded away from zero, for ops with a kink at the origin.
Tensor rand_signed_tensor(Rng& rng, std::vector<int64_t> shape) {
  Tensor t(std::move(shape));
  for (size_t i = 0; i < t.numel(); ++i) {
    double m = rng.uniform(0.2, 1.5);
    t[i] = rng.uniform(0.0, 1.0) < 0.5 ? -m : m;
  }
  return t;
}

Parameter* add_param(Case& c, const std::string& name, Tensor init) {
  c.owned.push_back(std::make_unique<Parameter>(name, std::move(init)));
  Parameter* p = c.owned.back().get();
  c.params.push_back(p);
  return p;
}

std::vector<int> rand_labels(Rng& rng, int n, int num_classes) {
  std::vector<int> labels(static_cast<size_t>(n));
  for (auto& l : labels) l = static_cast<int>(rng.below(static_cast<uint64_t>(num_classes)));
  return labels;
}

NodeId sq_mean(Graph& g, NodeId x) { return g.mean_all(g.mul(x, x)); }

Parameter* param_by_suffix(const std::vector<Parameter*>& params, const std::string& suffix) {
  for (Parameter* p : params) {
    if (p->id.size() >= suffix.size() &&
        p->id.compare(p->id.size() - suffix.size(), suffix.size(), suffix) == 0)
      return p;
  }
  throw Error("gradcheck: no parameter ending in '" + suffix + "'");
}

// Offset in [-bound, bound] maximizing the smallest |v + offset| over the
// channel's values. The objective is piecewise linear in the offset, so gap
// midpoints plus the interval ends cover every local maximum.
double centering_offset(std::vector<double> vals, double bound) {
  std::sort(vals.begin(), vals.end());
  std::vector<double> cands{-bound, bound};
  for (size_t i = 0; i + 1 < vals.size(); ++i)
    cands.push_back(std::clamp(-0.5 * (vals[i] + vals[i + 1]), -bound, bound));
  double best = 0.0;
  double best_margin = -1.0;
  for (double d : cands) {
    double m = std::numeric_limits<double>::infinity();
    for (double v : vals) m = std::min(m, std::abs(v + d));
    if (m > best_margin) {
      best_margin = m;
      best = d;
    }
  }
  return best;
}

// elu is continuous with a curvature break at 0, so a central difference
// whose probe pushes an input across 0 picks up an O(eps) truncation term
// that exact adjoints do not have. Each listed elu is fed through an
// additive per-channel parameter; re-centering that parameter into the
// widest gap of the channel's observed inputs keeps every input clear of
// the break under +-eps probes, where the oracle is trustworthy. Sites are
// conditioned in forward order because a shift moves downstream inputs.
void condition_kinks(Case& c) {
  for (const KinkShift& ks : c.kink_shifts) {
    Graph g(c.mode, c.graph_seed);
    g.record_elu_inputs(true);
    c.build(g);
    const Tensor& z = g.elu_inputs().at(static_cast<size_t>(ks.elu_index));
    Parameter* b = ks.bias;
    const int64_t channels = b->value.numel();
    if (z.rank() < 2 || z.dim(1) != channels)
      throw Error("gradcheck: kink conditioner expects channels on axis 1 of " + z.shape_str());
    const int64_t outer = z.dim(0);
    const int64_t inner = z.numel() / (outer * channels);
    for (int64_t ch = 0; ch < channels; ++ch) {
      std::vector<double> vals;
      vals.reserve(static_cast<size_t>(outer * inner));
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i < inner; ++i) vals.push_back(z[(o * channels + ch) * inner + i]);
      b->value[ch] += centering_offset(std::move(vals), 0.6);
    }
  }
}

using CaseMaker = std::function<Case(uint64_t)>;

GradCheckResult run_over_seeds(const std::string& name, int seeds, double tol, double eps,
                               const CaseMaker& make) {
  double worst = 0.0;
  for (int s = 0; s < seeds; ++s) {
    Case c = make(static_cast<uint64_t>(s));
    condition_kinks(c);
    Graph g(c.mode, c.graph_seed);
    NodeId out = c.build(g);
    g.backward(out);
    auto oracle = finite_difference_gradient(
        [&] {
          Graph g2(c.mode, c.graph_seed);
          return g2.value(c.build(g2))[0];
        },
        c.params, eps);
    worst = std::max(worst, max_rel_err(c.params, oracle));
  }
  return {name, worst, worst < tol};
}

std::vector<std::pair<std::string, CaseMaker>> primitive_cases() {
  std::vector<std::pair<std::string, CaseMaker>> cases;
  auto add_case = [&cases](const std::string& name, CaseMaker m) {
    cases.emplace_back(name, std::move(m));
  };

  add_case("add", [](uint64_t seed) {
    Case c;
    Rng rng(seed);
    Parameter* a = add_param(c, "a", rand_tensor(rng, {2, 3}, -1, 1));
    Parameter* b = add_param(c, "b", rand_tensor(rng, {2, 3}, -1, 1));
    c.build = [a, b](Graph& g) { return sq_mean(g, g.add(g.param(*a), g.param(*b))); };
    return c;
  });
  add_case("sub", [](uint64_t seed) {
    Case c;
    Rng rng(seed + 100);
    Parameter* a = add_param(c, "a", rand_tensor(rng, {2, 3}, -1, 1));
    Parameter* b = add_param(c, "b", rand_tensor(rng, {2, 3}, -1, 1));
    c.build = [a, b](Graph& g) { return sq_mean(g, g.sub(g.param(*a), g.param(*b))); };
    return c;
  });
  add_case("mul", [](uint64_t seed) {
    Case c;
    Rng rng(seed + 200);
    Parameter* a = add_param(c, "a", rand_tensor(rng, {2, 3}, -1, 1));
    Parameter* b = add_param(c, "b", rand_tensor(rng, {2, 3}, -1, 1));
    c.build = [a, b](Graph& g) { return sq_mean(g, g.mul(g.param(*a), g.param(*b))); };
    return c;
  });
  add_case("scale", [](uint64_t seed) {
    Case c;
    Rng rng(seed + 300);
    Parameter* a = add_param(c, "a", rand_tensor(rng, {2, 3}, -1, 1));
    c.build = [a](Graph& g) { return sq_mean(g, g.scale(g.param(*a), 1.7)); };
    return c;
  });
  add_case("matmul", [](uint64_t seed) {
    Case c;
    Rng rng(seed + 400);
    Parameter* a = add_param(c, "a", rand_tensor(rng, {2, 3}, -1, 1));
    Parameter* b = add_param(c, "b", rand_tensor(rng, {3, 4}, -1, 1));
    c.build = [a, b](Graph& g) { return sq_mean(g, g.matmul(g.param(*a), g.param(*b))); };
    return c;
  });
  add_case("linear", [](uint64_t seed) {
    Case c;
    Rng rng(seed + 500);
    Parameter* x = add_param(c, "x", rand_tensor(rng, {2, 3}, -1, 1));
    Parameter* w = add_param(c, "w", rand_tensor(rng, {3, 4}, -1, 1));
    Parameter* b = add_param(c, "b", rand_tensor(rng, {4}, -1, 1));
    c.build = [x, w, b](Graph& g) {
      return sq_mean(g, g.linear(g.param(*x), g.param(*w), g.param(*b)));
    };
    return c;
  });
  add_case("conv2d_grouped", [](uint64_t seed) {
    Case c;
    Rng rng(seed + 600);
    Parameter* x = add_param(c, "x", rand_tensor(rng, {2, 4, 3, 6}, -1, 1));
    Parameter* w = add_param(c, "w", rand_tensor(rng, {6, 2, 2, 3}, -1, 1));
    Parameter* b = add_param(c, "b", rand_tensor(rng, {6}, -1, 1));
    c.build = [x, w, b](Graph& g) {
      Conv2dSpec spec;
      spec.groups = 2;
      spec.pad_h = 1;
      spec.pad_w_lo = 1;
      spec.pad_w_hi = 2;
      return sq_mean(g, g.conv2d(g.param(*x), g.param(*w), g.param(*b), spec));
    };
    return c;
  });
  add_case("conv2d_depthwise", [](uint64_t seed) {
    Case c;
    Rng rng(seed + 700);
    Parameter* x = add_param(c, "x", rand_tensor(rng, {2, 3, 4, 5}, -1, 1));
    Parameter* w = add_param(c, "w", rand_tensor(rng, {6, 1, 4, 1}, -1, 1));
    c.build = [x, w](Graph& g) {
      Conv2dSpec spec;
      spec.groups = 3;
      return sq_mean(g, g.conv2d(g.param(*x), g.param(*w), kNoNode, spec));
    };
    return c;
  });
  add_case("conv2d_pointwise", [](uint64_t seed) {
    Case c;
    Rng rng(seed + 800);
    Parameter* x = add_param(c, "x", rand_tensor(rng, {2, 3, 4, 5}, -1, 1));
    Parameter* w = add_param(c, "w", rand_tensor(rng, {2, 3, 1, 1}, -1, 1));
    Parameter* b = add_param(c, "b", rand_tensor(rng, {2}, -1, 1));
    c.build = [x, w, b](Graph& g) {
      return sq_mean(g, g.conv2d(g.param(*x), g.param(*w), g.param(*b), Conv2dSpec{}));
    };
    return c;
  });
  add_case("batch_norm_train", [](uint64_t seed) {
    Case c;
    Rng rng(seed + 900);
    Parameter* x = add_param(c, "x", rand_tensor(rng, {3, 2, 2, 4}, -1, 1));
    Parameter* gm = add_param(c, "g", rand_tensor(rng, {2}, 0.5, 1.5));
    Parameter* bt = add_param(c, "b", rand_tensor(rng, {2}, -0.5, 0.5));
    c.states.push_back(std::make_unique<BatchNormState>(2));
    BatchNormState* st = c.states.back().get();
    c.build = [x, gm, bt, st](Graph& g) {
      return sq_mean(g, g.batch_norm(g.param(*x), g.param(*gm), g.param(*bt), *st));
    };
    return c;
  });
  add_case("batch_norm_eval", [](uint64_t seed) {
    Case c;
    Rng rng(seed + 1000);
    c.mode = Mode::kEval;
    Parameter* x = add_param(c, "x", rand_tensor(rng, {3, 2, 2, 4}, -1, 1));
    Parameter* gm = add_param(c, "g", rand_tensor(rng, {2}, 0.5, 1.5));
    Parameter* bt = add_param(c, "b", rand_tensor(rng, {2}, -0.5, 0.5));
    c.states.push_back(std::make_unique<BatchNormState>(2));
    BatchNormState* st = c.states.back().get();
    st->running_mean = rand_tensor(rng, {2}, -1, 1);
    st->running_var = rand_tensor(rng, {2}, 0.5, 1.5);
    c.build = [x, gm, bt, st](Graph& g) {
      return sq_mean(g, g.batch_norm(g.param(*x), g.param(*gm), g.param(*bt), *st));
    };
    return c;
  });
  add_case("layer_norm", [](uint64_t seed) {
    Case c;
    Rng rng(seed + 1100);
    Parameter* x = add_param(c, "x", rand_tensor(rng, {3, 5}, -1, 1));
    Parameter* gm = add_param(c, "g", rand_tensor(rng, {5}, 0.5, 1.5));
    Parameter* bt = add_param(c, "b", rand_tensor(rng, {5}, -0.5, 0.5));
    c.build = [x, gm, bt](Graph& g) {
      return sq_mean(g, g.layer_norm(g.param(*x), g.param(*gm), g.param(*bt)));
    };
    return c;
  });
  add_case("elu", [](uint64_t seed) {
    Case c;
    Rng rng(seed + 1200);
    Parameter* x = add_param(c, "x", rand_signed_tensor(rng, {2, 5}));
    c.build = [x](Graph& g) { return sq_mean(g, g.elu(g.param(*x))); };
    return c;
  });
  add_case("softmax", [](uint64_t seed) {
    Case c;
    Rng rng(seed + 1300);
    Parameter* x = add_param(c, "x", rand_tensor(rng, {3, 4}, -2, 2));
    c.build = [x](Graph& g) { return sq_mean(g, g.softmax(g.param(*x))); };
    return c;
  });
  add_case("avg_pool_w", [](uint64_t seed) {
    Case c;
    Rng rng(seed + 1400);
    Parameter* x = add_param(c, "x", rand_tensor(rng, {2, 3, 2, 7}, -1, 1));
    c.build = [x](Graph& g) { return sq_mean(g, g.avg_pool_w(g.param(*x), 2)); };
    return c;
  });
  add_case("dropout", [](uint64_t seed) {
    Case c;
    Rng rng(seed + 1500);
    c.graph_seed = seed * 31 + 5;
    Parameter* x = add_param(c, "x", rand_tensor(rng, {4, 6}, -1, 1));
    c.build = [x](Graph& g) { return sq_mean(g, g.dropout(g.param(*x), 0.3)); };
    return c;
  });
  add_case("reshape", [](uint64_t seed) {
    Case c;
    Rng rng(seed + 1600);
    Parameter* x = add_param(c, "x", rand_tensor(rng, {2, 3, 4}, -1, 1));
    c.build = [x](Graph& g) { return sq_mean(g, g.reshape(g.param(*x), {4, 6})); };
    return c;
  });
  add_case("permute", [](uint64_t seed) {
    Case c;
    Rng rng(seed + 1700);
    Parameter* x = add_param(c, "x", rand_tensor(rng, {2, 3, 4}, -1, 1));
    c.build = [x](Graph& g) { return sq_mean(g, g.permute(g.param(*x), {2, 0, 1})); };
    return c;
  });
  add_case("mean_all", [](uint64_t seed) {
    Case c;
    Rng rng(seed + 1800);
    Parameter* x = add_param(c, "x", rand_tensor(rng, {2, 3}, -1, 1));
    c.build = [x](Graph& g) { return g.mean_all(g.mul(g.param(*x), g.param(*x))); };
    return c;
  });
  add_case("mean_axis1", [](uint64_t seed) {
    Case c;
    Rng rng(seed + 1900);
    Parameter* x = add_param(c, "x", rand_tensor(rng, {2, 3, 4}, -1, 1));
    c.build = [x](Graph& g) { return sq_mean(g, g.mean_axis1(g.param(*x))); };
    return c;
  });
  add_case("stack_select_mul_col", [](uint64_t seed) {
    Case c;
    Rng rng(seed + 2000);
    Parameter* c0 = add_param(c, "c0", rand_tensor(rng, {3, 1}, -1, 1));
    Parameter* c1 = add_param(c, "c1", rand_tensor(rng, {3, 1}, -1, 1));
    Parameter* c2 = add_param(c, "c2", rand_tensor(rng, {3, 1}, -1, 1));
    Parameter* x = add_param(c, "x", rand_tensor(rng, {3, 4}, -1, 1));
    c.build = [c0, c1, c2, x](Graph& g) {
      NodeId stacked = g.stack_cols({g.param(*c0), g.param(*c1), g.param(*c2)});
      NodeId soft = g.softmax(stacked);
      NodeId sel = g.select_col(soft, 1);
      return sq_mean(g, g.mul_col(g.param(*x), sel));
    };
    return c;
  });
  add_case("attention", [](uint64_t seed) {
    Case c;
    Rng rng(seed + 2100);
    Parameter* q = add_param(c, "q", rand_tensor(rng, {2, 3, 4}, -1, 1));
    Parameter* k = add_param(c, "k", rand_tensor(rng, {2, 3, 4}, -1, 1));
    Parameter* v = add_param(c, "v", rand_tensor(rng, {2, 3, 4}, -1, 1));
    c.build = [q, k, v](Graph& g) {
      return sq_mean(g, g.attention(g.param(*q), g.param(*k), g.param(*v)));
    };
    return c;
  });
  add_case("cross_entropy", [](uint64_t seed) {
    Case c;
    Rng rng(seed + 2200);
    Parameter* x = add_param(c, "x", rand_tensor(rng, {3, 4}, -2, 2));
    auto labels = rand_labels(rng, 3, 4);
    c.build = [x, labels](Graph& g) { return g.cross_entropy(g.param(*x), labels); };
    return c;
  });
  add_case("kl_softened", [](uint64_t seed) {
    Case c;
    Rng rng(seed + 2300);
    Parameter* x = add_param(c, "x", rand_tensor(rng, {3, 4}, -2, 2));
    Tensor teacher = rand_tensor(rng, {3, 4}, -2, 2);
    c.build = [x, teacher](Graph& g) {
      return g.kl_softened(g.param(*x), g.input(teacher), 4.0);
    };
    return c;
  });
  return cases;
}

Case make_cnet_case(uint64_t seed) {
  Case c;
  Rng rng(seed + 3000);
  CNetConfig cfg;
  cfg.in_channels = 4;
  cfg.time_len = 64;
  cfg.temporal_kernel = 16;
  cfg.temporal_filters = 4;
  cfg.depth_multiplier = 2;
  cfg.separable_kernel = 8;
  cfg.pool1 = 4;
  cfg.pool2 = 4;
  cfg.dropout = 0.25;
  cfg.feature_dim = 6;
  cfg.num_classes = 3;
  c.expert = std::make_unique<CNet>(cfg, "gc_cnet", rng.split("init"));
  c.params = c.expert->parameters();
  c.kink_shifts = {{0, param_by_suffix(c.params, "bn2/beta")},
                   {1, param_by_suffix(c.params, "bn3/beta")}};
  c.graph_seed = seed * 131 + 17;
  Tensor x = rand_tensor(rng, {2, 1, 4, 64}, -1, 1);
  auto labels = rand_labels(rng, 2, cfg.num_classes);
  Expert* e = c.expert.get();
  c.build = [e, x, labels](Graph& g) {
    ExpertNodes n = e->forward(g, g.input(x));
    return g.add(g.cross_entropy(n.logits, labels), sq_mean(g, n.feature));
  };
  return c;
}

Case make_ctnet_case(uint64_t seed) {
  Case c;
  Rng rng(seed + 4000);
  CTNetConfig cfg;
  cfg.in_channels = 4;
  cfg.time_len = 32;
  cfg.temporal_kernel = 8;
  cfg.embed_dim = 8;
  cfg.pool = 4;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.ff_dim = 16;
  cfg.dropout = 0.25;
  cfg.feature_dim = 6;
  cfg.num_classes = 3;
  c.expert = std::make_unique<CTNet>(cfg, "gc_ctnet", rng.split("init"));
  c.params = c.expert->parameters();
  c.kink_shifts = {{0, param_by_suffix(c.params, "patch/bn/beta")}};
  for (int l = 0; l < cfg.layers; ++l)
    c.kink_shifts.push_back(
        {l + 1, param_by_suffix(c.params, "block" + std::to_string(l) + "/ff1/b")});
  c.graph_seed = seed * 137 + 29;
  Tensor x = rand_tensor(rng, {2, 1, 4, 32}, -1, 1);
  auto labels = rand_labels(rng, 2, cfg.num_classes);
  Expert* e = c.expert.get();
  c.build = [e, x, labels](Graph& g) {
    ExpertNodes n = e->forward(g, g.input(x));
    return g.add(g.cross_entropy(n.logits, labels), sq_mean(g, n.feature));
  };
  return c;
}

Case make_router_case(uint64_t seed) {
  Case c;
  Rng rng(seed + 5000);
  constexpr int kB = 3, kD = 5, kK = 3, kE = 4;
  std::vector<Parameter*> feats;
  for (int i = 0; i < kE; ++i)
    feats.push_back(add_param(c, "f" + std::to_string(i), rand_tensor(rng, {kB, kD}, -1, 1)));
  c.router = std::make_unique<RouterParams>(kD, kK, "gc_router", rng.split("router"));
  for (Parameter* p : c.router->parameters()) c.params.push_back(p);
  auto labels = rand_labels(rng, kB, kK);
  RouterParams* rp = c.router.get();
  c.build = [feats, rp, labels](Graph& g) {
    std::vector<NodeId> nodes;
    for (Parameter* f : feats) nodes.push_back(g.param(*f));
    RouterNodes r = route_batch(g, nodes, *rp);
    return g.cross_entropy(r.logits, labels);
  };
  return c;
}

Case make_objective_case(uint64_t seed) {
  Case c;
  Rng rng(seed + 6000);
  constexpr int kB = 2, kK = 4, kRegional = 3;
  Parameter* fused = add_param(c, "fused", rand_tensor(rng, {kB, kK}, -2, 2));
  Parameter* global = add_param(c, "global", rand_tensor(rng, {kB, kK}, -2, 2));
  std::vector<Parameter*> regional;
  for (int i = 0; i < kRegional; ++i)
    regional.push_back(add_param(c, "r" + std::to_string(i), rand_tensor(rng, {kB, kK}, -2, 2)));
  auto labels = rand_labels(rng, kB, kK);
  // The distillation teacher is a frozen snapshot, so the oracle sees the
  // same stop-gradient objective that backward computes.
  Tensor teacher = global->value;
  c.build = [fused, global, regional, labels, teacher](Graph& g) {
    NodeId ce_fused = g.cross_entropy(g.param(*fused), labels);
    NodeId ce_global = g.cross_entropy(g.param(*global), labels);
    NodeId local = kNoNode;
    NodeId distill = kNoNode;
    NodeId teach = g.input(teacher);
    for (Parameter* r : regional) {
      NodeId rl = g.param(*r);
      NodeId ce = g.cross_entropy(rl, labels);
      local = (local == kNoNode) ? ce : g.add(local, ce);
      NodeId kl = g.kl_softened(rl, teach, 4.0);
      distill = (distill == kNoNode) ? kl : g.add(distill, kl);
    }
    local = g.scale(local, 1.0 / kRegional);
    NodeId total = g.add(g.add(g.scale(ce_fused, 0.7), g.scale(ce_global, 0.8)),
                         g.add(g.scale(local, 0.5), g.scale(distill, 0.5)));
    return total;
  };
  return c;
}

}  // namespace

std::vector<GradCheckResult> run_gradchecks(const std::string& module, int seeds, double tol,
                                            double eps) {
  if (seeds < 1) throw ConfigError("gradcheck: seeds must be >= 1");
  if (tol <= 0 || eps <= 0) throw ConfigError("gradcheck: tol and eps must be positive");
  std::vector<GradCheckResult> results;
  bool all = module == "all";
  bool known = all;
  if (all || module == "primitives") {
    known = true;
    for (auto& [name, maker] : primitive_cases())
      results.push_back(run_over_seeds(name, seeds, tol, eps, maker));
  }
  if (all || module == "cnet") {
    known = true;
    results.push_back(run_over_seeds("cnet", seeds, tol, eps, make_cnet_case));
  }
  if (all || module == "ctnet") {
    known = true;
    results.push_back(run_over_seeds("ctnet", seeds, tol, eps, make_ctnet_case));
  }
  if (all || module == "router") {
    known = true;
    results.push_back(run_over_seeds("router", seeds, tol, eps, make_router_case));
  }
  if (all || module == "objective") {
    known = true;
    results.push_back(run_over_seeds("objective", seeds, tol, eps, make_objective_case));
  }
  if (!known)
    throw ConfigError("gradcheck: unknown module '" + module +
                      "' (expected all, primitives, cnet, ctnet, router, objective)");
  return results;
}

}  // namespace brainstack
