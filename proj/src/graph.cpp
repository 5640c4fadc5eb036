// SPDX-License-Identifier: Apache-2.0
#include "brainstack/graph.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "brainstack/rng.hpp"

namespace brainstack {

namespace {

int64_t prod(const std::vector<int64_t>& dims) {
  int64_t n = 1;
  for (int64_t d : dims) n *= d;
  return n;
}

}  // namespace

void Graph::check_id(NodeId id, const char* op) const {
  if (id < 0 || static_cast<size_t>(id) >= nodes_.size()) {
    throw StateError(std::string(op) + ": node id " + std::to_string(id) +
                     " is not part of this graph");
  }
}

const Graph::Node& Graph::node(NodeId id) const {
  check_id(id, "node");
  return nodes_[static_cast<size_t>(id)];
}

Graph::Node& Graph::node_mut(NodeId id) {
  check_id(id, "node");
  return nodes_[static_cast<size_t>(id)];
}

const Tensor& Graph::value(NodeId id) const { return node(id).val; }

const Tensor& Graph::grad(NodeId id) const {
  const Node& n = node(id);
  if (!ran_backward_) throw StateError("grad: backward has not run on this graph");
  return n.grad;
}

const Tensor& Graph::attention_probs(NodeId attn_node) const {
  const Node& n = node(attn_node);
  if (std::string(n.op) != "attention") {
    throw StateError("attention_probs: node is not an attention node");
  }
  return n.extra;
}

NodeId Graph::push(const char* op, Tensor val, bool needs_grad, std::function<void()> back) {
  if (!val.all_finite()) {
    throw NumericError(std::string(op) + ": non-finite value in output tensor");
  }
  Node n;
  n.val = std::move(val);
  n.back = std::move(back);
  n.needs_grad = needs_grad;
  n.op = op;
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::input(Tensor value) { return push("input", std::move(value), false, nullptr); }

NodeId Graph::param(Parameter& p) {
  Parameter* pp = &p;
  NodeId id = static_cast<NodeId>(nodes_.size());
  return push("param", p.value, true, [this, id, pp]() {
    const Tensor& g = grad_of(id);
    for (int64_t i = 0; i < g.numel(); ++i) pp->grad[i] += g[i];
  });
}

NodeId Graph::add(NodeId a, NodeId b) {
  check_id(a, "add");
  check_id(b, "add");
  const Tensor& ta = val_of(a);
  const Tensor& tb = val_of(b);
  require_same_shape(ta, tb, "add");
  Tensor out(ta.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = ta[i] + tb[i];
  bool ng = needs(a) || needs(b);
  NodeId id = static_cast<NodeId>(nodes_.size());
  return push("add", std::move(out), ng, [this, id, a, b]() {
    const Tensor& g = grad_of(id);
    if (needs(a)) {
      Tensor& ga = grad_of(a);
      for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    }
    if (needs(b)) {
      Tensor& gb = grad_of(b);
      for (int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i];
    }
  });
}

NodeId Graph::sub(NodeId a, NodeId b) {
  check_id(a, "sub");
  check_id(b, "sub");
  const Tensor& ta = val_of(a);
  const Tensor& tb = val_of(b);
  require_same_shape(ta, tb, "sub");
  Tensor out(ta.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = ta[i] - tb[i];
  bool ng = needs(a) || needs(b);
  NodeId id = static_cast<NodeId>(nodes_.size());
  return push("sub", std::move(out), ng, [this, id, a, b]() {
    const Tensor& g = grad_of(id);
    if (needs(a)) {
      Tensor& ga = grad_of(a);
      for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    }
    if (needs(b)) {
      Tensor& gb = grad_of(b);
      for (int64_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
    }
  });
}

NodeId Graph::mul(NodeId a, NodeId b) {
  check_id(a, "mul");
  check_id(b, "mul");
  const Tensor& ta = val_of(a);
  const Tensor& tb = val_of(b);
  require_same_shape(ta, tb, "mul");
  Tensor out(ta.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = ta[i] * tb[i];
  bool ng = needs(a) || needs(b);
  NodeId id = static_cast<NodeId>(nodes_.size());
  return push("mul", std::move(out), ng, [this, id, a, b]() {
    const Tensor& g = grad_of(id);
    const Tensor& ta = val_of(a);
    const Tensor& tb = val_of(b);
    if (needs(a)) {
      Tensor& ga = grad_of(a);
      for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * tb[i];
    }
    if (needs(b)) {
      Tensor& gb = grad_of(b);
      for (int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * ta[i];
    }
  });
}

NodeId Graph::scale(NodeId a, double c) {
  check_id(a, "scale");
  const Tensor& ta = val_of(a);
  Tensor out(ta.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = ta[i] * c;
  NodeId id = static_cast<NodeId>(nodes_.size());
  return push("scale", std::move(out), needs(a), [this, id, a, c]() {
    if (!needs(a)) return;
    const Tensor& g = grad_of(id);
    Tensor& ga = grad_of(a);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * c;
  });
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  check_id(a, "matmul");
  check_id(b, "matmul");
  const Tensor& ta = val_of(a);
  const Tensor& tb = val_of(b);
  if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(1) != tb.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + ta.shape_str() + " x " + tb.shape_str());
  }
  int64_t m = ta.dim(0), k = ta.dim(1), n = tb.dim(1);
  Tensor out({m, n});
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = ta.data() + i * k;
    double* orow = out.data() + i * n;
    for (int64_t kk = 0; kk < k; ++kk) {
      double av = arow[kk];
      const double* brow = tb.data() + kk * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  bool ng = needs(a) || needs(b);
  NodeId id = static_cast<NodeId>(nodes_.size());
  return push("matmul", std::move(out), ng, [this, id, a, b, m, k, n]() {
    const Tensor& g = grad_of(id);
    const Tensor& ta = val_of(a);
    const Tensor& tb = val_of(b);
    if (needs(a)) {
      // dA[i,kk] = sum_j g[i,j] * B[kk,j]
      Tensor& ga = grad_of(a);
      for (int64_t i = 0; i < m; ++i) {
        const double* grow = g.data() + i * n;
        double* garow = ga.data() + i * k;
        for (int64_t kk = 0; kk < k; ++kk) {
          const double* brow = tb.data() + kk * n;
          double acc = 0.0;
          for (int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          garow[kk] += acc;
        }
      }
    }
    if (needs(b)) {
      // dB[kk,j] = sum_i A[i,kk] * g[i,j]
      Tensor& gb = grad_of(b);
      for (int64_t i = 0; i < m; ++i) {
        const double* arow = ta.data() + i * k;
        const double* grow = g.data() + i * n;
        for (int64_t kk = 0; kk < k; ++kk) {
          double av = arow[kk];
          double* gbrow = gb.data() + kk * n;
          for (int64_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
      }
    }
  });
}

NodeId Graph::linear(NodeId x, NodeId w, NodeId b) {
  check_id(x, "linear");
  check_id(w, "linear");
  check_id(b, "linear");
  const Tensor& tx = val_of(x);
  const Tensor& tw = val_of(w);
  const Tensor& tb = val_of(b);
  if (tx.rank() != 2 || tw.rank() != 2 || tx.dim(1) != tw.dim(0)) {
    throw ShapeError("linear: incompatible shapes " + tx.shape_str() + " x " + tw.shape_str());
  }
  if (tb.rank() != 1 || tb.dim(0) != tw.dim(1)) {
    throw ShapeError("linear: bias shape " + tb.shape_str() + " does not match output width");
  }
  int64_t rows = tx.dim(0), in = tx.dim(1), out_w = tw.dim(1);
  Tensor out({rows, out_w});
  for (int64_t i = 0; i < rows; ++i) {
    double* orow = out.data() + i * out_w;
    for (int64_t j = 0; j < out_w; ++j) orow[j] = tb[j];
    const double* xrow = tx.data() + i * in;
    for (int64_t kk = 0; kk < in; ++kk) {
      double xv = xrow[kk];
      const double* wrow = tw.data() + kk * out_w;
      for (int64_t j = 0; j < out_w; ++j) orow[j] += xv * wrow[j];
    }
  }
  bool ng = needs(x) || needs(w) || needs(b);
  NodeId id = static_cast<NodeId>(nodes_.size());
  return push("linear", std::move(out), ng, [this, id, x, w, b, rows, in, out_w]() {
    const Tensor& g = grad_of(id);
    const Tensor& tx = val_of(x);
    const Tensor& tw = val_of(w);
    if (needs(x)) {
      Tensor& gx = grad_of(x);
      for (int64_t i = 0; i < rows; ++i) {
        const double* grow = g.data() + i * out_w;
        double* gxrow = gx.data() + i * in;
        for (int64_t kk = 0; kk < in; ++kk) {
          const double* wrow = tw.data() + kk * out_w;
          double acc = 0.0;
          for (int64_t j = 0; j < out_w; ++j) acc += grow[j] * wrow[j];
          gxrow[kk] += acc;
        }
      }
    }
    if (needs(w)) {
      Tensor& gw = grad_of(w);
      for (int64_t i = 0; i < rows; ++i) {
        const double* xrow = tx.data() + i * in;
        const double* grow = g.data() + i * out_w;
        for (int64_t kk = 0; kk < in; ++kk) {
          double xv = xrow[kk];
          double* gwrow = gw.data() + kk * out_w;
          for (int64_t j = 0; j < out_w; ++j) gwrow[j] += xv * grow[j];
        }
      }
    }
    if (needs(b)) {
      Tensor& gb = grad_of(b);
      for (int64_t i = 0; i < rows; ++i) {
        const double* grow = g.data() + i * out_w;
        for (int64_t j = 0; j < out_w; ++j) gb[j] += grow[j];
      }
    }
  });
}

NodeId Graph::conv2d(NodeId x, NodeId w, NodeId bias, const Conv2dSpec& spec) {
  check_id(x, "conv2d");
  check_id(w, "conv2d");
  const Tensor& tx = val_of(x);
  const Tensor& tw = val_of(w);
  if (tx.rank() != 4 || tw.rank() != 4) {
    throw ShapeError("conv2d: expected rank-4 input and weight, got " + tx.shape_str() +
                     " and " + tw.shape_str());
  }
  int64_t B = tx.dim(0), Cin = tx.dim(1), H = tx.dim(2), W = tx.dim(3);
  int64_t Cout = tw.dim(0), Cg = tw.dim(1), KH = tw.dim(2), KW = tw.dim(3);
  int64_t g = spec.groups;
  if (g < 1 || Cin % g != 0 || Cout % g != 0 || Cg != Cin / g) {
    throw ShapeError("conv2d: group layout mismatch, input " + tx.shape_str() + " weight " +
                     tw.shape_str() + " groups " + std::to_string(g));
  }
  int64_t OH = H + 2 * spec.pad_h - KH + 1;
  int64_t OW = W + spec.pad_w_lo + spec.pad_w_hi - KW + 1;
  if (OH < 1 || OW < 1) {
    throw ShapeError("conv2d: kernel larger than padded input");
  }
  const Tensor* tbias = nullptr;
  if (bias != kNoNode) {
    check_id(bias, "conv2d");
    tbias = &val_of(bias);
    if (tbias->rank() != 1 || tbias->dim(0) != Cout) {
      throw ShapeError("conv2d: bias shape " + tbias->shape_str() + " does not match Cout");
    }
  }
  int64_t oc_per_g = Cout / g;
  int64_t ph = spec.pad_h, pwl = spec.pad_w_lo;

  Tensor out({B, Cout, OH, OW});
  for (int64_t bi = 0; bi < B; ++bi) {
    for (int64_t oc = 0; oc < Cout; ++oc) {
      double* oplane = out.data() + ((bi * Cout + oc) * OH) * OW;
      if (tbias) {
        double bv = (*tbias)[oc];
        for (int64_t i = 0; i < OH * OW; ++i) oplane[i] = bv;
      }
      int64_t grp = oc / oc_per_g;
      for (int64_t icg = 0; icg < Cg; ++icg) {
        int64_t ic = grp * Cg + icg;
        const double* iplane = tx.data() + ((bi * Cin + ic) * H) * W;
        const double* wk = tw.data() + ((oc * Cg + icg) * KH) * KW;
        for (int64_t kh = 0; kh < KH; ++kh) {
          for (int64_t kw = 0; kw < KW; ++kw) {
            double wv = wk[kh * KW + kw];
            if (wv == 0.0) continue;
            for (int64_t oh = 0; oh < OH; ++oh) {
              int64_t ih = oh - ph + kh;
              if (ih < 0 || ih >= H) continue;
              // valid ow range: 0 <= ow-pwl+kw < W
              int64_t ow_lo = std::max<int64_t>(0, pwl - kw);
              int64_t ow_hi = std::min<int64_t>(OW, W + pwl - kw);
              const double* irow = iplane + ih * W + (ow_lo - pwl + kw);
              double* orow = oplane + oh * OW + ow_lo;
              for (int64_t t = 0; t < ow_hi - ow_lo; ++t) orow[t] += wv * irow[t];
            }
          }
        }
      }
    }
  }
  bool ng = needs(x) || needs(w) || (bias != kNoNode && needs(bias));
  NodeId id = static_cast<NodeId>(nodes_.size());
  Conv2dSpec sp = spec;
  return push("conv2d", std::move(out), ng, [this, id, x, w, bias, sp, B, Cin, H, W, Cout, Cg,
                                             KH, KW, OH, OW, oc_per_g]() {
    const Tensor& g = grad_of(id);
    const Tensor& tx = val_of(x);
    const Tensor& tw = val_of(w);
    int64_t ph = sp.pad_h, pwl = sp.pad_w_lo;
    bool nx = needs(x), nw = needs(w);
    Tensor* gx = nx ? &grad_of(x) : nullptr;
    Tensor* gw = nw ? &grad_of(w) : nullptr;
    if (nx || nw) {
      for (int64_t bi = 0; bi < B; ++bi) {
        for (int64_t oc = 0; oc < Cout; ++oc) {
          const double* gplane = g.data() + ((bi * Cout + oc) * OH) * OW;
          int64_t grp = oc / oc_per_g;
          for (int64_t icg = 0; icg < Cg; ++icg) {
            int64_t ic = grp * Cg + icg;
            const double* iplane = tx.data() + ((bi * Cin + ic) * H) * W;
            double* gxplane = nx ? gx->data() + ((bi * Cin + ic) * H) * W : nullptr;
            const double* wk = tw.data() + ((oc * Cg + icg) * KH) * KW;
            double* gwk = nw ? gw->data() + ((oc * Cg + icg) * KH) * KW : nullptr;
            for (int64_t kh = 0; kh < KH; ++kh) {
              for (int64_t kw = 0; kw < KW; ++kw) {
                double wv = wk[kh * KW + kw];
                double wacc = 0.0;
                for (int64_t oh = 0; oh < OH; ++oh) {
                  int64_t ih = oh - ph + kh;
                  if (ih < 0 || ih >= H) continue;
                  int64_t ow_lo = std::max<int64_t>(0, pwl - kw);
                  int64_t ow_hi = std::min<int64_t>(OW, W + pwl - kw);
                  int64_t len = ow_hi - ow_lo;
                  const double* grow = gplane + oh * OW + ow_lo;
                  int64_t ioff = ih * W + (ow_lo - pwl + kw);
                  if (nx) {
                    double* gxrow = gxplane + ioff;
                    for (int64_t t = 0; t < len; ++t) gxrow[t] += wv * grow[t];
                  }
                  if (nw) {
                    const double* irow = iplane + ioff;
                    for (int64_t t = 0; t < len; ++t) wacc += grow[t] * irow[t];
                  }
                }
                if (nw) gwk[kh * KW + kw] += wacc;
              }
            }
          }
        }
      }
    }
    if (bias != kNoNode && needs(bias)) {
      Tensor& gb = grad_of(bias);
      for (int64_t bi = 0; bi < B; ++bi) {
        for (int64_t oc = 0; oc < Cout; ++oc) {
          const double* gplane = g.data() + ((bi * Cout + oc) * OH) * OW;
          double acc = 0.0;
          for (int64_t i = 0; i < OH * OW; ++i) acc += gplane[i];
          gb[oc] += acc;
        }
      }
    }
  });
}

NodeId Graph::batch_norm(NodeId x, NodeId gamma, NodeId beta, BatchNormState& state,
                         double eps, double momentum) {
  check_id(x, "batch_norm");
  check_id(gamma, "batch_norm");
  check_id(beta, "batch_norm");
  const Tensor& tx = val_of(x);
  if (tx.rank() != 4) {
    throw ShapeError("batch_norm: expected rank-4 input, got " + tx.shape_str());
  }
  int64_t B = tx.dim(0), C = tx.dim(1), H = tx.dim(2), W = tx.dim(3);
  const Tensor& tg = val_of(gamma);
  const Tensor& tb = val_of(beta);
  if (tg.rank() != 1 || tg.dim(0) != C || tb.rank() != 1 || tb.dim(0) != C) {
    throw ShapeError("batch_norm: affine shapes do not match channel count");
  }
  if (state.running_mean.dim(0) != C) {
    throw ShapeError("batch_norm: state channel count does not match input");
  }
  int64_t plane = H * W;
  int64_t n = B * plane;
  Tensor mean({C}), var({C});
  if (mode_ == Mode::kTrain) {
    for (int64_t c = 0; c < C; ++c) {
      double m = 0.0;
      for (int64_t bi = 0; bi < B; ++bi) {
        const double* p = tx.data() + ((bi * C + c) * plane);
        for (int64_t i = 0; i < plane; ++i) m += p[i];
      }
      m /= static_cast<double>(n);
      double v = 0.0;
      for (int64_t bi = 0; bi < B; ++bi) {
        const double* p = tx.data() + ((bi * C + c) * plane);
        for (int64_t i = 0; i < plane; ++i) {
          double d = p[i] - m;
          v += d * d;
        }
      }
      v /= static_cast<double>(n);  // biased: used for normalization
      mean[c] = m;
      var[c] = v;
      double unbiased = n > 1 ? v * static_cast<double>(n) / static_cast<double>(n - 1) : v;
      state.running_mean[c] = (1.0 - momentum) * state.running_mean[c] + momentum * m;
      state.running_var[c] = (1.0 - momentum) * state.running_var[c] + momentum * unbiased;
    }
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }
  Tensor out(tx.shape());
  Tensor inv_std({C});
  for (int64_t c = 0; c < C; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
  for (int64_t bi = 0; bi < B; ++bi) {
    for (int64_t c = 0; c < C; ++c) {
      const double* p = tx.data() + ((bi * C + c) * plane);
      double* o = out.data() + ((bi * C + c) * plane);
      double m = mean[c], is = inv_std[c], gv = tg[c], bv = tb[c];
      for (int64_t i = 0; i < plane; ++i) o[i] = (p[i] - m) * is * gv + bv;
    }
  }
  bool train_stats = mode_ == Mode::kTrain;
  bool ng = needs(x) || needs(gamma) || needs(beta);
  NodeId id = static_cast<NodeId>(nodes_.size());
  return push("batch_norm", std::move(out), ng,
              [this, id, x, gamma, beta, mean, inv_std, B, C, plane, n, train_stats]() {
    const Tensor& g = grad_of(id);
    const Tensor& tx = val_of(x);
    const Tensor& tg = val_of(gamma);
    bool nx = needs(x);
    for (int64_t c = 0; c < C; ++c) {
      double m = mean[c], is = inv_std[c], gv = tg[c];
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int64_t bi = 0; bi < B; ++bi) {
        const double* gp = g.data() + ((bi * C + c) * plane);
        const double* xp = tx.data() + ((bi * C + c) * plane);
        for (int64_t i = 0; i < plane; ++i) {
          sum_dy += gp[i];
          sum_dy_xhat += gp[i] * (xp[i] - m) * is;
        }
      }
      if (needs(gamma)) grad_of(gamma)[c] += sum_dy_xhat;
      if (needs(beta)) grad_of(beta)[c] += sum_dy;
      if (nx) {
        Tensor& gx = grad_of(x);
        if (train_stats) {
          double inv_n = 1.0 / static_cast<double>(n);
          for (int64_t bi = 0; bi < B; ++bi) {
            const double* gp = g.data() + ((bi * C + c) * plane);
            const double* xp = tx.data() + ((bi * C + c) * plane);
            double* gxp = gx.data() + ((bi * C + c) * plane);
            for (int64_t i = 0; i < plane; ++i) {
              double xhat = (xp[i] - m) * is;
              gxp[i] += gv * is * (gp[i] - inv_n * sum_dy - inv_n * xhat * sum_dy_xhat);
            }
          }
        } else {
          // Running statistics are constants in eval mode.
          for (int64_t bi = 0; bi < B; ++bi) {
            const double* gp = g.data() + ((bi * C + c) * plane);
            double* gxp = gx.data() + ((bi * C + c) * plane);
            for (int64_t i = 0; i < plane; ++i) gxp[i] += gv * is * gp[i];
          }
        }
      }
    }
  });
}

NodeId Graph::layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps) {
  check_id(x, "layer_norm");
  check_id(gamma, "layer_norm");
  check_id(beta, "layer_norm");
  const Tensor& tx = val_of(x);
  if (tx.rank() < 1) throw ShapeError("layer_norm: scalar input");
  int64_t D = tx.dim(tx.rank() - 1);
  int64_t rows = tx.numel() / D;
  const Tensor& tg = val_of(gamma);
  const Tensor& tb = val_of(beta);
  if (tg.rank() != 1 || tg.dim(0) != D || tb.rank() != 1 || tb.dim(0) != D) {
    throw ShapeError("layer_norm: affine shapes do not match last axis");
  }
  Tensor out(tx.shape());
  Tensor mean({rows}), inv_std({rows});
  for (int64_t r = 0; r < rows; ++r) {
    const double* p = tx.data() + r * D;
    double m = 0.0;
    for (int64_t i = 0; i < D; ++i) m += p[i];
    m /= static_cast<double>(D);
    double v = 0.0;
    for (int64_t i = 0; i < D; ++i) {
      double d = p[i] - m;
      v += d * d;
    }
    v /= static_cast<double>(D);
    double is = 1.0 / std::sqrt(v + eps);
    mean[r] = m;
    inv_std[r] = is;
    double* o = out.data() + r * D;
    for (int64_t i = 0; i < D; ++i) o[i] = (p[i] - m) * is * tg[i] + tb[i];
  }
  bool ng = needs(x) || needs(gamma) || needs(beta);
  NodeId id = static_cast<NodeId>(nodes_.size());
  return push("layer_norm", std::move(out), ng, [this, id, x, gamma, beta, mean, inv_std, rows, D]() {
    const Tensor& g = grad_of(id);
    const Tensor& tx = val_of(x);
    const Tensor& tg = val_of(gamma);
    for (int64_t r = 0; r < rows; ++r) {
      const double* gp = g.data() + r * D;
      const double* xp = tx.data() + r * D;
      double m = mean[r], is = inv_std[r];
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      for (int64_t i = 0; i < D; ++i) {
        double xhat = (xp[i] - m) * is;
        double dxhat = gp[i] * tg[i];
        sum_dxhat += dxhat;
        sum_dxhat_xhat += dxhat * xhat;
        if (needs(gamma)) grad_of(gamma)[i] += gp[i] * xhat;
        if (needs(beta)) grad_of(beta)[i] += gp[i];
      }
      if (needs(x)) {
        Tensor& gx = grad_of(x);
        double* gxp = gx.data() + r * D;
        double inv_d = 1.0 / static_cast<double>(D);
        for (int64_t i = 0; i < D; ++i) {
          double xhat = (xp[i] - m) * is;
          double dxhat = gp[i] * tg[i];
          gxp[i] += is * (dxhat - inv_d * sum_dxhat - inv_d * xhat * sum_dxhat_xhat);
        }
      }
    }
  });
}

NodeId Graph::elu(NodeId x) {
  check_id(x, "elu");
  const Tensor& tx = val_of(x);
  if (record_elu_) elu_inputs_.push_back(tx);
  Tensor out(tx.shape());
  for (int64_t i = 0; i < out.numel(); ++i) {
    double v = tx[i];
    out[i] = v > 0.0 ? v : std::expm1(v);
  }
  NodeId id = static_cast<NodeId>(nodes_.size());
  return push("elu", std::move(out), needs(x), [this, id, x]() {
    if (!needs(x)) return;
    const Tensor& g = grad_of(id);
    const Tensor& y = val_of(id);
    const Tensor& tx = val_of(x);
    Tensor& gx = grad_of(x);
    for (int64_t i = 0; i < g.numel(); ++i) {
      gx[i] += g[i] * (tx[i] > 0.0 ? 1.0 : y[i] + 1.0);
    }
  });
}

NodeId Graph::softmax(NodeId x) {
  check_id(x, "softmax");
  const Tensor& tx = val_of(x);
  if (tx.rank() < 1) throw ShapeError("softmax: scalar input");
  int64_t D = tx.dim(tx.rank() - 1);
  int64_t rows = tx.numel() / D;
  Tensor out(tx.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const double* p = tx.data() + r * D;
    double* o = out.data() + r * D;
    double m = p[0];
    for (int64_t i = 1; i < D; ++i) m = std::max(m, p[i]);
    double z = 0.0;
    for (int64_t i = 0; i < D; ++i) {
      o[i] = std::exp(p[i] - m);
      z += o[i];
    }
    for (int64_t i = 0; i < D; ++i) o[i] /= z;
  }
  NodeId id = static_cast<NodeId>(nodes_.size());
  return push("softmax", std::move(out), needs(x), [this, id, x, rows, D]() {
    if (!needs(x)) return;
    const Tensor& g = grad_of(id);
    const Tensor& y = val_of(id);
    Tensor& gx = grad_of(x);
    for (int64_t r = 0; r < rows; ++r) {
      const double* gp = g.data() + r * D;
      const double* yp = y.data() + r * D;
      double* gxp = gx.data() + r * D;
      double dot = 0.0;
      for (int64_t i = 0; i < D; ++i) dot += gp[i] * yp[i];
      for (int64_t i = 0; i < D; ++i) gxp[i] += yp[i] * (gp[i] - dot);
    }
  });
}

NodeId Graph::avg_pool_w(NodeId x, int64_t pool) {
  check_id(x, "avg_pool_w");
  if (pool < 1) throw ShapeError("avg_pool_w: pool size must be positive");
  const Tensor& tx = val_of(x);
  if (tx.rank() != 4) throw ShapeError("avg_pool_w: expected rank-4 input, got " + tx.shape_str());
  int64_t B = tx.dim(0), C = tx.dim(1), H = tx.dim(2), W = tx.dim(3);
  int64_t OW = W / pool;
  if (OW < 1) throw ShapeError("avg_pool_w: pool window larger than input width");
  Tensor out({B, C, H, OW});
  int64_t planes = B * C * H;
  double inv = 1.0 / static_cast<double>(pool);
  for (int64_t p = 0; p < planes; ++p) {
    const double* src = tx.data() + p * W;
    double* dst = out.data() + p * OW;
    for (int64_t o = 0; o < OW; ++o) {
      double acc = 0.0;
      for (int64_t t = 0; t < pool; ++t) acc += src[o * pool + t];
      dst[o] = acc * inv;
    }
  }
  NodeId id = static_cast<NodeId>(nodes_.size());
  return push("avg_pool_w", std::move(out), needs(x), [this, id, x, planes, W, OW, pool, inv]() {
    if (!needs(x)) return;
    const Tensor& g = grad_of(id);
    Tensor& gx = grad_of(x);
    for (int64_t p = 0; p < planes; ++p) {
      const double* gp = g.data() + p * OW;
      double* gxp = gx.data() + p * W;
      for (int64_t o = 0; o < OW; ++o) {
        double v = gp[o] * inv;
        for (int64_t t = 0; t < pool; ++t) gxp[o * pool + t] += v;
      }
    }
  });
}

NodeId Graph::dropout(NodeId x, double rate) {
  check_id(x, "dropout");
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout: rate must lie in [0,1)");
  }
  const Tensor& tx = val_of(x);
  if (mode_ == Mode::kEval || rate == 0.0) {
    // Identity in eval mode; inverted scaling makes eval a plain pass-through.
    NodeId id = static_cast<NodeId>(nodes_.size());
    Tensor out = tx;
    return push("dropout", std::move(out), needs(x), [this, id, x]() {
      if (!needs(x)) return;
      const Tensor& g = grad_of(id);
      Tensor& gx = grad_of(x);
      for (int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
    });
  }
  // Mask keyed by (graph seed, dropout index) so a rebuilt graph with the
  // same structure and seed reproduces identical masks.
  Rng rng = Rng(dropout_seed_).split("dropout").split(static_cast<uint64_t>(dropout_count_++));
  double keep = 1.0 - rate;
  double inv_keep = 1.0 / keep;
  auto mask = std::make_shared<std::vector<double>>(static_cast<size_t>(tx.numel()));
  Tensor out(tx.shape());
  for (int64_t i = 0; i < tx.numel(); ++i) {
    double m = rng.uniform() < keep ? inv_keep : 0.0;
    (*mask)[static_cast<size_t>(i)] = m;
    out[i] = tx[i] * m;
  }
  NodeId id = static_cast<NodeId>(nodes_.size());
  return push("dropout", std::move(out), needs(x), [this, id, x, mask]() {
    if (!needs(x)) return;
    const Tensor& g = grad_of(id);
    Tensor& gx = grad_of(x);
    for (int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * (*mask)[static_cast<size_t>(i)];
  });
}

NodeId Graph::reshape(NodeId x, std::vector<int64_t> shape) {
  check_id(x, "reshape");
  const Tensor& tx = val_of(x);
  if (prod(shape) != tx.numel()) {
    throw ShapeError("reshape: element count mismatch for " + tx.shape_str());
  }
  Tensor out(std::move(shape));
  for (int64_t i = 0; i < tx.numel(); ++i) out[i] = tx[i];
  NodeId id = static_cast<NodeId>(nodes_.size());
  return push("reshape", std::move(out), needs(x), [this, id, x]() {
    if (!needs(x)) return;
    const Tensor& g = grad_of(id);
    Tensor& gx = grad_of(x);
    for (int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
  });
}

NodeId Graph::permute(NodeId x, std::vector<int> perm) {
  check_id(x, "permute");
  const Tensor& tx = val_of(x);
  int r = tx.rank();
  if (static_cast<int>(perm.size()) != r) {
    throw ShapeError("permute: axis list length does not match rank");
  }
  std::vector<bool> seen(static_cast<size_t>(r), false);
  for (int p : perm) {
    if (p < 0 || p >= r || seen[static_cast<size_t>(p)]) {
      throw ShapeError("permute: invalid axis list");
    }
    seen[static_cast<size_t>(p)] = true;
  }
  std::vector<int64_t> in_strides(static_cast<size_t>(r), 1);
  for (int i = r - 2; i >= 0; --i) {
    in_strides[static_cast<size_t>(i)] =
        in_strides[static_cast<size_t>(i + 1)] * tx.dim(i + 1);
  }
  std::vector<int64_t> out_shape(static_cast<size_t>(r));
  std::vector<int64_t> src_stride(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) {
    out_shape[static_cast<size_t>(i)] = tx.dim(perm[static_cast<size_t>(i)]);
    src_stride[static_cast<size_t>(i)] = in_strides[static_cast<size_t>(perm[static_cast<size_t>(i)])];
  }
  Tensor out(out_shape);
  int64_t n = tx.numel();
  std::vector<int64_t> idx(static_cast<size_t>(r), 0);
  auto src_offsets = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(n));
  for (int64_t o = 0; o < n; ++o) {
    int64_t src = 0;
    for (int i = 0; i < r; ++i) src += idx[static_cast<size_t>(i)] * src_stride[static_cast<size_t>(i)];
    out[o] = tx[src];
    (*src_offsets)[static_cast<size_t>(o)] = src;
    for (int i = r - 1; i >= 0; --i) {
      if (++idx[static_cast<size_t>(i)] < out_shape[static_cast<size_t>(i)]) break;
      idx[static_cast<size_t>(i)] = 0;
    }
  }
  NodeId id = static_cast<NodeId>(nodes_.size());
  return push("permute", std::move(out), needs(x), [this, id, x, src_offsets]() {
    if (!needs(x)) return;
    const Tensor& g = grad_of(id);
    Tensor& gx = grad_of(x);
    for (int64_t o = 0; o < g.numel(); ++o) gx[(*src_offsets)[static_cast<size_t>(o)]] += g[o];
  });
}

NodeId Graph::mean_all(NodeId x) {
  check_id(x, "mean_all");
  const Tensor& tx = val_of(x);
  if (tx.numel() == 0) throw ShapeError("mean_all: empty tensor");
  double acc = 0.0;
  for (int64_t i = 0; i < tx.numel(); ++i) acc += tx[i];
  double inv = 1.0 / static_cast<double>(tx.numel());
  NodeId id = static_cast<NodeId>(nodes_.size());
  return push("mean_all", Tensor::scalar(acc * inv), needs(x), [this, id, x, inv]() {
    if (!needs(x)) return;
    double gv = grad_of(id)[0] * inv;
    Tensor& gx = grad_of(x);
    for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += gv;
  });
}

NodeId Graph::mean_axis1(NodeId x) {
  check_id(x, "mean_axis1");
  const Tensor& tx = val_of(x);
  if (tx.rank() != 3) throw ShapeError("mean_axis1: expected rank-3 input, got " + tx.shape_str());
  int64_t B = tx.dim(0), N = tx.dim(1), D = tx.dim(2);
  if (N == 0) throw ShapeError("mean_axis1: empty middle axis");
  Tensor out({B, D});
  double inv = 1.0 / static_cast<double>(N);
  for (int64_t b = 0; b < B; ++b) {
    double* o = out.data() + b * D;
    for (int64_t n = 0; n < N; ++n) {
      const double* p = tx.data() + (b * N + n) * D;
      for (int64_t d = 0; d < D; ++d) o[d] += p[d];
    }
    for (int64_t d = 0; d < D; ++d) o[d] *= inv;
  }
  NodeId id = static_cast<NodeId>(nodes_.size());
  return push("mean_axis1", std::move(out), needs(x), [this, id, x, B, N, D, inv]() {
    if (!needs(x)) return;
    const Tensor& g = grad_of(id);
    Tensor& gx = grad_of(x);
    for (int64_t b = 0; b < B; ++b) {
      const double* gp = g.data() + b * D;
      for (int64_t n = 0; n < N; ++n) {
        double* gxp = gx.data() + (b * N + n) * D;
        for (int64_t d = 0; d < D; ++d) gxp[d] += gp[d] * inv;
      }
    }
  });
}

NodeId Graph::stack_cols(const std::vector<NodeId>& cols) {
  if (cols.empty()) throw ShapeError("stack_cols: empty column list");
  for (NodeId c : cols) check_id(c, "stack_cols");
  const Tensor& t0 = val_of(cols[0]);
  if (t0.rank() != 2 || t0.dim(1) != 1) {
    throw ShapeError("stack_cols: expected (B,1) columns, got " + t0.shape_str());
  }
  int64_t B = t0.dim(0);
  int64_t E = static_cast<int64_t>(cols.size());
  bool ng = false;
  for (NodeId c : cols) {
    const Tensor& tc = val_of(c);
    if (tc.rank() != 2 || tc.dim(0) != B || tc.dim(1) != 1) {
      throw ShapeError("stack_cols: column shape mismatch " + tc.shape_str());
    }
    ng = ng || needs(c);
  }
  Tensor out({B, E});
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t e = 0; e < E; ++e) out[b * E + e] = val_of(cols[static_cast<size_t>(e)])[b];
  }
  NodeId id = static_cast<NodeId>(nodes_.size());
  std::vector<NodeId> cc = cols;
  return push("stack_cols", std::move(out), ng, [this, id, cc, B, E]() {
    const Tensor& g = grad_of(id);
    for (int64_t e = 0; e < E; ++e) {
      NodeId c = cc[static_cast<size_t>(e)];
      if (!needs(c)) continue;
      Tensor& gc = grad_of(c);
      for (int64_t b = 0; b < B; ++b) gc[b] += g[b * E + e];
    }
  });
}

NodeId Graph::select_col(NodeId x, int64_t col) {
  check_id(x, "select_col");
  const Tensor& tx = val_of(x);
  if (tx.rank() != 2 || col < 0 || col >= tx.dim(1)) {
    throw ShapeError("select_col: column out of range for " + tx.shape_str());
  }
  int64_t B = tx.dim(0), E = tx.dim(1);
  Tensor out({B, 1});
  for (int64_t b = 0; b < B; ++b) out[b] = tx[b * E + col];
  NodeId id = static_cast<NodeId>(nodes_.size());
  return push("select_col", std::move(out), needs(x), [this, id, x, col, B, E]() {
    if (!needs(x)) return;
    const Tensor& g = grad_of(id);
    Tensor& gx = grad_of(x);
    for (int64_t b = 0; b < B; ++b) gx[b * E + col] += g[b];
  });
}

NodeId Graph::mul_col(NodeId x, NodeId s) {
  check_id(x, "mul_col");
  check_id(s, "mul_col");
  const Tensor& tx = val_of(x);
  const Tensor& ts = val_of(s);
  if (tx.rank() != 2 || ts.rank() != 2 || ts.dim(1) != 1 || ts.dim(0) != tx.dim(0)) {
    throw ShapeError("mul_col: shapes " + tx.shape_str() + " and " + ts.shape_str());
  }
  int64_t B = tx.dim(0), D = tx.dim(1);
  Tensor out({B, D});
  for (int64_t b = 0; b < B; ++b) {
    double sv = ts[b];
    const double* xp = tx.data() + b * D;
    double* op = out.data() + b * D;
    for (int64_t d = 0; d < D; ++d) op[d] = xp[d] * sv;
  }
  bool ng = needs(x) || needs(s);
  NodeId id = static_cast<NodeId>(nodes_.size());
  return push("mul_col", std::move(out), ng, [this, id, x, s, B, D]() {
    const Tensor& g = grad_of(id);
    const Tensor& tx = val_of(x);
    const Tensor& ts = val_of(s);
    if (needs(x)) {
      Tensor& gx = grad_of(x);
      for (int64_t b = 0; b < B; ++b) {
        double sv = ts[b];
        const double* gp = g.data() + b * D;
        double* gxp = gx.data() + b * D;
        for (int64_t d = 0; d < D; ++d) gxp[d] += gp[d] * sv;
      }
    }
    if (needs(s)) {
      Tensor& gs = grad_of(s);
      for (int64_t b = 0; b < B; ++b) {
        const double* gp = g.data() + b * D;
        const double* xp = tx.data() + b * D;
        double acc = 0.0;
        for (int64_t d = 0; d < D; ++d) acc += gp[d] * xp[d];
        gs[b] += acc;
      }
    }
  });
}

NodeId Graph::attention(NodeId q, NodeId k, NodeId v) {
  check_id(q, "attention");
  check_id(k, "attention");
  check_id(v, "attention");
  const Tensor& tq = val_of(q);
  const Tensor& tk = val_of(k);
  const Tensor& tv = val_of(v);
  if (tq.rank() != 3 || !tq.same_shape(tk) || !tq.same_shape(tv)) {
    throw ShapeError("attention: expected matching rank-3 q/k/v, got " + tq.shape_str());
  }
  int64_t G = tq.dim(0), N = tq.dim(1), dh = tq.dim(2);
  double scl = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor probs({G, N, N});
  Tensor out({G, N, dh});
  for (int64_t g = 0; g < G; ++g) {
    const double* qg = tq.data() + g * N * dh;
    const double* kg = tk.data() + g * N * dh;
    const double* vg = tv.data() + g * N * dh;
    double* pg = probs.data() + g * N * N;
    double* og = out.data() + g * N * dh;
    for (int64_t i = 0; i < N; ++i) {
      double* prow = pg + i * N;
      const double* qi = qg + i * dh;
      double m = -1e300;
      for (int64_t j = 0; j < N; ++j) {
        const double* kj = kg + j * dh;
        double s = 0.0;
        for (int64_t d = 0; d < dh; ++d) s += qi[d] * kj[d];
        s *= scl;
        prow[j] = s;
        m = std::max(m, s);
      }
      double z = 0.0;
      for (int64_t j = 0; j < N; ++j) {
        prow[j] = std::exp(prow[j] - m);
        z += prow[j];
      }
      double* orow = og + i * dh;
      for (int64_t j = 0; j < N; ++j) {
        prow[j] /= z;
        const double* vj = vg + j * dh;
        double pv = prow[j];
        for (int64_t d = 0; d < dh; ++d) orow[d] += pv * vj[d];
      }
    }
  }
  bool ng = needs(q) || needs(k) || needs(v);
  NodeId id = push("attention", std::move(out), ng, nullptr);
  node_mut(id).extra = std::move(probs);
  node_mut(id).back = [this, id, q, k, v, G, N, dh, scl]() {
    const Tensor& g = grad_of(id);
    const Tensor& probs = node(id).extra;
    const Tensor& tq = val_of(q);
    const Tensor& tk = val_of(k);
    const Tensor& tv = val_of(v);
    bool nq = needs(q), nk = needs(k), nv = needs(v);
    for (int64_t gg = 0; gg < G; ++gg) {
      const double* qg = tq.data() + gg * N * dh;
      const double* kg = tk.data() + gg * N * dh;
      const double* vg = tv.data() + gg * N * dh;
      const double* pg = probs.data() + gg * N * N;
      const double* dg = g.data() + gg * N * dh;
      double* gq = nq ? grad_of(q).data() + gg * N * dh : nullptr;
      double* gk = nk ? grad_of(k).data() + gg * N * dh : nullptr;
      double* gv = nv ? grad_of(v).data() + gg * N * dh : nullptr;
      std::vector<double> dscore(static_cast<size_t>(N));
      for (int64_t i = 0; i < N; ++i) {
        const double* prow = pg + i * N;
        const double* drow = dg + i * dh;
        // dP[i,j] = dO[i,:].V[j,:]; softmax backward gives dScore.
        double dot_sum = 0.0;
        for (int64_t j = 0; j < N; ++j) {
          const double* vj = vg + j * dh;
          double dp = 0.0;
          for (int64_t d = 0; d < dh; ++d) dp += drow[d] * vj[d];
          if (nv) {
            double* gvj = gv + j * dh;
            double pv = prow[j];
            for (int64_t d = 0; d < dh; ++d) gvj[d] += pv * drow[d];
          }
          dscore[static_cast<size_t>(j)] = dp;
          dot_sum += dp * prow[j];
        }
        for (int64_t j = 0; j < N; ++j) {
          double ds = prow[j] * (dscore[static_cast<size_t>(j)] - dot_sum) * scl;
          if (ds == 0.0) continue;
          const double* kj = kg + j * dh;
          const double* qi = qg + i * dh;
          if (nq) {
            double* gqi = gq + i * dh;
            for (int64_t d = 0; d < dh; ++d) gqi[d] += ds * kj[d];
          }
          if (nk) {
            double* gkj = gk + j * dh;
            for (int64_t d = 0; d < dh; ++d) gkj[d] += ds * qi[d];
          }
        }
      }
    }
  };
  return id;
}

NodeId Graph::cross_entropy(NodeId logits, const std::vector<int>& labels) {
  check_id(logits, "cross_entropy");
  const Tensor& tl = val_of(logits);
  if (tl.rank() != 2) throw ShapeError("cross_entropy: expected (B,K) logits, got " + tl.shape_str());
  int64_t B = tl.dim(0), K = tl.dim(1);
  if (static_cast<int64_t>(labels.size()) != B) {
    throw ShapeError("cross_entropy: label count does not match batch size");
  }
  for (int lb : labels) {
    if (lb < 0 || lb >= K) {
      throw ShapeError("cross_entropy: label " + std::to_string(lb) + " out of range for K=" +
                       std::to_string(K));
    }
  }
  auto soft = std::make_shared<Tensor>(Tensor({B, K}));
  double loss = 0.0;
  for (int64_t b = 0; b < B; ++b) {
    const double* p = tl.data() + b * K;
    double* s = soft->data() + b * K;
    double m = p[0];
    for (int64_t j = 1; j < K; ++j) m = std::max(m, p[j]);
    double z = 0.0;
    for (int64_t j = 0; j < K; ++j) {
      s[j] = std::exp(p[j] - m);
      z += s[j];
    }
    double lse = m + std::log(z);
    for (int64_t j = 0; j < K; ++j) s[j] /= z;
    loss += lse - p[labels[static_cast<size_t>(b)]];
  }
  loss /= static_cast<double>(B);
  NodeId id = static_cast<NodeId>(nodes_.size());
  std::vector<int> lab = labels;
  return push("cross_entropy", Tensor::scalar(loss), needs(logits),
              [this, id, logits, soft, lab, B, K]() {
    if (!needs(logits)) return;
    double gv = grad_of(id)[0] / static_cast<double>(B);
    Tensor& gl = grad_of(logits);
    for (int64_t b = 0; b < B; ++b) {
      const double* s = soft->data() + b * K;
      double* gp = gl.data() + b * K;
      for (int64_t j = 0; j < K; ++j) gp[j] += gv * s[j];
      gp[lab[static_cast<size_t>(b)]] -= gv;
    }
  });
}

NodeId Graph::kl_softened(NodeId student, NodeId teacher, double temperature) {
  check_id(student, "kl_softened");
  check_id(teacher, "kl_softened");
  if (!(temperature > 0.0)) throw ConfigError("kl_softened: temperature must be positive");
  const Tensor& ts = val_of(student);
  const Tensor& tt = val_of(teacher);
  if (ts.rank() != 2 || !ts.same_shape(tt)) {
    throw ShapeError("kl_softened: expected matching (B,K) logits, got " + ts.shape_str() +
                     " vs " + tt.shape_str());
  }
  int64_t B = ts.dim(0), K = ts.dim(1);
  auto softened = [K](const double* row, double T, double* out_probs) {
    double m = row[0] / T;
    for (int64_t j = 1; j < K; ++j) m = std::max(m, row[j] / T);
    double z = 0.0;
    for (int64_t j = 0; j < K; ++j) {
      out_probs[j] = std::exp(row[j] / T - m);
      z += out_probs[j];
    }
    for (int64_t j = 0; j < K; ++j) out_probs[j] /= z;
  };
  auto p_teach = std::make_shared<Tensor>(Tensor({B, K}));
  auto q_stud = std::make_shared<Tensor>(Tensor({B, K}));
  double loss = 0.0;
  for (int64_t b = 0; b < B; ++b) {
    double* prow = p_teach->data() + b * K;
    double* qrow = q_stud->data() + b * K;
    softened(tt.data() + b * K, temperature, prow);
    softened(ts.data() + b * K, temperature, qrow);
    for (int64_t j = 0; j < K; ++j) {
      if (prow[j] > 0.0) loss += prow[j] * (std::log(prow[j]) - std::log(qrow[j]));
    }
  }
  loss /= static_cast<double>(B);
  // KL is nonnegative; tiny negative values from rounding are clamped so the
  // invariant holds exactly.
  if (loss < 0.0 && loss > -1e-15) loss = 0.0;
  NodeId id = static_cast<NodeId>(nodes_.size());
  // Teacher operand is a constant by construction: backward writes only to
  // the student side.
  return push("kl_softened", Tensor::scalar(loss), needs(student),
              [this, id, student, p_teach, q_stud, B, K, temperature]() {
    if (!needs(student)) return;
    double gv = grad_of(id)[0] / (static_cast<double>(B) * temperature);
    Tensor& gs = grad_of(student);
    for (int64_t b = 0; b < B; ++b) {
      const double* prow = p_teach->data() + b * K;
      const double* qrow = q_stud->data() + b * K;
      double* gp = gs.data() + b * K;
      for (int64_t j = 0; j < K; ++j) gp[j] += gv * (qrow[j] - prow[j]);
    }
  });
}

NodeId Graph::detach(NodeId x) {
  check_id(x, "detach");
  return push("detach", val_of(x), false, nullptr);
}

void Graph::backward(NodeId out) {
  check_id(out, "backward");
  if (ran_backward_) {
    throw StateError("backward: reverse pass already ran on this graph");
  }
  const Node& on = node(out);
  if (on.val.numel() != 1) {
    throw ShapeError("backward: output must be scalar, got " + on.val.shape_str());
  }
  for (size_t i = 0; i <= static_cast<size_t>(out); ++i) {
    if (nodes_[i].needs_grad) nodes_[i].grad = Tensor::zeros(nodes_[i].val.shape());
  }
  ran_backward_ = true;
  if (!on.needs_grad) return;  // nothing reaches a parameter
  node_mut(out).grad[0] = 1.0;
  for (int64_t i = out; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.needs_grad && n.back) n.back();
  }
}

}  // namespace brainstack
