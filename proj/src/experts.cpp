// SPDX-License-Identifier: Apache-2.0
#include "brainstack/experts.hpp"

#include <cmath>

#include "brainstack/errors.hpp"

namespace brainstack {

namespace {

// Same-padding split for width-direction kernels; works for even kernels too.
void same_pad(int kernel, int64_t* lo, int64_t* hi) {
  *lo = (kernel - 1) / 2;
  *hi = kernel / 2;
}

}  // namespace

void CNetConfig::validate() const {
  std::string bad;
  auto check = [&bad](bool ok, const char* what) {
    if (!ok) {
      if (!bad.empty()) bad += "; ";
      bad += what;
    }
  };
  check(in_channels >= 1, "in_channels must be >= 1");
  check(time_len >= 1, "time_len must be >= 1");
  check(temporal_kernel >= 1, "temporal_kernel must be >= 1");
  check(temporal_filters >= 1, "temporal_filters must be >= 1");
  check(depth_multiplier >= 1, "depth_multiplier must be >= 1");
  check(separable_kernel >= 1, "separable_kernel must be >= 1");
  check(pool1 >= 1 && pool2 >= 1, "pool sizes must be >= 1");
  check(pool1 >= 1 && pool2 >= 1 && time_len % (pool1 * pool2) == 0,
        "time_len must be divisible by pool1*pool2");
  check(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0,1)");
  check(feature_dim >= 1, "feature_dim must be >= 1");
  check(num_classes >= 2, "num_classes must be >= 2");
  if (!bad.empty()) throw ConfigError("cnet config: " + bad);
}

void CTNetConfig::validate() const {
  std::string bad;
  auto check = [&bad](bool ok, const char* what) {
    if (!ok) {
      if (!bad.empty()) bad += "; ";
      bad += what;
    }
  };
  check(in_channels >= 1, "in_channels must be >= 1");
  check(time_len >= 1, "time_len must be >= 1");
  check(temporal_kernel >= 1, "temporal_kernel must be >= 1");
  check(embed_dim >= 1, "embed_dim must be >= 1");
  check(heads >= 1, "heads must be >= 1");
  check(heads >= 1 && embed_dim % heads == 0, "embed_dim must be divisible by heads");
  check(pool >= 1, "pool must be >= 1");
  check(pool >= 1 && time_len / pool >= 1, "time_len too short for one token");
  check(layers >= 0, "layers must be >= 0");
  check(ff_dim >= 1, "ff_dim must be >= 1");
  check(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0,1)");
  check(feature_dim >= 1, "feature_dim must be >= 1");
  check(num_classes >= 2, "num_classes must be >= 2");
  if (!bad.empty()) throw ConfigError("ctnet config: " + bad);
}

std::vector<Parameter*> Expert::parameters() {
  std::vector<Parameter*> out;
  out.reserve(owned_params_.size());
  for (auto& p : owned_params_) out.push_back(p.get());
  return out;
}

std::vector<std::pair<std::string, Tensor*>> Expert::buffers() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (size_t i = 0; i < owned_states_.size(); ++i) {
    out.emplace_back(state_names_[i] + "/running_mean", &owned_states_[i]->running_mean);
    out.emplace_back(state_names_[i] + "/running_var", &owned_states_[i]->running_var);
  }
  return out;
}

int64_t Expert::parameter_count() {
  int64_t n = 0;
  for (auto& p : owned_params_) n += p->value.numel();
  return n;
}

Parameter* Expert::make_param(const std::string& name, std::vector<int64_t> shape,
                              int64_t fan_in, Rng& rng) {
  std::string id = prefix_ + "/" + name;
  Tensor init(shape);
  Rng r = rng.split(id);
  double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (int64_t i = 0; i < init.numel(); ++i) init[i] = r.uniform(-limit, limit);
  owned_params_.push_back(std::make_unique<Parameter>(id, std::move(init)));
  return owned_params_.back().get();
}

Parameter* Expert::make_const_param(const std::string& name, std::vector<int64_t> shape,
                                    double fill) {
  std::string id = prefix_ + "/" + name;
  owned_params_.push_back(std::make_unique<Parameter>(id, Tensor::full(shape, fill)));
  return owned_params_.back().get();
}

BatchNormState* Expert::make_bn_state(const std::string& name, int64_t channels) {
  owned_states_.push_back(std::make_unique<BatchNormState>(channels));
  state_names_.push_back(prefix_ + "/" + name);
  return owned_states_.back().get();
}

CNet::CNet(const CNetConfig& cfg, const std::string& name_prefix, Rng rng) : cfg_(cfg) {
  cfg_.validate();
  prefix_ = name_prefix;
  int64_t f1 = cfg_.temporal_filters;
  int64_t f2 = f1 * cfg_.depth_multiplier;
  int64_t cn = cfg_.in_channels;
  int64_t flat = f2 * (cfg_.time_len / (cfg_.pool1 * cfg_.pool2));
  conv1_w_ = make_param("conv1/w", {f1, 1, 1, cfg_.temporal_kernel}, cfg_.temporal_kernel, rng);
  bn1_g_ = make_const_param("bn1/gamma", {f1}, 1.0);
  bn1_b_ = make_const_param("bn1/beta", {f1}, 0.0);
  bn1_s_ = make_bn_state("bn1", f1);
  dw_w_ = make_param("dw/w", {f2, 1, cn, 1}, cn, rng);
  bn2_g_ = make_const_param("bn2/gamma", {f2}, 1.0);
  bn2_b_ = make_const_param("bn2/beta", {f2}, 0.0);
  bn2_s_ = make_bn_state("bn2", f2);
  sep_dw_w_ = make_param("sep_dw/w", {f2, 1, 1, cfg_.separable_kernel}, cfg_.separable_kernel, rng);
  sep_pw_w_ = make_param("sep_pw/w", {f2, f2, 1, 1}, f2, rng);
  bn3_g_ = make_const_param("bn3/gamma", {f2}, 1.0);
  bn3_b_ = make_const_param("bn3/beta", {f2}, 0.0);
  bn3_s_ = make_bn_state("bn3", f2);
  feat_w_ = make_param("feature/w", {flat, cfg_.feature_dim}, flat, rng);
  feat_b_ = make_const_param("feature/b", {cfg_.feature_dim}, 0.0);
  head_w_ = make_param("logits/w", {flat, cfg_.num_classes}, flat, rng);
  head_b_ = make_const_param("logits/b", {cfg_.num_classes}, 0.0);
}

ExpertNodes CNet::forward(Graph& g, NodeId x) {
  const Tensor& tx = g.value(x);
  if (tx.rank() != 4 || tx.dim(1) != 1 || tx.dim(2) != cfg_.in_channels ||
      tx.dim(3) != cfg_.time_len) {
    throw ShapeError("cnet: expected (B,1," + std::to_string(cfg_.in_channels) + "," +
                     std::to_string(cfg_.time_len) + ") input, got " + tx.shape_str());
  }
  int64_t B = tx.dim(0);
  int64_t f2 = static_cast<int64_t>(cfg_.temporal_filters) * cfg_.depth_multiplier;

  Conv2dSpec temporal;
  same_pad(cfg_.temporal_kernel, &temporal.pad_w_lo, &temporal.pad_w_hi);
  NodeId h = g.conv2d(x, g.param(*conv1_w_), kNoNode, temporal);
  h = g.batch_norm(h, g.param(*bn1_g_), g.param(*bn1_b_), *bn1_s_);

  Conv2dSpec spatial;
  spatial.groups = cfg_.temporal_filters;
  h = g.conv2d(h, g.param(*dw_w_), kNoNode, spatial);
  h = g.batch_norm(h, g.param(*bn2_g_), g.param(*bn2_b_), *bn2_s_);
  h = g.elu(h);
  h = g.avg_pool_w(h, cfg_.pool1);
  h = g.dropout(h, cfg_.dropout);

  Conv2dSpec sep;
  sep.groups = f2;
  same_pad(cfg_.separable_kernel, &sep.pad_w_lo, &sep.pad_w_hi);
  h = g.conv2d(h, g.param(*sep_dw_w_), kNoNode, sep);
  h = g.conv2d(h, g.param(*sep_pw_w_), kNoNode, Conv2dSpec{});
  h = g.batch_norm(h, g.param(*bn3_g_), g.param(*bn3_b_), *bn3_s_);
  h = g.elu(h);
  h = g.avg_pool_w(h, cfg_.pool2);
  h = g.dropout(h, cfg_.dropout);

  int64_t flat = f2 * (cfg_.time_len / (cfg_.pool1 * cfg_.pool2));
  h = g.reshape(h, {B, flat});
  ExpertNodes out;
  out.feature = g.linear(h, g.param(*feat_w_), g.param(*feat_b_));
  out.logits = g.linear(h, g.param(*head_w_), g.param(*head_b_));
  return out;
}

CTNet::CTNet(const CTNetConfig& cfg, const std::string& name_prefix, Rng rng) : cfg_(cfg) {
  cfg_.validate();
  prefix_ = name_prefix;
  int64_t d = cfg_.embed_dim;
  int64_t c = cfg_.in_channels;
  conv_t_w_ = make_param("patch/conv_t/w", {d, 1, 1, cfg_.temporal_kernel}, cfg_.temporal_kernel,
                         rng);
  conv_s_w_ = make_param("patch/conv_s/w", {d, d, c, 1}, d * c, rng);
  bn_g_ = make_const_param("patch/bn/gamma", {d}, 1.0);
  bn_b_ = make_const_param("patch/bn/beta", {d}, 0.0);
  bn_s_ = make_bn_state("patch/bn", d);
  conv_p_w_ = make_param("patch/conv_p/w", {d, d, 1, 1}, d, rng);
  blocks_.resize(static_cast<size_t>(cfg_.layers));
  for (int l = 0; l < cfg_.layers; ++l) {
    std::string bp = "block" + std::to_string(l);
    Block& b = blocks_[static_cast<size_t>(l)];
    b.ln1_g = make_const_param(bp + "/ln1/gamma", {d}, 1.0);
    b.ln1_b = make_const_param(bp + "/ln1/beta", {d}, 0.0);
    b.wq = make_param(bp + "/attn/wq", {d, d}, d, rng);
    b.bq = make_const_param(bp + "/attn/bq", {d}, 0.0);
    b.wk = make_param(bp + "/attn/wk", {d, d}, d, rng);
    b.bk = make_const_param(bp + "/attn/bk", {d}, 0.0);
    b.wv = make_param(bp + "/attn/wv", {d, d}, d, rng);
    b.bv = make_const_param(bp + "/attn/bv", {d}, 0.0);
    b.wo = make_param(bp + "/attn/wo", {d, d}, d, rng);
    b.bo = make_const_param(bp + "/attn/bo", {d}, 0.0);
    b.ln2_g = make_const_param(bp + "/ln2/gamma", {d}, 1.0);
    b.ln2_b = make_const_param(bp + "/ln2/beta", {d}, 0.0);
    b.ff1_w = make_param(bp + "/ff1/w", {d, cfg_.ff_dim}, d, rng);
    b.ff1_b = make_const_param(bp + "/ff1/b", {cfg_.ff_dim}, 0.0);
    b.ff2_w = make_param(bp + "/ff2/w", {cfg_.ff_dim, d}, cfg_.ff_dim, rng);
    b.ff2_b = make_const_param(bp + "/ff2/b", {d}, 0.0);
  }
  lnf_g_ = make_const_param("ln_final/gamma", {d}, 1.0);
  lnf_b_ = make_const_param("ln_final/beta", {d}, 0.0);
  feat_w_ = make_param("feature/w", {d, cfg_.feature_dim}, d, rng);
  feat_b_ = make_const_param("feature/b", {cfg_.feature_dim}, 0.0);
  head_w_ = make_param("logits/w", {d, cfg_.num_classes}, d, rng);
  head_b_ = make_const_param("logits/b", {cfg_.num_classes}, 0.0);
}

NodeId CTNet::patch_embed(Graph& g, NodeId x) {
  const Tensor& tx = g.value(x);
  if (tx.rank() != 4 || tx.dim(1) != 1 || tx.dim(2) != cfg_.in_channels ||
      tx.dim(3) != cfg_.time_len) {
    throw ShapeError("ctnet: expected (B,1," + std::to_string(cfg_.in_channels) + "," +
                     std::to_string(cfg_.time_len) + ") input, got " + tx.shape_str());
  }
  int64_t B = tx.dim(0);
  int64_t d = cfg_.embed_dim;
  Conv2dSpec temporal;
  same_pad(cfg_.temporal_kernel, &temporal.pad_w_lo, &temporal.pad_w_hi);
  NodeId h = g.conv2d(x, g.param(*conv_t_w_), kNoNode, temporal);
  // Spatial kernel spans all channels, collapsing the channel axis.
  h = g.conv2d(h, g.param(*conv_s_w_), kNoNode, Conv2dSpec{});
  h = g.batch_norm(h, g.param(*bn_g_), g.param(*bn_b_), *bn_s_);
  h = g.elu(h);
  int64_t n_tok = g.value(h).dim(3) / cfg_.pool;
  if (n_tok < 1) {
    throw ShapeError("ctnet: input too short, zero tokens after pooling");
  }
  h = g.avg_pool_w(h, cfg_.pool);
  h = g.conv2d(h, g.param(*conv_p_w_), kNoNode, Conv2dSpec{});
  h = g.reshape(h, {B, d, n_tok});
  return g.permute(h, {0, 2, 1});  // (B, N, D)
}

NodeId CTNet::encode(Graph& g, NodeId tokens) {
  const Tensor& tt = g.value(tokens);
  if (tt.rank() != 3 || tt.dim(2) != cfg_.embed_dim) {
    throw ShapeError("ctnet encode: expected (B,N," + std::to_string(cfg_.embed_dim) +
                     ") tokens, got " + tt.shape_str());
  }
  int64_t B = tt.dim(0), N = tt.dim(1), d = cfg_.embed_dim;
  int64_t H = cfg_.heads, dh = d / H;
  NodeId h = g.reshape(tokens, {B * N, d});
  for (Block& b : blocks_) {
    // Pre-norm multi-head self-attention with residual add.
    NodeId a = g.layer_norm(h, g.param(*b.ln1_g), g.param(*b.ln1_b));
    auto to_heads = [&](NodeId rows) {
      NodeId t = g.reshape(rows, {B, N, H, dh});
      t = g.permute(t, {0, 2, 1, 3});
      return g.reshape(t, {B * H, N, dh});
    };
    NodeId q = to_heads(g.linear(a, g.param(*b.wq), g.param(*b.bq)));
    NodeId k = to_heads(g.linear(a, g.param(*b.wk), g.param(*b.bk)));
    NodeId v = to_heads(g.linear(a, g.param(*b.wv), g.param(*b.bv)));
    NodeId att = g.attention(q, k, v);
    att = g.reshape(att, {B, H, N, dh});
    att = g.permute(att, {0, 2, 1, 3});
    att = g.reshape(att, {B * N, d});
    NodeId o = g.linear(att, g.param(*b.wo), g.param(*b.bo));
    h = g.add(h, o);
    // Pre-norm feedforward with residual add.
    NodeId f = g.layer_norm(h, g.param(*b.ln2_g), g.param(*b.ln2_b));
    f = g.linear(f, g.param(*b.ff1_w), g.param(*b.ff1_b));
    f = g.elu(f);
    f = g.dropout(f, cfg_.dropout);
    f = g.linear(f, g.param(*b.ff2_w), g.param(*b.ff2_b));
    h = g.add(h, f);
  }
  h = g.layer_norm(h, g.param(*lnf_g_), g.param(*lnf_b_));
  return g.reshape(h, {B, N, d});
}

ExpertNodes CTNet::forward(Graph& g, NodeId x) {
  NodeId tokens = patch_embed(g, x);
  NodeId encoded = encode(g, tokens);
  NodeId pooled = g.mean_axis1(encoded);  // (B, D)
  ExpertNodes out;
  out.feature = g.linear(pooled, g.param(*feat_w_), g.param(*feat_b_));
  out.logits = g.linear(pooled, g.param(*head_w_), g.param(*head_b_));
  return out;
}

}  // namespace brainstack
