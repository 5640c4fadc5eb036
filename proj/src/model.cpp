// SPDX-License-Identifier: Apache-2.0
#include "brainstack/model.hpp"

#include <algorithm>
#include <cstddef>
#include <map>
#include <set>

#include "brainstack/checkpoint.hpp"
#include "brainstack/errors.hpp"

namespace brainstack {

namespace {

constexpr const char* kVariantNames[] = {
    "full",      "local_only", "homogeneous_cnet", "global_only",
    "homogeneous_ctnet", "no_distill", "no_warmup",
};
constexpr int kNumVariants = 7;

// Round-trips small nonnegative integers and text through f32 exactly.
Tensor scalar_meta(double v) { return Tensor({1}, {v}); }

Tensor text_meta(const std::string& s) {
  Tensor t({static_cast<int64_t>(s.size())});
  for (size_t i = 0; i < s.size(); ++i) {
    t[static_cast<int64_t>(i)] = static_cast<double>(static_cast<unsigned char>(s[i]));
  }
  return t;
}

std::string meta_text(const Tensor& t, const std::string& name) {
  std::string s;
  s.reserve(static_cast<size_t>(t.numel()));
  for (int64_t i = 0; i < t.numel(); ++i) {
    double v = t[i];
    if (v < 0.0 || v > 255.0 || v != static_cast<double>(static_cast<int>(v))) {
      throw FormatError("checkpoint entry '" + name + "' holds a non-byte value");
    }
    s.push_back(static_cast<char>(static_cast<int>(v)));
  }
  return s;
}

int meta_int(double v, const char* what) {
  int i = static_cast<int>(v);
  if (v != static_cast<double>(i)) {
    throw FormatError(std::string("checkpoint meta field ") + what + " is not an integer");
  }
  return i;
}

Tensor cnet_meta(const CNetConfig& c) {
  return Tensor({10}, {static_cast<double>(c.temporal_kernel),
                       static_cast<double>(c.temporal_filters),
                       static_cast<double>(c.depth_multiplier),
                       static_cast<double>(c.separable_kernel), static_cast<double>(c.pool1),
                       static_cast<double>(c.pool2), c.dropout,
                       static_cast<double>(c.feature_dim), static_cast<double>(c.num_classes),
                       static_cast<double>(c.time_len)});
}

Tensor ctnet_meta(const CTNetConfig& c) {
  return Tensor({10}, {static_cast<double>(c.temporal_kernel), static_cast<double>(c.embed_dim),
                       static_cast<double>(c.pool), static_cast<double>(c.layers),
                       static_cast<double>(c.heads), static_cast<double>(c.ff_dim), c.dropout,
                       static_cast<double>(c.feature_dim), static_cast<double>(c.num_classes),
                       static_cast<double>(c.time_len)});
}

CNetConfig cnet_from_meta(const Tensor& t) {
  if (t.numel() != 10) throw FormatError("checkpoint entry '__meta__/cnet' has wrong length");
  CNetConfig c;
  c.temporal_kernel = meta_int(t[0], "cnet.temporal_kernel");
  c.temporal_filters = meta_int(t[1], "cnet.temporal_filters");
  c.depth_multiplier = meta_int(t[2], "cnet.depth_multiplier");
  c.separable_kernel = meta_int(t[3], "cnet.separable_kernel");
  c.pool1 = meta_int(t[4], "cnet.pool1");
  c.pool2 = meta_int(t[5], "cnet.pool2");
  c.dropout = t[6];
  c.feature_dim = meta_int(t[7], "cnet.feature_dim");
  c.num_classes = meta_int(t[8], "cnet.num_classes");
  c.time_len = meta_int(t[9], "cnet.time_len");
  return c;
}

CTNetConfig ctnet_from_meta(const Tensor& t) {
  if (t.numel() != 10) throw FormatError("checkpoint entry '__meta__/ctnet' has wrong length");
  CTNetConfig c;
  c.temporal_kernel = meta_int(t[0], "ctnet.temporal_kernel");
  c.embed_dim = meta_int(t[1], "ctnet.embed_dim");
  c.pool = meta_int(t[2], "ctnet.pool");
  c.layers = meta_int(t[3], "ctnet.layers");
  c.heads = meta_int(t[4], "ctnet.heads");
  c.ff_dim = meta_int(t[5], "ctnet.ff_dim");
  c.dropout = t[6];
  c.feature_dim = meta_int(t[7], "ctnet.feature_dim");
  c.num_classes = meta_int(t[8], "ctnet.num_classes");
  c.time_len = meta_int(t[9], "ctnet.time_len");
  return c;
}

}  // namespace

const char* variant_name(Variant v) {
  int i = static_cast<int>(v);
  if (i < 0 || i >= kNumVariants) throw ConfigError("unknown variant index");
  return kVariantNames[i];
}

bool variant_from_name(const std::string& name, Variant* out) {
  for (int i = 0; i < kNumVariants; ++i) {
    if (name == kVariantNames[i]) {
      *out = static_cast<Variant>(i);
      return true;
    }
  }
  return false;
}

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
  const int C = cfg_.montage.montage.channel_count();
  std::vector<std::string> bad = validate_partition(cfg_.montage.partition, C);
  if (!bad.empty()) {
    std::string msg = "model montage partition invalid: ";
    for (size_t i = 0; i < bad.size(); ++i) {
      if (i) msg += "; ";
      msg += bad[i];
    }
    throw ConfigError(msg);
  }
  if (cfg_.cnet.feature_dim != cfg_.ctnet.feature_dim) {
    throw ConfigError("expert configs disagree on feature_dim");
  }
  if (cfg_.cnet.num_classes != cfg_.ctnet.num_classes) {
    throw ConfigError("expert configs disagree on num_classes");
  }
  if (cfg_.cnet.time_len != cfg_.ctnet.time_len) {
    throw ConfigError("expert configs disagree on time_len");
  }

  Rng root(cfg_.init_seed);
  has_global_ = cfg_.variant != Variant::kLocalOnly;
  if (has_global_) {
    ExpertSlot slot;
    slot.column = "global";
    slot.is_global = true;
    Rng rng = root.split("global");
    if (cfg_.variant == Variant::kHomogeneousCNet) {
      CNetConfig c = cfg_.cnet;
      c.in_channels = C;
      slot.expert = std::make_unique<CNet>(c, "global", rng);
    } else {
      CTNetConfig c = cfg_.ctnet;
      c.in_channels = C;
      slot.expert = std::make_unique<CTNet>(c, "global", rng);
    }
    slots_.push_back(std::move(slot));
  }
  if (cfg_.variant != Variant::kGlobalOnly) {
    Rng regional = root.split("regional");
    for (int r = 0; r < kNumRegions; ++r) {
      Region region = static_cast<Region>(r);
      ExpertSlot slot;
      slot.column = region_column(region);
      slot.is_global = false;
      slot.region = region;
      int cn = static_cast<int>(cfg_.montage.partition.of(region).size());
      std::string prefix = "regional/" + slot.column;
      Rng rng = regional.split(slot.column);
      if (cfg_.variant == Variant::kHomogeneousCTNet) {
        CTNetConfig c = cfg_.ctnet;
        c.in_channels = cn;
        slot.expert = std::make_unique<CTNet>(c, prefix, rng);
      } else {
        CNetConfig c = cfg_.cnet;
        c.in_channels = cn;
        slot.expert = std::make_unique<CNet>(c, prefix, rng);
      }
      slots_.push_back(std::move(slot));
    }
  }
  if (slots_.empty()) throw ConfigError("variant leaves the model with no experts");
  router_ = std::make_unique<RouterParams>(cfg_.cnet.feature_dim, cfg_.cnet.num_classes,
                                           "router", root.split("router"));
}

BatchNodes Model::forward(Graph& g, const Tensor& x) {
  const int64_t C = cfg_.montage.montage.channel_count();
  const int64_t T = cfg_.cnet.time_len;
  if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != C || x.dim(3) != T) {
    throw ShapeError("model input must be (B,1," + std::to_string(C) + "," + std::to_string(T) +
                     "), got " + x.shape_str());
  }
  const int64_t B = x.dim(0);

  BatchNodes out;
  for (ExpertSlot& slot : slots_) {
    NodeId xin;
    if (slot.is_global) {
      xin = g.input(x);
    } else {
      const std::vector<int>& idx = cfg_.montage.partition.of(slot.region);
      const int64_t n = static_cast<int64_t>(idx.size());
      Tensor sub({B, 1, n, T});
      for (int64_t b = 0; b < B; ++b) {
        for (int64_t j = 0; j < n; ++j) {
          const double* src = x.data() + (b * C + idx[static_cast<size_t>(j)]) * T;
          double* dst = sub.data() + (b * n + j) * T;
          std::copy(src, src + T, dst);
        }
      }
      xin = g.input(std::move(sub));
    }
    ExpertNodes en = slot.expert->forward(g, xin);
    out.features.push_back(en.feature);
    out.logits.push_back(en.logits);
  }
  out.router = route_batch(g, out.features, *router_);
  size_t r0 = 0;
  if (has_global_) {
    out.global_logits = out.logits[0];
    r0 = 1;
  }
  out.regional_logits.assign(out.logits.begin() + static_cast<std::ptrdiff_t>(r0),
                             out.logits.end());
  return out;
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out;
  for (ExpertSlot& slot : slots_) {
    for (Parameter* p : slot.expert->parameters()) out.push_back(p);
  }
  for (Parameter* p : router_->parameters()) out.push_back(p);
  return out;
}

std::vector<Parameter*> Model::global_parameters() {
  if (!has_global_) return {};
  return slots_[0].expert->parameters();
}

std::vector<std::pair<std::string, Tensor*>> Model::buffers() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (ExpertSlot& slot : slots_) {
    for (auto& b : slot.expert->buffers()) out.push_back(std::move(b));
  }
  return out;
}

void Model::save(const std::string& path) const {
  Model* self = const_cast<Model*>(this);
  std::vector<NamedTensor> entries;
  entries.push_back({"__meta__/format", scalar_meta(1.0)});
  entries.push_back({"__meta__/variant", scalar_meta(static_cast<double>(
                                             static_cast<int>(cfg_.variant)))});
  entries.push_back({"__meta__/montage_text", text_meta(montage_to_text(cfg_.montage))});
  entries.push_back({"__meta__/cnet", cnet_meta(cfg_.cnet)});
  entries.push_back({"__meta__/ctnet", ctnet_meta(cfg_.ctnet)});
  for (Parameter* p : self->parameters()) entries.push_back({p->id, p->value});
  for (auto& b : self->buffers()) entries.push_back({b.first, *b.second});
  save_checkpoint(path, entries);
}

Model Model::load(const std::string& path) {
  std::vector<NamedTensor> entries = load_checkpoint(path);
  std::map<std::string, const Tensor*> by_name;
  for (const NamedTensor& e : entries) by_name[e.name] = &e.value;

  auto need = [&](const std::string& name) -> const Tensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw FormatError("checkpoint is missing entry '" + name + "'");
    }
    return *it->second;
  };

  const Tensor& format = need("__meta__/format");
  if (format.numel() != 1 || format[0] != 1.0) {
    throw FormatError("checkpoint has an unsupported model layout tag");
  }
  const Tensor& variant_t = need("__meta__/variant");
  if (variant_t.numel() != 1) throw FormatError("checkpoint entry '__meta__/variant' malformed");
  int vi = meta_int(variant_t[0], "variant");
  if (vi < 0 || vi >= kNumVariants) {
    throw FormatError("checkpoint names unknown variant index " + std::to_string(vi));
  }

  ModelConfig cfg;
  cfg.variant = static_cast<Variant>(vi);
  cfg.montage = parse_montage(meta_text(need("__meta__/montage_text"), "__meta__/montage_text"));
  cfg.cnet = cnet_from_meta(need("__meta__/cnet"));
  cfg.ctnet = ctnet_from_meta(need("__meta__/ctnet"));
  cfg.init_seed = 0;

  Model m(cfg);
  std::set<std::string> used = {"__meta__/format", "__meta__/variant", "__meta__/montage_text",
                                "__meta__/cnet", "__meta__/ctnet"};
  for (Parameter* p : m.parameters()) {
    const Tensor& t = need(p->id);
    if (!t.same_shape(p->value)) {
      throw FormatError("checkpoint entry '" + p->id + "' has shape " + t.shape_str() +
                        ", model expects " + p->value.shape_str());
    }
    p->value = t;
    used.insert(p->id);
  }
  for (auto& b : m.buffers()) {
    const Tensor& t = need(b.first);
    if (!t.same_shape(*b.second)) {
      throw FormatError("checkpoint entry '" + b.first + "' has shape " + t.shape_str() +
                        ", model expects " + b.second->shape_str());
    }
    *b.second = t;
    used.insert(b.first);
  }
  for (const NamedTensor& e : entries) {
    if (!used.count(e.name)) {
      throw FormatError("checkpoint holds entry '" + e.name + "' that the model does not use");
    }
  }
  return m;
}

}  // namespace brainstack
