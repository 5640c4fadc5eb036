// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "brainstack/data.hpp"
#include "brainstack/experts.hpp"
#include "brainstack/montage.hpp"
#include "brainstack/router.hpp"

namespace brainstack {

// Architecture variants: which experts exist and, for the homogeneous pair,
// which family fills each slot. Distillation/warm-up variants share the full
// architecture and differ only in schedule overrides (see variant_schedule).
enum class Variant : int {
  kFull = 0,
  kLocalOnly,
  kHomogeneousCNet,
  kGlobalOnly,
  kHomogeneousCTNet,
  kNoDistill,
  kNoWarmup,
};

const char* variant_name(Variant v);
bool variant_from_name(const std::string& name, Variant* out);

struct ModelConfig {
  MontageSpec montage;
  CNetConfig cnet;    // template; in_channels is set per slot
  CTNetConfig ctnet;  // template; in_channels is set per slot
  Variant variant = Variant::kFull;
  uint64_t init_seed = 0;
};

struct ExpertSlot {
  std::string column;  // "global" or the region column name
  bool is_global = false;
  Region region = Region::kPrefrontal;  // meaningful when !is_global
  std::unique_ptr<Expert> expert;
};

struct BatchNodes {
  std::vector<NodeId> features;  // per slot, (B, D_route)
  std::vector<NodeId> logits;    // per slot, (B, K)
  RouterNodes router;
  NodeId global_logits = kNoNode;        // kNoNode when the variant has no global expert
  std::vector<NodeId> regional_logits;   // empty when the variant has none
};

// The expert ensemble plus routing gate for one variant. Slot order is the
// global expert first (when present), then the seven regions in canonical
// order; every region must hold at least one montage channel.
class Model {
 public:
  explicit Model(ModelConfig cfg);

  // x is a z-scored batch (B, 1, C, T); builds every expert on its own
  // channel slice plus the router over the resulting features.
  BatchNodes forward(Graph& g, const Tensor& x);

  const ModelConfig& config() const { return cfg_; }
  const std::vector<ExpertSlot>& slots() const { return slots_; }
  RouterParams& router() { return *router_; }
  bool has_global() const { return has_global_; }
  int num_classes() const { return cfg_.cnet.num_classes; }
  int feature_dim() const { return cfg_.cnet.feature_dim; }

  std::vector<Parameter*> parameters();         // experts + router
  std::vector<Parameter*> global_parameters();  // empty when no global slot
  std::vector<std::pair<std::string, Tensor*>> buffers();  // named BN stats

  // Checkpoint layout: every parameter by id, every batch-norm buffer by
  // name, plus reserved __meta__/ entries (variant, montage text, expert
  // hyperparameters) that make the file self-describing for reloads.
  void save(const std::string& path) const;
  static Model load(const std::string& path);

 private:
  ModelConfig cfg_;
  bool has_global_ = false;
  std::vector<ExpertSlot> slots_;
  std::unique_ptr<RouterParams> router_;
};

}  // namespace brainstack
