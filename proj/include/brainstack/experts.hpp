// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "brainstack/graph.hpp"
#include "brainstack/rng.hpp"

namespace brainstack {

// Compact convolutional regional expert.
struct CNetConfig {
  int in_channels = 2;       // C_n
  int time_len = 256;        // T
  int temporal_kernel = 64;
  int temporal_filters = 8;  // F1
  int depth_multiplier = 2;  // Dm
  int separable_kernel = 16;
  int pool1 = 4;
  int pool2 = 8;
  double dropout = 0.25;
  int feature_dim = 48;      // D_route
  int num_classes = 4;       // K

  void validate() const;
};

// Convolutional patch embedding + transformer global expert.
struct CTNetConfig {
  int in_channels = 16;      // C (spatial kernel spans all of them)
  int time_len = 256;        // T
  int temporal_kernel = 32;
  int embed_dim = 32;        // D
  int pool = 8;              // patch window == stride
  int layers = 2;            // L
  int heads = 4;             // H
  int ff_dim = 64;
  double dropout = 0.25;
  int feature_dim = 48;      // D_route
  int num_classes = 4;       // K

  void validate() const;
  int num_tokens() const { return time_len / pool; }
};

struct ExpertNodes {
  NodeId feature = kNoNode;  // (B, D_route)
  NodeId logits = kNoNode;   // (B, K)
};

// Common interface of both expert families. Input node shape is (B,1,C_e,T)
// where C_e is the expert's channel count.
class Expert {
 public:
  virtual ~Expert() = default;
  virtual ExpertNodes forward(Graph& g, NodeId x) = 0;
  virtual int in_channels() const = 0;
  virtual int feature_dim() const = 0;
  virtual int num_classes() const = 0;

  std::vector<Parameter*> parameters();
  // Batch-norm running statistics, named for checkpointing.
  std::vector<std::pair<std::string, Tensor*>> buffers();
  int64_t parameter_count();

 protected:
  Parameter* make_param(const std::string& name, std::vector<int64_t> shape, int64_t fan_in,
                        Rng& rng);
  Parameter* make_const_param(const std::string& name, std::vector<int64_t> shape, double fill);
  BatchNormState* make_bn_state(const std::string& name, int64_t channels);

  std::string prefix_;
  std::vector<std::unique_ptr<Parameter>> owned_params_;
  std::vector<std::unique_ptr<BatchNormState>> owned_states_;
  std::vector<std::string> state_names_;
};

class CNet : public Expert {
 public:
  // Parameters are initialized deterministically from (cfg, rng). The name
  // prefix keys checkpoint entries, so it must be unique per expert.
  CNet(const CNetConfig& cfg, const std::string& name_prefix, Rng rng);

  ExpertNodes forward(Graph& g, NodeId x) override;
  int in_channels() const override { return cfg_.in_channels; }
  int feature_dim() const override { return cfg_.feature_dim; }
  int num_classes() const override { return cfg_.num_classes; }
  const CNetConfig& config() const { return cfg_; }

 private:
  CNetConfig cfg_;
  Parameter* conv1_w_;
  Parameter* bn1_g_;
  Parameter* bn1_b_;
  BatchNormState* bn1_s_;
  Parameter* dw_w_;
  Parameter* bn2_g_;
  Parameter* bn2_b_;
  BatchNormState* bn2_s_;
  Parameter* sep_dw_w_;
  Parameter* sep_pw_w_;
  Parameter* bn3_g_;
  Parameter* bn3_b_;
  BatchNormState* bn3_s_;
  Parameter* feat_w_;
  Parameter* feat_b_;
  Parameter* head_w_;
  Parameter* head_b_;
};

class CTNet : public Expert {
 public:
  CTNet(const CTNetConfig& cfg, const std::string& name_prefix, Rng rng);

  ExpertNodes forward(Graph& g, NodeId x) override;
  int in_channels() const override { return cfg_.in_channels; }
  int feature_dim() const override { return cfg_.feature_dim; }
  int num_classes() const override { return cfg_.num_classes; }
  const CTNetConfig& config() const { return cfg_; }

  // Token sequence (B, N_tok, D) after the convolutional patch embedding.
  NodeId patch_embed(Graph& g, NodeId x);
  // Transformer stack over tokens, (B, N_tok, D) -> (B, N_tok, D).
  NodeId encode(Graph& g, NodeId tokens);

 private:
  struct Block {
    Parameter* ln1_g;
    Parameter* ln1_b;
    Parameter* wq;
    Parameter* bq;
    Parameter* wk;
    Parameter* bk;
    Parameter* wv;
    Parameter* bv;
    Parameter* wo;
    Parameter* bo;
    Parameter* ln2_g;
    Parameter* ln2_b;
    Parameter* ff1_w;
    Parameter* ff1_b;
    Parameter* ff2_w;
    Parameter* ff2_b;
  };

  CTNetConfig cfg_;
  Parameter* conv_t_w_;
  Parameter* conv_s_w_;
  Parameter* bn_g_;
  Parameter* bn_b_;
  BatchNormState* bn_s_;
  Parameter* conv_p_w_;
  std::vector<Block> blocks_;
  Parameter* lnf_g_;
  Parameter* lnf_b_;
  Parameter* feat_w_;
  Parameter* feat_b_;
  Parameter* head_w_;
  Parameter* head_b_;
};

}  // namespace brainstack
