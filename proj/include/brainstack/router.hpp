// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "brainstack/graph.hpp"
#include "brainstack/rng.hpp"
#include "brainstack/tensor.hpp"

namespace brainstack {

// Shared scoring function h plus the fused classification head g.
struct RouterParams {
  RouterParams(int feature_dim, int num_classes, const std::string& prefix, Rng rng);

  int feature_dim;
  int num_classes;
  Parameter score_w;  // (feature_dim, 1)
  Parameter score_b;  // (1)
  Parameter head_w;   // (feature_dim, num_classes)
  Parameter head_b;   // (num_classes)

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
};

// Numeric single-trial path. All reductions over experts sort their operands
// by value before accumulating, so any permutation of the expert list yields
// bitwise-identical results.
std::vector<double> route_scores(const std::vector<std::vector<double>>& features,
                                 const RouterParams& params);
std::vector<double> routing_weights(const std::vector<double>& scores);
std::vector<double> fuse(const std::vector<std::vector<double>>& features,
                         const std::vector<double>& weights);
std::vector<double> head_logits(const std::vector<double>& fused, const RouterParams& params);
// Lowest index wins ties.
int argmax_index(const std::vector<double>& values);

// Batched graph path used during training.
struct RouterNodes {
  NodeId scores = kNoNode;   // (B, E)
  NodeId weights = kNoNode;  // (B, E) softmax rows
  NodeId fused = kNoNode;    // (B, feature_dim)
  NodeId logits = kNoNode;   // (B, num_classes)
};
RouterNodes route_batch(Graph& g, const std::vector<NodeId>& features, RouterParams& params);

}  // namespace brainstack
