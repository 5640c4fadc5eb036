// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "brainstack/errors.hpp"
#include "brainstack/tensor.hpp"

namespace brainstack {

// Learnable tensor. Owned by a model, referenced by graphs. The same
// Parameter may appear as a leaf in several places of one graph; backward
// accumulates into grad across all of them.
struct Parameter {
  std::string id;
  Tensor value;
  Tensor grad;
  Tensor momentum;

  Parameter(std::string id_, Tensor init)
      : id(std::move(id_)),
        value(std::move(init)),
        grad(Tensor::zeros(value.shape())),
        momentum(Tensor::zeros(value.shape())) {}

  Parameter(const Parameter&) = delete;
  Parameter& operator=(const Parameter&) = delete;
  Parameter(Parameter&&) = default;
  Parameter& operator=(Parameter&&) = default;
};

// Running statistics for batch normalization. Not learnable; updated during
// train-mode forward passes, read during eval-mode passes.
struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;

  explicit BatchNormState(int64_t channels)
      : running_mean(Tensor::zeros({channels})),
        running_var(Tensor::full({channels}, 1.0)) {}
};

enum class Mode { kTrain, kEval };

using NodeId = int32_t;
inline constexpr NodeId kNoNode = -1;

struct Conv2dSpec {
  int64_t groups = 1;
  int64_t pad_h = 0;
  int64_t pad_w_lo = 0;
  int64_t pad_w_hi = 0;
};

// Tape-style reverse-mode graph. Every op evaluates eagerly when the node is
// created; backward() replays the tape in reverse exactly once.
class Graph {
 public:
  explicit Graph(Mode mode = Mode::kEval, uint64_t dropout_seed = 0)
      : mode_(mode), dropout_seed_(dropout_seed) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Mode mode() const { return mode_; }
  size_t num_nodes() const { return nodes_.size(); }

  // Leaves.
  NodeId input(Tensor value);        // constant; no gradient tracked
  NodeId param(Parameter& p);        // gradient accumulates into p.grad

  // Elementwise and linear algebra.
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double c);
  NodeId matmul(NodeId a, NodeId b);                  // (m,k)x(k,n)
  NodeId linear(NodeId x, NodeId w, NodeId b);        // (n,in)x(in,out)+bias

  // Structured ops.
  NodeId conv2d(NodeId x, NodeId w, NodeId bias, const Conv2dSpec& spec);
  NodeId batch_norm(NodeId x, NodeId gamma, NodeId beta, BatchNormState& state,
                    double eps = 1e-5, double momentum = 0.1);
  NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps = 1e-5);
  NodeId elu(NodeId x);
  NodeId softmax(NodeId x);                           // along last axis
  NodeId avg_pool_w(NodeId x, int64_t pool);          // window == stride, floor
  NodeId dropout(NodeId x, double rate);
  NodeId reshape(NodeId x, std::vector<int64_t> shape);
  NodeId permute(NodeId x, std::vector<int> perm);
  NodeId mean_all(NodeId x);                          // -> scalar
  NodeId mean_axis1(NodeId x);                        // (B,N,D) -> (B,D)
  NodeId stack_cols(const std::vector<NodeId>& cols); // each (B,1) -> (B,E)
  NodeId select_col(NodeId x, int64_t col);           // (B,E) -> (B,1)
  NodeId mul_col(NodeId x, NodeId s);                 // (B,D)*(B,1)

  // Scaled dot-product attention over (G,N,dh) stacks of rows.
  NodeId attention(NodeId q, NodeId k, NodeId v);
  // Row-softmax probabilities saved by the attention op, shape (G,N,N).
  const Tensor& attention_probs(NodeId attn_node) const;

  // Losses.
  NodeId cross_entropy(NodeId logits, const std::vector<int>& labels);
  // Mean over rows of KL(softmax(teacher/T) || softmax(student/T)). The
  // teacher operand is treated as a constant: no gradient flows into it.
  NodeId kl_softened(NodeId student, NodeId teacher, double temperature);
  NodeId detach(NodeId x);

  const Tensor& value(NodeId id) const;
  const Tensor& grad(NodeId id) const;  // valid after backward()

  // Diagnostics: when enabled, every elu call stores a copy of its input
  // tensor, in call order. elu has a curvature break at 0, so probes that
  // rely on smoothness need to see how close those inputs sit to it.
  void record_elu_inputs(bool on) { record_elu_ = on; }
  const std::vector<Tensor>& elu_inputs() const { return elu_inputs_; }

  // Reverse pass from a scalar node. Callable once per graph.
  void backward(NodeId out);

 private:
  struct Node {
    Tensor val;
    Tensor grad;
    Tensor extra;  // op-specific saved state (attention probabilities)
    std::function<void()> back;
    bool needs_grad = false;
    const char* op = "";
  };

  NodeId push(const char* op, Tensor val, bool needs_grad, std::function<void()> back);
  const Node& node(NodeId id) const;
  Node& node_mut(NodeId id);
  bool needs(NodeId id) const { return node(id).needs_grad; }
  Tensor& grad_of(NodeId id) { return nodes_[static_cast<size_t>(id)].grad; }
  const Tensor& val_of(NodeId id) const { return nodes_[static_cast<size_t>(id)].val; }
  void check_id(NodeId id, const char* op) const;

  Mode mode_;
  uint64_t dropout_seed_;
  std::vector<Node> nodes_;
  bool ran_backward_ = false;
  int64_t dropout_count_ = 0;
  bool record_elu_ = false;
  std::vector<Tensor> elu_inputs_;
};

}  // namespace brainstack
