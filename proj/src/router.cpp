// SPDX-License-Identifier: Apache-2.0
#include "brainstack/router.hpp"

#include <algorithm>
#include <cmath>

#include "brainstack/errors.hpp"

namespace brainstack {

namespace {

Tensor uniform_init(Rng rng, std::vector<int64_t> shape, int fan_in) {
  Tensor t(std::move(shape));
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

// Order-independent sum: accumulate in ascending value order.
double sorted_sum(std::vector<double> terms) {
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += t;
  return s;
}

}  // namespace

RouterParams::RouterParams(int feature_dim_, int num_classes_, const std::string& prefix, Rng rng)
    : feature_dim(feature_dim_),
      num_classes(num_classes_),
      score_w(prefix + "/score/w", uniform_init(rng.split(prefix + "/score/w"), {feature_dim_, 1}, feature_dim_)),
      score_b(prefix + "/score/b", Tensor::zeros({1})),
      head_w(prefix + "/head/w", uniform_init(rng.split(prefix + "/head/w"), {feature_dim_, num_classes_}, feature_dim_)),
      head_b(prefix + "/head/b", Tensor::zeros({num_classes_})) {
  if (feature_dim_ <= 0 || num_classes_ <= 0)
    throw ConfigError("router params: feature_dim and num_classes must be positive");
}

std::vector<Parameter*> RouterParams::parameters() {
  return {&score_w, &score_b, &head_w, &head_b};
}

std::vector<const Parameter*> RouterParams::parameters() const {
  return {&score_w, &score_b, &head_w, &head_b};
}

std::vector<double> route_scores(const std::vector<std::vector<double>>& features,
                                 const RouterParams& params) {
  if (features.empty()) throw ConfigError("route_scores: expert feature list is empty");
  const size_t d = static_cast<size_t>(params.feature_dim);
  std::vector<double> scores(features.size());
  for (size_t i = 0; i < features.size(); ++i) {
    if (features[i].size() != d)
      throw ShapeError("route_scores: feature " + std::to_string(i) + " has length " +
                       std::to_string(features[i].size()) + ", expected " + std::to_string(d));
    double s = params.score_b.value[0];
    for (size_t k = 0; k < d; ++k) s += params.score_w.value[k] * features[i][k];
    scores[i] = s;
  }
  return scores;
}

std::vector<double> routing_weights(const std::vector<double>& scores) {
  if (scores.empty()) throw ConfigError("routing_weights: score list is empty");
  double m = scores[0];
  for (double s : scores) m = std::max(m, s);
  std::vector<double> e(scores.size());
  for (size_t i = 0; i < scores.size(); ++i) e[i] = std::exp(scores[i] - m);
  double denom = sorted_sum(e);
  std::vector<double> w(scores.size());
  for (size_t i = 0; i < scores.size(); ++i) w[i] = e[i] / denom;
  return w;
}

std::vector<double> fuse(const std::vector<std::vector<double>>& features,
                         const std::vector<double>& weights) {
  if (features.size() != weights.size())
    throw ShapeError("fuse: " + std::to_string(features.size()) + " features vs " +
                     std::to_string(weights.size()) + " weights");
  if (features.empty()) throw ConfigError("fuse: expert feature list is empty");
  const size_t d = features[0].size();
  std::vector<double> fused(d, 0.0);
  std::vector<double> terms(features.size());
  for (size_t k = 0; k < d; ++k) {
    for (size_t i = 0; i < features.size(); ++i) {
      if (features[i].size() != d)
        throw ShapeError("fuse: feature " + std::to_string(i) + " has length " +
                         std::to_string(features[i].size()) + ", expected " + std::to_string(d));
      terms[i] = weights[i] * features[i][k];
    }
    fused[k] = sorted_sum(terms);
  }
  return fused;
}

std::vector<double> head_logits(const std::vector<double>& fused, const RouterParams& params) {
  if (fused.size() != static_cast<size_t>(params.feature_dim))
    throw ShapeError("head_logits: fused length " + std::to_string(fused.size()) +
                     ", expected " + std::to_string(params.feature_dim));
  std::vector<double> logits(params.num_classes);
  for (int c = 0; c < params.num_classes; ++c) {
    double s = params.head_b.value[static_cast<size_t>(c)];
    for (int k = 0; k < params.feature_dim; ++k)
      s += params.head_w.value[static_cast<size_t>(k * params.num_classes + c)] * fused[static_cast<size_t>(k)];
    logits[static_cast<size_t>(c)] = s;
  }
  return logits;
}

int argmax_index(const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("argmax_index: empty vector");
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i)
    if (values[static_cast<size_t>(i)] > values[static_cast<size_t>(best)]) best = i;
  return best;
}

RouterNodes route_batch(Graph& g, const std::vector<NodeId>& features, RouterParams& params) {
  if (features.empty()) throw ConfigError("route_batch: expert feature list is empty");
  RouterNodes out;
  NodeId sw = g.param(params.score_w);
  NodeId sb = g.param(params.score_b);
  std::vector<NodeId> cols(features.size());
  for (size_t i = 0; i < features.size(); ++i) cols[i] = g.linear(features[i], sw, sb);
  out.scores = g.stack_cols(cols);
  out.weights = g.softmax(out.scores);
  NodeId fused = kNoNode;
  for (size_t i = 0; i < features.size(); ++i) {
    NodeId weighted = g.mul_col(features[i], g.select_col(out.weights, static_cast<int64_t>(i)));
    fused = (fused == kNoNode) ? weighted : g.add(fused, weighted);
  }
  out.fused = fused;
  out.logits = g.linear(out.fused, g.param(params.head_w), g.param(params.head_b));
  return out;
}

}  // namespace brainstack
