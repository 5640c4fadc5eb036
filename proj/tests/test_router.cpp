// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "brainstack/graph.hpp"
#include "brainstack/rng.hpp"
#include "brainstack/router.hpp"
#include "doctest.h"

using namespace brainstack;

namespace {

RouterParams make_params(int feature_dim, int num_classes, uint64_t seed) {
  return RouterParams(feature_dim, num_classes, "router", Rng(seed));
}

std::vector<std::vector<double>> random_features(int E, int D, Rng& rng) {
  std::vector<std::vector<double>> fs(static_cast<size_t>(E));
  for (auto& f : fs) {
    f.resize(static_cast<size_t>(D));
    for (double& x : f) x = rng.uniform(-3.0, 3.0);
  }
  return fs;
}

}  // namespace

TEST_CASE("scores come from one linear map shared across experts") {
  RouterParams p = make_params(3, 4, 1);
  p.score_w.value.fill(0.0);
  p.score_b.value.fill(0.0);
  std::vector<std::vector<double>> fs = {{1, 2, 3}, {-4, 0, 9}, {0.5, 0.5, 0.5}};
  for (double s : route_scores(fs, p)) CHECK(s == 0.0);

  // First-coordinate selector.
  p.score_w.value[0] = 1.0;
  std::vector<double> sel = route_scores({{1, 7, 7}, {2, -7, 0}, {3, 0, 0}}, p);
  CHECK(sel == std::vector<double>{1.0, 2.0, 3.0});

  RouterParams q = make_params(3, 4, 2);
  std::vector<double> same = route_scores({{1, 2, 3}, {1, 2, 3}, {1, 2, 3}}, q);
  CHECK(same[0] == same[1]);
  CHECK(same[1] == same[2]);

  CHECK_THROWS_AS(route_scores({{1, 2, 3}, {1, 2}}, q), ShapeError);
  CHECK_THROWS_AS(route_scores({}, q), ConfigError);
}

TEST_CASE("routing weights are a stable softmax of the scores") {
  std::vector<double> uniform = routing_weights(std::vector<double>(8, 1.7));
  for (double a : uniform) CHECK(a == doctest::Approx(0.125).epsilon(1e-12));

  std::vector<double> two = routing_weights({0.0, std::log(2.0)});
  CHECK(two[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(two[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  std::vector<double> s = {0.3, -1.2, 4.0, 0.0, 2.5};
  std::vector<double> shifted = s;
  for (double& x : shifted) x += 123.0;
  std::vector<double> a = routing_weights(s);
  std::vector<double> b = routing_weights(shifted);
  for (size_t i = 0; i < s.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));

  // Max-shifting keeps huge scores representable.
  std::vector<double> big = routing_weights({1000.0, 1000.0 + std::log(3.0)});
  CHECK(big[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(big[1] == doctest::Approx(0.75).epsilon(1e-12));

  CHECK_THROWS_AS(routing_weights({}), ConfigError);
}

TEST_CASE("weights form a probability vector on a thousand random trials") {
  Rng rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    int E = 2 + static_cast<int>(rng.below(7));
    std::vector<double> scores(static_cast<size_t>(E));
    for (double& s : scores) s = rng.uniform(-30.0, 30.0);
    std::vector<double> alpha = routing_weights(scores);
    double sum = 0.0;
    for (double a : alpha) {
      CHECK(a >= 0.0);
      sum += a;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);
  }
}

TEST_CASE("fusion is the convex combination of expert features") {
  Rng rng(5);
  std::vector<std::vector<double>> fs = random_features(4, 6, rng);

  // One-hot weights select that expert's feature bitwise.
  for (size_t k = 0; k < fs.size(); ++k) {
    std::vector<double> alpha(fs.size(), 0.0);
    alpha[k] = 1.0;
    CHECK(fuse(fs, alpha) == fs[k]);
  }

  std::vector<double> mid = fuse({{0, 2}, {2, 0}}, {0.5, 0.5});
  CHECK(mid == std::vector<double>{1.0, 1.0});

  std::vector<std::vector<double>> same(5, fs[0]);
  std::vector<double> alpha = routing_weights({0.1, 0.2, 0.3, 0.4, 0.5});
  std::vector<double> fused = fuse(same, alpha);
  for (size_t j = 0; j < fs[0].size(); ++j) {
    CHECK(fused[j] == doctest::Approx(fs[0][j]).epsilon(1e-12));
  }

  CHECK_THROWS_AS(fuse(fs, {0.5, 0.5}), ShapeError);
  CHECK_THROWS_AS(fuse({{1.0, 2.0}, {1.0}}, {0.5, 0.5}), ShapeError);
  CHECK_THROWS_AS(fuse({}, {}), ConfigError);
}

TEST_CASE("prediction is an argmax with lowest-index tie-break") {
  RouterParams p = make_params(2, 3, 9);
  p.head_w.value.fill(0.0);
  p.head_b.value[0] = -1.0;
  p.head_b.value[1] = 2.0;
  p.head_b.value[2] = 0.5;
  std::vector<double> logits = head_logits({0.3, -0.7}, p);
  CHECK(logits == std::vector<double>{-1.0, 2.0, 0.5});
  CHECK(argmax_index(logits) == 1);

  CHECK(argmax_index({1.0, 3.0, 3.0, 0.0}) == 1);
  CHECK(argmax_index({5.0, 5.0, 5.0}) == 0);

  std::vector<double> shifted = logits;
  for (double& x : shifted) x += 42.0;
  CHECK(argmax_index(shifted) == argmax_index(logits));

  CHECK_THROWS_AS(head_logits({0.3}, p), ShapeError);
  CHECK_THROWS_AS(argmax_index({}), ConfigError);
}

TEST_CASE("permuting the experts permutes alpha and leaves the fusion bitwise unchanged") {
  Rng rng(13);
  RouterParams p = make_params(16, 4, 14);
  for (int round = 0; round < 20; ++round) {
    std::vector<std::vector<double>> fs = random_features(8, 16, rng);
    std::vector<double> alpha = routing_weights(route_scores(fs, p));
    std::vector<double> fused = fuse(fs, alpha);

    std::vector<size_t> perm(fs.size());
    std::iota(perm.begin(), perm.end(), size_t{0});
    rng.shuffle(perm);
    std::vector<std::vector<double>> pfs(fs.size());
    for (size_t i = 0; i < fs.size(); ++i) pfs[i] = fs[perm[i]];

    std::vector<double> palpha = routing_weights(route_scores(pfs, p));
    std::vector<double> pfused = fuse(pfs, palpha);
    for (size_t i = 0; i < fs.size(); ++i) CHECK(palpha[i] == alpha[perm[i]]);
    CHECK(pfused == fused);
  }
}

TEST_CASE("the batched graph path agrees with the single-trial path") {
  int B = 5, E = 3, D = 7, K = 4;
  Rng rng(21);
  RouterParams p = make_params(D, K, 22);

  std::vector<Tensor> mats;
  for (int e = 0; e < E; ++e) {
    Tensor m({B, D});
    for (int64_t i = 0; i < m.numel(); ++i) m[i] = rng.uniform(-2.0, 2.0);
    mats.push_back(m);
  }

  Graph g(Mode::kEval, 0);
  std::vector<NodeId> nodes;
  for (const Tensor& m : mats) nodes.push_back(g.input(m));
  RouterNodes out = route_batch(g, nodes, p);
  REQUIRE(g.value(out.weights).shape() == std::vector<int64_t>{B, E});
  REQUIRE(g.value(out.fused).shape() == std::vector<int64_t>{B, D});
  REQUIRE(g.value(out.logits).shape() == std::vector<int64_t>{B, K});
  Tensor weights = g.value(out.weights);
  Tensor fused = g.value(out.fused);
  Tensor logits = g.value(out.logits);

  for (int b = 0; b < B; ++b) {
    std::vector<std::vector<double>> fs(static_cast<size_t>(E));
    for (int e = 0; e < E; ++e) {
      fs[static_cast<size_t>(e)].assign(mats[static_cast<size_t>(e)].data() + b * D,
                                        mats[static_cast<size_t>(e)].data() + (b + 1) * D);
    }
    std::vector<double> alpha = routing_weights(route_scores(fs, p));
    std::vector<double> f = fuse(fs, alpha);
    std::vector<double> l = head_logits(f, p);
    double row_sum = 0.0;
    for (int e = 0; e < E; ++e) {
      CHECK(weights[b * E + e] == doctest::Approx(alpha[static_cast<size_t>(e)]).epsilon(1e-12));
      row_sum += weights[b * E + e];
    }
    CHECK(std::abs(row_sum - 1.0) <= 1e-9);
    for (int j = 0; j < D; ++j) {
      CHECK(fused[b * D + j] == doctest::Approx(f[static_cast<size_t>(j)]).epsilon(1e-12));
    }
    for (int k = 0; k < K; ++k) {
      CHECK(logits[b * K + k] == doctest::Approx(l[static_cast<size_t>(k)]).epsilon(1e-12));
    }
  }
}
