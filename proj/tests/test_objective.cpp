// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <vector>

#include "brainstack/errors.hpp"
#include "brainstack/graph.hpp"
#include "brainstack/objective.hpp"
#include "brainstack/rng.hpp"
#include "brainstack/tensor.hpp"
#include "doctest.h"

using namespace brainstack;

namespace {

ScheduleConfig desk_schedule() {
  ScheduleConfig cfg;
  cfg.max_loss_estimate = std::log(4.0);
  return cfg;
}

}  // namespace

TEST_CASE("cross entropy closed-form values") {
  CHECK(cross_entropy({0.0, 0.0, 0.0, 0.0}, 2) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(cross_entropy({1000.0, 0.0, 0.0, 0.0}, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(cross_entropy({1.0, 0.0}, 0) ==
        doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));
  CHECK_THROWS_AS(cross_entropy({1.0, 0.0}, 2), ShapeError);
  CHECK_THROWS_AS(cross_entropy({1.0, 0.0}, -1), ShapeError);
}

TEST_CASE("cross entropy matches a direct softmax oracle on random logits") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 2 + static_cast<int>(rng.below(7));
    std::vector<double> logits(static_cast<size_t>(k));
    for (double& v : logits) v = rng.uniform(-6.0, 6.0);
    const int label = static_cast<int>(rng.below(static_cast<uint64_t>(k)));

    double z = 0.0;
    for (double v : logits) z += std::exp(v);
    const double direct = -std::log(std::exp(logits[static_cast<size_t>(label)]) / z);
    CHECK(std::abs(cross_entropy(logits, label) - direct) < 1e-10);
  }
}

TEST_CASE("distillation loss closed-form value and sign") {
  // KL([.5,.5] || [1/3,2/3]) = 0.5 ln 1.5 + 0.5 ln 0.75.
  const double want = 0.5 * std::log(1.5) + 0.5 * std::log(0.75);
  CHECK(distill_loss({0.0, 0.0}, {{0.0, std::log(2.0)}}, 1.0) ==
        doctest::Approx(want).epsilon(1e-12));

  SUBCASE("identical logits give exactly zero") {
    std::vector<double> g = {0.3, -1.2, 2.0, 0.0};
    CHECK(distill_loss(g, {g, g, g, g, g, g, g}, 4.0) == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("nonnegative on random inputs") {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> g(4), r1(4), r2(4);
      for (int i = 0; i < 4; ++i) {
        g[static_cast<size_t>(i)] = rng.uniform(-3.0, 3.0);
        r1[static_cast<size_t>(i)] = rng.uniform(-3.0, 3.0);
        r2[static_cast<size_t>(i)] = rng.uniform(-3.0, 3.0);
      }
      CHECK(distill_loss(g, {r1, r2}, 4.0) >= 0.0);
    }
  }
  SUBCASE("empty regional list is rejected") {
    CHECK_THROWS_AS(distill_loss({0.0, 0.0}, {}, 1.0), ConfigError);
    CHECK_THROWS_AS(distill_loss({0.0, 0.0}, {{0.0, 0.0}}, 0.0), ConfigError);
  }
}

TEST_CASE("graph distillation treats the teacher as constant") {
  Parameter teacher("teacher", Tensor({1, 3}));
  Parameter student("student", Tensor({1, 3}));
  teacher.value[0] = 1.0;
  teacher.value[1] = -0.5;
  teacher.value[2] = 0.25;
  student.value[0] = -0.2;
  student.value[1] = 0.8;
  student.value[2] = 0.1;

  Graph g;
  NodeId loss = g.kl_softened(g.param(student), g.param(teacher), 4.0);
  g.backward(loss);

  for (int64_t i = 0; i < 3; ++i) CHECK(teacher.grad[i] == 0.0);
  double student_norm = 0.0;
  for (int64_t i = 0; i < 3; ++i) student_norm += std::abs(student.grad[i]);
  CHECK(student_norm > 0.0);
}

TEST_CASE("progress clamps and interpolates") {
  CHECK(progress(0, 5, 20) == 0.0);
  CHECK(progress(5, 5, 20) == 0.0);
  CHECK(progress(15, 5, 20) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(progress(25, 5, 20) == 1.0);
  CHECK(progress(100, 5, 20) == 1.0);
  double prev = 0.0;
  for (int e = 0; e <= 40; ++e) {
    const double p = progress(e, 5, 20);
    CHECK(p >= prev);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    prev = p;
  }
}

TEST_CASE("fused weight interpolates between its bounds") {
  CHECK(fused_weight(0.0, 0.2, 1.0) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(fused_weight(1.0, 0.2, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(fused_weight(0.5, 0.2, 1.0) == doctest::Approx(0.6).epsilon(1e-15));
  double prev = 0.0;
  for (int i = 0; i <= 10; ++i) {
    const double w = fused_weight(i / 10.0, 0.2, 1.0);
    CHECK(w >= prev);
    prev = w;
  }
}

TEST_CASE("auxiliary weight gates on the fused loss") {
  const double mle = std::log(4.0);
  CHECK(aux_weight(0.8, 0.5, mle, mle) == 0.0);
  CHECK(aux_weight(0.8, 0.5, 2.0 * mle, mle) == 0.0);
  CHECK(aux_weight(0.8, 0.0, 0.0, mle) == 0.0);
  CHECK(aux_weight(0.8, 0.5, 0.5 * mle, mle) == doctest::Approx(0.2).epsilon(1e-12));
  double prev = 1e30;
  for (int i = 0; i <= 12; ++i) {
    const double w = aux_weight(0.8, 1.0, i * mle / 8.0, mle);
    CHECK(w <= prev);
    prev = w;
  }
}

TEST_CASE("schedule boundary values at warm-up, transition start and end") {
  const ScheduleConfig cfg = desk_schedule();

  SUBCASE("epoch 0: global-only warm-up") {
    ScheduledWeights w = schedule_weights(0, 1.2, cfg);
    CHECK(w.lambda == 0.0);
    CHECK(w.alpha == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(w.beta == 0.0);
    CHECK(w.gamma == 0.0);
  }
  SUBCASE("epoch 5: transition start with an open gate") {
    ScheduledWeights w = schedule_weights(5, 0.0, cfg);
    CHECK(w.lambda == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(w.alpha == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(w.beta == 0.0);
    CHECK(w.gamma == 0.0);
  }
  SUBCASE("epoch 25: transition end") {
    ScheduledWeights w = schedule_weights(25, 0.0, cfg);
    CHECK(w.lambda == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w.alpha == 0.0);
    CHECK(w.beta == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(w.gamma == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("closed gate zeroes every auxiliary weight") {
    ScheduledWeights w = schedule_weights(15, cfg.max_loss_estimate, cfg);
    CHECK(w.alpha == 0.0);
    CHECK(w.beta == 0.0);
    CHECK(w.gamma == 0.0);
    CHECK(w.lambda == doctest::Approx(fused_weight(0.5, 0.2, 1.0)).epsilon(1e-12));
  }
  SUBCASE("gamma carries the extra progress factor") {
    ScheduledWeights w = schedule_weights(15, 0.0, cfg);
    CHECK(w.beta == doctest::Approx(0.5 * 0.5).epsilon(1e-12));
    CHECK(w.gamma == doctest::Approx(0.5 * 0.5 * 0.5).epsilon(1e-12));
  }
}

TEST_CASE("schedule config validation") {
  ScheduleConfig cfg = desk_schedule();
  cfg.t_transition = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = desk_schedule();
  cfg.lambda_min = 2.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = desk_schedule();
  cfg.temperature = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("total loss is the scheduled dot product") {
  ScheduledWeights one_fused;
  one_fused.lambda = 1.0;
  LossBreakdown b = total_loss(0.7, 0.3, 0.2, 0.1, one_fused);
  CHECK(b.total == doctest::Approx(0.7).epsilon(1e-15));

  ScheduledWeights zero;
  CHECK(total_loss(0.0, 0.0, 0.0, 0.0, zero).total == 0.0);

  ScheduledWeights w;
  w.lambda = 0.5;
  w.alpha = 0.25;
  w.beta = 0.2;
  w.gamma = 0.05;
  CHECK(total_loss(1.0, 1.0, 1.0, 1.0, w).total == doctest::Approx(1.0).epsilon(1e-12));

  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const double f = rng.uniform(0.0, 3.0), gl = rng.uniform(0.0, 3.0);
    const double lo = rng.uniform(0.0, 3.0), d = rng.uniform(0.0, 3.0);
    ScheduledWeights r;
    r.lambda = rng.uniform(0.0, 1.0);
    r.alpha = rng.uniform(0.0, 1.0);
    r.beta = rng.uniform(0.0, 1.0);
    r.gamma = rng.uniform(0.0, 1.0);
    LossBreakdown out = total_loss(f, gl, lo, d, r);
    CHECK(std::abs(out.total - (r.lambda * f + r.alpha * gl + r.beta * lo + r.gamma * d)) <
          1e-9);
    CHECK(out.fused == f);
    CHECK(out.global_ce == gl);
    CHECK(out.local == lo);
    CHECK(out.distill == d);
  }
}
