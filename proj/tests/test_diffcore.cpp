// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "brainstack/checkpoint.hpp"
#include "brainstack/errors.hpp"
#include "brainstack/fdcheck.hpp"
#include "brainstack/gradcheck.hpp"
#include "brainstack/graph.hpp"
#include "brainstack/optim.hpp"
#include "brainstack/rng.hpp"
#include "doctest.h"

using namespace brainstack;

namespace {

template <class E>
std::string thrown_message(const std::function<void()>& f) {
  try {
    f();
  } catch (const E& e) {
    return e.what();
  } catch (...) {
    return "<wrong exception type>";
  }
  return "<no throw>";
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  REQUIRE(out.good());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("square graph value and gradient") {
  Parameter x("x", Tensor::full({1}, 3.0));
  Graph g;
  NodeId xn = g.param(x);
  NodeId y = g.mul(xn, xn);
  CHECK(g.value(y)[0] == doctest::Approx(9.0).epsilon(1e-15));
  g.backward(y);
  CHECK(x.grad[0] == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("product graph gradients") {
  Parameter x("x", Tensor::full({1}, 2.0));
  Parameter y("y", Tensor::full({1}, 5.0));
  Graph g;
  NodeId out = g.mul(g.param(x), g.param(y));
  CHECK(g.value(out)[0] == doctest::Approx(10.0));
  g.backward(out);
  CHECK(x.grad[0] == doctest::Approx(5.0));
  CHECK(y.grad[0] == doctest::Approx(2.0));
}

TEST_CASE("identity graph returns its input") {
  Tensor t({2, 3});
  for (size_t i = 0; i < t.numel(); ++i) t[i] = 0.5 * static_cast<double>(i) - 1.0;
  Graph g;
  NodeId n = g.input(t);
  const Tensor& v = g.value(n);
  REQUIRE(v.numel() == t.numel());
  for (size_t i = 0; i < t.numel(); ++i) CHECK(v[i] == t[i]);
}

TEST_CASE("softmax closed form on (0, ln 2)") {
  Tensor t({1, 2});
  t[0] = 0.0;
  t[1] = std::log(2.0);
  Graph g;
  const Tensor& v = g.value(g.softmax(g.input(t)));
  CHECK(v[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(v[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax rows are probability vectors") {
  for (uint64_t seed = 0; seed < 25; ++seed) {
    Rng rng(seed);
    Tensor t({3, 5});
    for (size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-30.0, 30.0);
    Graph g;
    const Tensor& v = g.value(g.softmax(g.input(t)));
    for (int64_t r = 0; r < 3; ++r) {
      double sum = 0.0;
      for (int64_t c = 0; c < 5; ++c) {
        double p = v[static_cast<size_t>(r * 5 + c)];
        CHECK(p >= 0.0);
        sum += p;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("finite differences recover the sine derivative at zero") {
  Parameter x("x", Tensor::zeros({1}));
  auto fd = finite_difference_gradient([&] { return std::sin(x.value[0]); }, {&x}, 1e-5);
  CHECK(std::abs(fd[0][0] - 1.0) < 1e-8);
}

TEST_CASE("finite differences of a constant are zero") {
  Parameter x("x", Tensor::full({3}, 1.25));
  auto fd = finite_difference_gradient([&] { return 42.0; }, {&x}, 1e-3);
  for (size_t i = 0; i < 3; ++i) CHECK(fd[0][i] == 0.0);
}

TEST_CASE("finite differences reject a nondeterministic function") {
  Parameter x("x", Tensor::zeros({1}));
  double counter = 0.0;
  CHECK_THROWS_AS(finite_difference_gradient([&] { return counter += 1.0; }, {&x}, 1e-3),
                  OracleError);
}

TEST_CASE("cross entropy backward matches the oracle on fixed logits") {
  Tensor init({3, 4});
  const double vals[12] = {0.5, -1.0, 2.0, 0.0, 1.5, 1.5, -0.5, 0.25, -2.0, 0.75, 0.1, 1.0};
  for (size_t i = 0; i < 12; ++i) init[i] = vals[i];
  Parameter logits("logits", std::move(init));
  std::vector<int> labels = {0, 2, 1};
  Graph g;
  NodeId loss = g.cross_entropy(g.param(logits), labels);
  g.backward(loss);
  auto fd = finite_difference_gradient(
      [&] {
        Graph g2;
        return g2.value(g2.cross_entropy(g2.param(logits), labels))[0];
      },
      {&logits}, 1e-3);
  CHECK(max_rel_err({&logits}, fd) < 1e-4);
}

TEST_CASE("cross entropy of uniform logits is ln K") {
  Parameter logits("logits", Tensor::zeros({1, 4}));
  Graph g;
  double v = g.value(g.cross_entropy(g.param(logits), {2}))[0];
  CHECK(std::abs(v - std::log(4.0)) <= 1e-10);
}

TEST_CASE("plain sgd step") {
  Parameter p("p", Tensor::full({1}, 1.0));
  p.grad[0] = 2.0;
  sgd_step({&p}, 0.1, 0.0, 0.0);
  CHECK(p.value[0] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(p.grad[0] == 0.0);
}

TEST_CASE("two momentum steps unroll to -0.29") {
  Parameter p("p", Tensor::zeros({1}));
  p.grad[0] = 1.0;
  sgd_step({&p}, 0.1, 0.9, 0.0);
  p.grad[0] = 1.0;
  sgd_step({&p}, 0.1, 0.9, 0.0);
  CHECK(p.value[0] == doctest::Approx(-0.29).epsilon(1e-12));
}

TEST_CASE("weight decay alone shrinks the parameter") {
  Parameter p("p", Tensor::full({1}, 1.0));
  p.grad[0] = 0.0;
  sgd_step({&p}, 0.1, 0.0, 1e-4);
  CHECK(p.value[0] == doctest::Approx(0.99999).epsilon(1e-12));
}

TEST_CASE("sgd aborts on a non-finite gradient without touching values") {
  Parameter a("alpha", Tensor::full({1}, 1.0));
  Parameter b("beta", Tensor::full({1}, 2.0));
  a.grad[0] = 1.0;
  b.grad[0] = std::numeric_limits<double>::quiet_NaN();
  std::string msg =
      thrown_message<NumericError>([&] { sgd_step({&a, &b}, 0.1, 0.0, 0.0); });
  CHECK(msg.find("beta") != std::string::npos);
  CHECK(a.value[0] == 1.0);
  CHECK(b.value[0] == 2.0);
}

TEST_CASE("every primitive op matches the finite-difference oracle") {
  auto results = run_gradchecks("primitives", 20, 1e-4, 1e-3);
  REQUIRE(!results.empty());
  for (const auto& r : results) {
    INFO(r.name, " max_rel_err=", r.max_rel_err);
    CHECK(r.pass);
  }
}

TEST_CASE("train-mode forward is bit-reproducible for a fixed seed") {
  Rng rng(11);
  Tensor x({4, 6});
  for (size_t i = 0; i < x.numel(); ++i) x[i] = rng.uniform(-1.0, 1.0);
  Parameter w("w", Tensor::full({6, 3}, 0.25));
  Parameter b("b", Tensor::zeros({3}));
  auto run = [&](uint64_t seed) {
    Graph g(Mode::kTrain, seed);
    NodeId out = g.dropout(g.elu(g.linear(g.input(x), g.param(w), g.param(b))), 0.4);
    return g.value(out);
  };
  Tensor v1 = run(99);
  Tensor v2 = run(99);
  REQUIRE(v1.numel() == v2.numel());
  for (size_t i = 0; i < v1.numel(); ++i) CHECK(v1[i] == v2[i]);
}

TEST_CASE("batch norm in train mode standardizes each channel") {
  Rng rng(5);
  Tensor x({4, 3, 2, 8});
  for (size_t i = 0; i < x.numel(); ++i) x[i] = rng.uniform(-2.0, 5.0);
  Parameter gamma("g", Tensor::full({3}, 1.0));
  Parameter beta("b", Tensor::zeros({3}));
  BatchNormState state(3);
  Graph g(Mode::kTrain);
  const Tensor& out = g.value(g.batch_norm(g.input(x), g.param(gamma), g.param(beta), state));
  const int64_t kN = 4, kC = 3, kH = 2, kW = 8;
  const int64_t per = kN * kH * kW;
  for (int64_t c = 0; c < kC; ++c) {
    double mean = 0.0, var = 0.0;
    for (int64_t n = 0; n < kN; ++n)
      for (int64_t h = 0; h < kH; ++h)
        for (int64_t w = 0; w < kW; ++w)
          mean += out[static_cast<size_t>(((n * kC + c) * kH + h) * kW + w)];
    mean /= static_cast<double>(per);
    for (int64_t n = 0; n < kN; ++n)
      for (int64_t h = 0; h < kH; ++h)
        for (int64_t w = 0; w < kW; ++w) {
          double d = out[static_cast<size_t>(((n * kC + c) * kH + h) * kW + w)] - mean;
          var += d * d;
        }
    var /= static_cast<double>(per);
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-5);
  }
  // Running statistics move one momentum step toward the batch statistics.
  for (int64_t c = 0; c < kC; ++c) {
    double bm = 0.0;
    for (int64_t n = 0; n < kN; ++n)
      for (int64_t h = 0; h < kH; ++h)
        for (int64_t w = 0; w < kW; ++w)
          bm += x[static_cast<size_t>(((n * kC + c) * kH + h) * kW + w)];
    bm /= static_cast<double>(per);
    CHECK(state.running_mean[static_cast<size_t>(c)] == doctest::Approx(0.1 * bm).epsilon(1e-10));
  }
}

TEST_CASE("batch norm in eval mode applies running statistics") {
  Tensor x({1, 2, 1, 2});
  x[0] = 1.0;
  x[1] = 2.0;
  x[2] = 3.0;
  x[3] = 4.0;
  Parameter gamma("g", Tensor::full({2}, 2.0));
  Parameter beta("b", Tensor::full({2}, 0.5));
  BatchNormState state(2);
  state.running_mean[0] = 1.0;
  state.running_mean[1] = 2.0;
  state.running_var[0] = 4.0;
  state.running_var[1] = 0.25;
  Graph g(Mode::kEval);
  const Tensor& out = g.value(g.batch_norm(g.input(x), g.param(gamma), g.param(beta), state));
  CHECK(out[0] == doctest::Approx(0.5 + 2.0 * (1.0 - 1.0) / std::sqrt(4.0 + 1e-5)).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(0.5 + 2.0 * (2.0 - 1.0) / std::sqrt(4.0 + 1e-5)).epsilon(1e-12));
  CHECK(out[2] == doctest::Approx(0.5 + 2.0 * (3.0 - 2.0) / std::sqrt(0.25 + 1e-5)).epsilon(1e-12));
  CHECK(out[3] == doctest::Approx(0.5 + 2.0 * (4.0 - 2.0) / std::sqrt(0.25 + 1e-5)).epsilon(1e-12));
}

TEST_CASE("average pooling floors a ragged tail") {
  Tensor x({1, 1, 1, 7});
  for (size_t i = 0; i < 7; ++i) x[i] = static_cast<double>(i + 1);
  Graph g;
  const Tensor& out = g.value(g.avg_pool_w(g.input(x), 2));
  REQUIRE(out.numel() == 3);
  CHECK(out[0] == doctest::Approx(1.5));
  CHECK(out[1] == doctest::Approx(3.5));
  CHECK(out[2] == doctest::Approx(5.5));
}

TEST_CASE("permute transposes a matrix") {
  Tensor x({2, 3});
  for (size_t i = 0; i < 6; ++i) x[i] = static_cast<double>(i);
  Graph g;
  const Tensor& out = g.value(g.permute(g.input(x), {1, 0}));
  REQUIRE(out.rank() == 2);
  CHECK(out.dim(0) == 3);
  CHECK(out.dim(1) == 2);
  for (int64_t r = 0; r < 2; ++r)
    for (int64_t c = 0; c < 3; ++c)
      CHECK(out[static_cast<size_t>(c * 2 + r)] == x[static_cast<size_t>(r * 3 + c)]);
}

TEST_CASE("dropout scales survivors and is identity in eval mode") {
  Tensor x({1, 400});
  x.fill(1.0);
  Graph gt(Mode::kTrain, 3);
  const Tensor& train_out = gt.value(gt.dropout(gt.input(x), 0.5));
  int zeros = 0;
  for (size_t i = 0; i < train_out.numel(); ++i) {
    bool kept = train_out[i] == doctest::Approx(2.0).epsilon(1e-15);
    bool dropped = train_out[i] == 0.0;
    CHECK((kept || dropped));
    zeros += dropped ? 1 : 0;
  }
  CHECK(zeros > 100);
  CHECK(zeros < 300);
  Graph ge(Mode::kEval, 3);
  const Tensor& eval_out = ge.value(ge.dropout(ge.input(x), 0.5));
  for (size_t i = 0; i < eval_out.numel(); ++i) CHECK(eval_out[i] == 1.0);
}

TEST_CASE("attention probabilities are row-stochastic") {
  Rng rng(17);
  Tensor q({2, 3, 4}), k({2, 3, 4}), v({2, 3, 4});
  for (size_t i = 0; i < q.numel(); ++i) {
    q[i] = rng.uniform(-1.0, 1.0);
    k[i] = rng.uniform(-1.0, 1.0);
    v[i] = rng.uniform(-1.0, 1.0);
  }
  Graph g;
  NodeId attn = g.attention(g.input(q), g.input(k), g.input(v));
  const Tensor& probs = g.attention_probs(attn);
  REQUIRE(probs.rank() == 3);
  for (int64_t b = 0; b < 2; ++b)
    for (int64_t r = 0; r < 3; ++r) {
      double sum = 0.0;
      for (int64_t c = 0; c < 3; ++c) sum += probs[static_cast<size_t>((b * 3 + r) * 3 + c)];
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("shape mismatch errors name the operation") {
  Graph g;
  NodeId a = g.input(Tensor::zeros({2, 3}));
  NodeId b = g.input(Tensor::zeros({3, 2}));
  std::string msg = thrown_message<ShapeError>([&] { g.add(a, b); });
  CHECK(msg.find("add") != std::string::npos);
}

TEST_CASE("backward twice is a state error") {
  Parameter x("x", Tensor::full({1}, 2.0));
  Graph g;
  NodeId out = g.mul(g.param(x), g.param(x));
  g.backward(out);
  CHECK_THROWS_AS(g.backward(out), StateError);
}

TEST_CASE("backward from a non-scalar is a shape error") {
  Parameter x("x", Tensor::full({2}, 1.0));
  Graph g;
  NodeId out = g.add(g.param(x), g.param(x));
  CHECK_THROWS_AS(g.backward(out), ShapeError);
}

TEST_CASE("non-finite results raise a numeric error") {
  Graph g;
  NodeId huge = g.input(Tensor::full({1}, 1e308));
  CHECK_THROWS_AS(g.scale(huge, 1e10), NumericError);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  Tensor a({2, 3});
  const double av[6] = {1.0, 2.5, -3.0, 0.125, 4.0, 5.0};
  for (size_t i = 0; i < 6; ++i) a[i] = av[i];
  Tensor b({4});
  const double bv[4] = {-0.5, 0.0, 7.0, 1024.0};
  for (size_t i = 0; i < 4; ++i) b[i] = bv[i];
  std::vector<NamedTensor> entries;
  entries.push_back({"layer/weight", a});
  entries.push_back({"layer/bias", b});
  const std::string p1 = "diffcore_ckpt_a.bstk";
  const std::string p2 = "diffcore_ckpt_b.bstk";
  save_checkpoint(p1, entries);
  auto loaded = load_checkpoint(p1);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].name == "layer/weight");
  CHECK(loaded[1].name == "layer/bias");
  REQUIRE(loaded[0].value.numel() == 6);
  for (size_t i = 0; i < 6; ++i) CHECK(loaded[0].value[i] == av[i]);
  REQUIRE(loaded[1].value.numel() == 4);
  for (size_t i = 0; i < 4; ++i) CHECK(loaded[1].value[i] == bv[i]);
  save_checkpoint(p2, loaded);
  CHECK(read_bytes(p1) == read_bytes(p2));
}

TEST_CASE("corrupt checkpoints fail with structured errors") {
  Tensor a({2});
  a[0] = 1.0;
  a[1] = 2.0;
  const std::string path = "diffcore_ckpt_corrupt.bstk";
  save_checkpoint(path, {{"w", a}});
  std::string bytes = read_bytes(path);

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  write_bytes(path, bad_magic);
  std::string msg = thrown_message<FormatError>([&] { load_checkpoint(path); });
  CHECK(msg.find("magic") != std::string::npos);

  std::string bad_version = bytes;
  bad_version[4] = 99;
  write_bytes(path, bad_version);
  msg = thrown_message<FormatError>([&] { load_checkpoint(path); });
  CHECK(msg.find("version") != std::string::npos);

  write_bytes(path, bytes.substr(0, bytes.size() - 3));
  msg = thrown_message<FormatError>([&] { load_checkpoint(path); });
  CHECK(msg.find("end of file") != std::string::npos);

  write_bytes(path, bytes + "xx");
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
}
