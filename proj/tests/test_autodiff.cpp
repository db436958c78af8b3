#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "salguide/model.hpp"
#include "salguide/rng.hpp"
#include "salguide/tape.hpp"
#include "salguide/tensor.hpp"

using namespace salguide;

namespace {

constexpr double kStep = 1e-4;
constexpr double kRelTol = 1e-4;

Tensor rnd_tensor(Shape shape, uint64_t seed, bool rg, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), rg);
}

// Central-difference check of d(loss)/d(probe) over every coordinate.
// `loss_fn` rebuilds the graph from the current tensor contents each call.
void check_gradients(const std::string& name, Tensor probe,
                     const std::function<double(Tape&)>& loss_fn) {
  Tape tape;
  const double base = loss_fn(tape);
  CHECK(std::isfinite(base));
  std::vector<double> analytic(probe.grad_view().begin(), probe.grad_view().end());

  auto data = probe.mutable_data();
  for (size_t j = 0; j < data.size(); ++j) {
    const double keep = data[j];
    data[j] = keep + kStep;
    Tape tp;
    const double up = loss_fn(tp);
    data[j] = keep - kStep;
    Tape tm;
    const double down = loss_fn(tm);
    data[j] = keep;
    const double numeric = (up - down) / (2.0 * kStep);
    const double denom = std::max({std::abs(analytic[j]), std::abs(numeric), 1.0});
    const double rel = std::abs(analytic[j] - numeric) / denom;
    INFO(name << " coordinate " << j << ": analytic " << analytic[j] << " numeric "
              << numeric);
    REQUIRE(rel < kRelTol);
  }
}

// Scalar loss via backward() with the probe's gradient captured on the way.
double scalar_loss(Tape& tape, const Tensor& loss) {
  tape.backward(loss);
  return loss.scalar();
}

}  // namespace

TEST_CASE("conv2d gradients (input, kernel, bias)") {
  Tensor x = rnd_tensor({1, 2, 4, 4}, 1, true);
  Tensor w = rnd_tensor({3, 2, 3, 3}, 2, true);
  Tensor b = rnd_tensor({3}, 3, true);
  auto loss = [&](Tape& t) {
    x.zero_grad(); w.zero_grad(); b.zero_grad();
    return scalar_loss(t, t.sum(t.conv2d(x, w, b, 1, 1)));
  };
  check_gradients("conv2d/x", x, loss);
  check_gradients("conv2d/w", w, loss);
  check_gradients("conv2d/b", b, loss);
}

TEST_CASE("conv2d gradients, stride 2") {
  Tensor x = rnd_tensor({2, 2, 6, 6}, 4, true);
  Tensor w = rnd_tensor({2, 2, 3, 3}, 5, true);
  Tensor b = rnd_tensor({2}, 6, true);
  auto loss = [&](Tape& t) {
    x.zero_grad(); w.zero_grad(); b.zero_grad();
    return scalar_loss(t, t.sum(t.conv2d(x, w, b, 2, 1)));
  };
  check_gradients("conv2d-s2/x", x, loss);
  check_gradients("conv2d-s2/w", w, loss);
}

TEST_CASE("conv2d gradients, 1x1 kernel no padding") {
  Tensor x = rnd_tensor({1, 3, 3, 3}, 7, true);
  Tensor w = rnd_tensor({2, 3, 1, 1}, 8, true);
  Tensor b = rnd_tensor({2}, 9, true);
  auto loss = [&](Tape& t) {
    x.zero_grad(); w.zero_grad(); b.zero_grad();
    return scalar_loss(t, t.sum(t.conv2d(x, w, b, 1, 0)));
  };
  check_gradients("conv2d-1x1/w", w, loss);
  check_gradients("conv2d-1x1/x", x, loss);
}

TEST_CASE("relu gradient away from the kink") {
  Tensor x = rnd_tensor({2, 2, 3, 3}, 10, true);
  // Push every value at least 10*kStep from zero so the difference quotient
  // never straddles the kink.
  for (auto& v : x.mutable_data())
    if (std::abs(v) < 10 * kStep) v = v < 0 ? -0.01 : 0.01;
  auto loss = [&](Tape& t) {
    x.zero_grad();
    return scalar_loss(t, t.sum(t.relu(x)));
  };
  check_gradients("relu/x", x, loss);
}

TEST_CASE("maxpool2d gradient") {
  Tensor x = rnd_tensor({2, 3, 4, 4}, 11, true);
  auto loss = [&](Tape& t) {
    x.zero_grad();
    return scalar_loss(t, t.sum(t.maxpool2d(x)));
  };
  check_gradients("maxpool/x", x, loss);
}

TEST_CASE("global average pool gradient") {
  Tensor x = rnd_tensor({2, 4, 3, 3}, 12, true);
  auto loss = [&](Tape& t) {
    x.zero_grad();
    return scalar_loss(t, t.sum(t.global_avg_pool(x)));
  };
  check_gradients("gap/x", x, loss);
}

TEST_CASE("dense gradients (input, weight, bias)") {
  Tensor x = rnd_tensor({3, 5}, 13, true);
  Tensor w = rnd_tensor({4, 5}, 14, true);
  Tensor b = rnd_tensor({4}, 15, true);
  auto loss = [&](Tape& t) {
    x.zero_grad(); w.zero_grad(); b.zero_grad();
    return scalar_loss(t, t.sum(t.dense(x, w, b)));
  };
  check_gradients("dense/x", x, loss);
  check_gradients("dense/w", w, loss);
  check_gradients("dense/b", b, loss);
}

TEST_CASE("softmax cross entropy gradient") {
  Tensor l = rnd_tensor({4, 5}, 16, true, -2.0, 2.0);
  const std::vector<int> labels = {0, 3, 2, 4};
  auto loss = [&](Tape& t) {
    l.zero_grad();
    return scalar_loss(t, t.softmax_cross_entropy(l, labels));
  };
  check_gradients("ce/logits", l, loss);
}

TEST_CASE("channel mask gradient") {
  Tensor x = rnd_tensor({2, 3, 2, 2}, 17, true);
  Tensor m = Tensor::from({2, 2, 2}, {1, 0, 0, 1, 1, 1, 0, 0});
  auto loss = [&](Tape& t) {
    x.zero_grad();
    return scalar_loss(t, t.sum(t.channel_mask(x, m)));
  };
  check_gradients("mask/x", x, loss);
}

TEST_CASE("add, pick and pick_rows gradients") {
  Tensor a = rnd_tensor({3, 4}, 18, true);
  Tensor b = rnd_tensor({3, 4}, 19, true);
  auto loss_add = [&](Tape& t) {
    a.zero_grad(); b.zero_grad();
    return scalar_loss(t, t.sum(t.add(a, b)));
  };
  check_gradients("add/a", a, loss_add);
  check_gradients("add/b", b, loss_add);

  auto loss_pick = [&](Tape& t) {
    a.zero_grad();
    return scalar_loss(t, t.pick(a, 5));
  };
  check_gradients("pick/a", a, loss_pick);

  const std::vector<int> cols = {1, 3, 0};
  auto loss_rows = [&](Tape& t) {
    a.zero_grad();
    return scalar_loss(t, t.sum(t.pick_rows(a, cols)));
  };
  check_gradients("pick_rows/a", a, loss_rows);
}

TEST_CASE("composite pipeline gradient wrt the image") {
  Tensor x = rnd_tensor({2, 2, 4, 4}, 20, true, 0.0, 1.0);
  Tensor w = rnd_tensor({3, 2, 3, 3}, 21, false);
  Tensor b = rnd_tensor({3}, 22, false);
  Tensor hw = rnd_tensor({2, 3}, 23, false);
  Tensor hb = rnd_tensor({2}, 24, false);
  const std::vector<int> labels = {0, 1};
  auto loss = [&](Tape& t) {
    x.zero_grad();
    Tensor act = t.relu(t.conv2d(x, w, b, 1, 1));
    Tensor feat = t.global_avg_pool(t.maxpool2d(act));
    return scalar_loss(t, t.softmax_cross_entropy(t.dense(feat, hw, hb), labels));
  };
  check_gradients("pipeline/x", x, loss);
}

TEST_CASE("full model loss gradients wrt every parameter family") {
  ModelConfig mc;
  mc.in_channels = 2;
  mc.in_h = 8;
  mc.in_w = 8;
  mc.blocks = {{3, true}, {4, true}};
  mc.num_classes = 3;
  mc.init_seed = 99;
  ModelState state = init_model(mc);
  Tensor batch = rnd_tensor({2, 2, 8, 8}, 25, false, 0.0, 1.0);
  const std::vector<int> labels = {2, 0};
  auto loss = [&](Tape& t) {
    state.zero_grad();
    ForwardRecord rec = forward(state, t, batch);
    return scalar_loss(t, t.softmax_cross_entropy(rec.logits, labels));
  };
  check_gradients("model/block1.kernel", state.conv_kernels[0], loss);
  check_gradients("model/block1.bias", state.conv_biases[0], loss);
  check_gradients("model/block2.kernel", state.conv_kernels[1], loss);
  check_gradients("model/head.weight", state.head_weight, loss);
  check_gradients("model/head.bias", state.head_bias, loss);
}

TEST_CASE("masked forward gradients flow through the gate") {
  ModelConfig mc;
  mc.in_channels = 1;
  mc.in_h = 8;
  mc.in_w = 8;
  mc.blocks = {{2, true}, {3, true}};
  mc.num_classes = 2;
  mc.init_seed = 7;
  ModelState state = init_model(mc);
  Tensor batch = rnd_tensor({1, 1, 8, 8}, 26, false, 0.0, 1.0);
  BinaryMask mask;
  mask.n = 1;
  mask.h = 4;
  mask.w = 4;
  mask.values = {1, 1, 0, 0, 1, 0, 1, 0, 0, 1, 1, 0, 0, 0, 1, 1};
  const std::vector<int> labels = {1};
  auto loss = [&](Tape& t) {
    state.zero_grad();
    ForwardRecord rec = forward(state, t, batch, 1, &mask);
    return scalar_loss(t, t.softmax_cross_entropy(rec.logits, labels));
  };
  check_gradients("masked/block1.kernel", state.conv_kernels[0], loss);
  check_gradients("masked/block2.kernel", state.conv_kernels[1], loss);
}

TEST_CASE("backward is deterministic") {
  auto run = [] {
    Tensor x = rnd_tensor({2, 3, 6, 6}, 27, true);
    Tensor w = rnd_tensor({4, 3, 3, 3}, 28, true);
    Tensor b = rnd_tensor({4}, 29, true);
    Tape t;
    t.backward(t.sum(t.relu(t.conv2d(x, w, b, 1, 1))));
    return std::vector<double>(w.grad_view().begin(), w.grad_view().end());
  };
  const auto first = run();
  const auto second = run();
  REQUIRE(first.size() == second.size());
  for (size_t i = 0; i < first.size(); ++i) CHECK(first[i] == second[i]);
}

TEST_CASE("doubling a loss doubles the gradient exactly") {
  Tensor x = rnd_tensor({2, 4}, 30, true);
  const std::vector<int> labels = {1, 2};
  Tape t1;
  Tensor l1 = t1.softmax_cross_entropy(x, labels);
  t1.backward(l1);
  std::vector<double> g1(x.grad_view().begin(), x.grad_view().end());

  x.zero_grad();
  Tape t2;
  Tensor l2 = t2.softmax_cross_entropy(x, labels);
  t2.backward(t2.add(l2, l2));
  const auto g2 = x.grad_view();
  for (size_t i = 0; i < g1.size(); ++i) CHECK(g2[i] == 2.0 * g1[i]);
}

TEST_CASE("cross entropy stays finite on extreme logits") {
  Tensor l = Tensor::from({1, 2}, {1000.0, 0.0}, true);
  {
    Tape t;
    Tensor loss = t.softmax_cross_entropy(l, {0});
    CHECK(loss.scalar() == doctest::Approx(0.0).epsilon(1e-12));
    t.backward(loss);
    for (double g : l.grad_view()) CHECK(std::isfinite(g));
  }
  l.zero_grad();
  {
    Tape t;
    Tensor loss = t.softmax_cross_entropy(l, {1});
    CHECK(loss.scalar() == doctest::Approx(1000.0));
    t.backward(loss);
    for (double g : l.grad_view()) CHECK(std::isfinite(g));
  }
}
