#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "salguide/errors.hpp"
#include "salguide/model.hpp"
#include "salguide/rng.hpp"
#include "salguide/tape.hpp"
#include "salguide/tensor.hpp"

using namespace salguide;
namespace fs = std::filesystem;

namespace {

Tensor rnd_batch(int64_t n, const ModelConfig& mc, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(static_cast<size_t>(n * mc.in_channels * mc.in_h * mc.in_w));
  for (auto& x : v) x = rng.uniform();
  return Tensor::from({n, mc.in_channels, mc.in_h, mc.in_w}, std::move(v));
}

bool all_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  auto va = a.data(), vb = b.data();
  for (size_t i = 0; i < va.size(); ++i)
    if (va[i] != vb[i]) return false;
  return true;
}

BinaryMask ones_mask(const ModelConfig& mc, int block, int64_t n) {
  auto [h, w] = mc.block_extent(block);
  return {n, h, w, std::vector<double>(static_cast<size_t>(n * h * w), 1.0)};
}

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / "salguide_model_test") {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("initialization: bounded kernels, zero biases, seeded") {
  ModelConfig mc = ModelConfig::standard(10, 42);
  ModelState m = init_model(mc);

  int64_t fan_in = mc.in_channels * 9;
  for (int b = 0; b < mc.num_blocks(); ++b) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    double biggest = 0.0;
    for (double v : m.conv_kernels[b].data()) {
      CHECK(std::abs(v) <= bound);
      biggest = std::max(biggest, std::abs(v));
    }
    CHECK(biggest > 0.5 * bound);  // draws actually fill the range
    for (double v : m.conv_biases[b].data()) CHECK(v == 0.0);
    fan_in = mc.blocks[b].out_channels * 9;
  }
  const double head_bound = std::sqrt(6.0 / static_cast<double>(mc.blocks.back().out_channels));
  for (double v : m.head_weight.data()) CHECK(std::abs(v) <= head_bound);
  for (double v : m.head_bias.data()) CHECK(v == 0.0);

  ModelState same = init_model(mc);
  CHECK(all_equal(m.conv_kernels[0], same.conv_kernels[0]));
  CHECK(all_equal(m.head_weight, same.head_weight));

  ModelConfig other = mc;
  other.init_seed = 43;
  CHECK_FALSE(all_equal(m.conv_kernels[0], init_model(other).conv_kernels[0]));
}

TEST_CASE("forward produces the documented shape schedule") {
  ModelConfig mc = ModelConfig::standard();
  ModelState m = init_model(mc);
  Tensor batch = rnd_batch(2, mc, 1);
  Tape tape;
  ForwardRecord rec = forward(m, tape, batch);

  REQUIRE(rec.block_outputs.size() == 4);
  CHECK(rec.block_outputs[0].shape() == Shape{2, 16, 32, 32});
  CHECK(rec.block_outputs[1].shape() == Shape{2, 32, 16, 16});
  CHECK(rec.block_outputs[2].shape() == Shape{2, 64, 8, 8});
  CHECK(rec.block_outputs[3].shape() == Shape{2, 64, 4, 4});
  CHECK(rec.features.shape() == Shape{2, 64});
  CHECK(rec.logits.shape() == Shape{2, 10});

  CHECK(mc.block_extent(1) == std::pair<int64_t, int64_t>{32, 32});
  CHECK(mc.block_extent(4) == std::pair<int64_t, int64_t>{4, 4});

  // Block outputs are post-relu.
  for (const Tensor& t : rec.block_outputs)
    for (double v : t.data()) CHECK(v >= 0.0);
}

TEST_CASE("config validation rejects impossible architectures") {
  ModelConfig none = ModelConfig::standard();
  none.blocks.clear();
  CHECK_THROWS_AS(none.validate(), UsageError);

  ModelConfig crushed = ModelConfig::standard();
  crushed.in_h = crushed.in_w = 8;  // four downsamples -> 0x0
  CHECK_THROWS_AS(crushed.validate(), UsageError);

  ModelConfig no_classes = ModelConfig::standard();
  no_classes.num_classes = 0;
  CHECK_THROWS_AS(no_classes.validate(), UsageError);
}

TEST_CASE("ones mask leaves logits bit-identical at every block") {
  ModelConfig mc = ModelConfig::standard(10, 3);
  ModelState m = init_model(mc);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor batch = rnd_batch(2, mc, 100 + trial);
    Tape t0;
    Tensor plain = forward(m, t0, batch).logits;
    for (int block = 1; block <= mc.num_blocks(); ++block) {
      BinaryMask mask = ones_mask(mc, block, 2);
      Tape t1;
      Tensor masked = forward(m, t1, batch, block, &mask).logits;
      CHECK(all_equal(plain, masked));
    }
  }
}

TEST_CASE("zero mask at the last block yields bias-only logits") {
  ModelConfig mc = ModelConfig::standard(10, 4);
  ModelState m = init_model(mc);
  // Give the head bias a recognizable value.
  auto hb = m.head_bias.mutable_data();
  for (size_t k = 0; k < hb.size(); ++k) hb[k] = 0.25 * static_cast<double>(k);

  BinaryMask mask = ones_mask(mc, 4, 2);
  std::fill(mask.values.begin(), mask.values.end(), 0.0);
  Tape tape;
  Tensor logits = forward(m, tape, rnd_batch(2, mc, 5), 4, &mask).logits;
  auto lv = logits.data();
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t k = 0; k < 10; ++k) CHECK(lv[n * 10 + k] == 0.25 * static_cast<double>(k));
}

TEST_CASE("masking one block never touches earlier activations") {
  ModelConfig mc = ModelConfig::standard(10, 6);
  ModelState m = init_model(mc);
  Tensor batch = rnd_batch(2, mc, 7);
  Tape t0;
  ForwardRecord plain = forward(m, t0, batch);

  BinaryMask mask = ones_mask(mc, 3, 2);
  Rng rng(8);
  for (auto& v : mask.values) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
  Tape t1;
  ForwardRecord masked = forward(m, t1, batch, 3, &mask);

  CHECK(all_equal(plain.block_outputs[0], masked.block_outputs[0]));
  CHECK(all_equal(plain.block_outputs[1], masked.block_outputs[1]));
  // Block 3's stored output is post-mask.
  auto pre = plain.block_outputs[2].data();
  auto post = masked.block_outputs[2].data();
  const int64_t hw = 8 * 8;
  bool saw_zeroed = false;
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t c = 0; c < 64; ++c)
      for (int64_t p = 0; p < hw; ++p) {
        const double mv = mask.values[static_cast<size_t>(n * hw + p)];
        const double expect = pre[(n * 64 + c) * hw + p] * mv;
        CHECK(post[(n * 64 + c) * hw + p] == expect);
        if (mv == 0.0 && pre[(n * 64 + c) * hw + p] != 0.0) saw_zeroed = true;
      }
  CHECK(saw_zeroed);
}

TEST_CASE("a zero mask stops gradients to everything beneath it") {
  ModelConfig mc = ModelConfig::standard(10, 9);
  ModelState m = init_model(mc);
  BinaryMask mask = ones_mask(mc, 4, 1);
  std::fill(mask.values.begin(), mask.values.end(), 0.0);

  Tape tape;
  ForwardRecord rec = forward(m, tape, rnd_batch(1, mc, 10), 4, &mask);
  Tensor loss = tape.softmax_cross_entropy(rec.logits, {3});
  tape.backward(loss);

  for (int b = 0; b < 4; ++b)
    for (double g : m.conv_kernels[b].grad_view()) CHECK(g == 0.0);
  for (double g : m.head_weight.grad_view()) CHECK(g == 0.0);  // features are zero
  bool bias_has_grad = false;
  for (double g : m.head_bias.grad_view())
    if (g != 0.0) bias_has_grad = true;
  CHECK(bias_has_grad);
}

TEST_CASE("clone is a deep copy") {
  ModelConfig mc = ModelConfig::standard(10, 11);
  ModelState a = init_model(mc);
  ModelState b = a.clone();
  CHECK(all_equal(a.conv_kernels[0], b.conv_kernels[0]));

  a.conv_kernels[0].mutable_data()[0] += 1.0;
  CHECK_FALSE(all_equal(a.conv_kernels[0], b.conv_kernels[0]));

  Tape tape;
  ForwardRecord rec = forward(b, tape, rnd_batch(1, mc, 12));
  tape.backward(tape.softmax_cross_entropy(rec.logits, {0}));
  bool a_touched = false;
  for (double g : a.conv_kernels[1].grad_view())
    if (g != 0.0) a_touched = true;
  CHECK_FALSE(a_touched);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  TempDir tmp;
  const fs::path path = tmp.path / "model.bin";
  ModelConfig mc = ModelConfig::standard(10, 13);
  ModelState m = init_model(mc);
  // Perturb away from the init distribution so the test is not vacuous.
  m.head_bias.mutable_data()[2] = -0.75;
  save_checkpoint(m, path);

  ModelState inferred = load_checkpoint(path);
  ModelState explicit_cfg = load_checkpoint(path, mc);
  for (const ModelState* r : {&inferred, &explicit_cfg}) {
    REQUIRE(r->conv_kernels.size() == 4);
    for (int b = 0; b < 4; ++b) {
      CHECK(all_equal(m.conv_kernels[b], r->conv_kernels[b]));
      CHECK(all_equal(m.conv_biases[b], r->conv_biases[b]));
    }
    CHECK(all_equal(m.head_weight, r->head_weight));
    CHECK(all_equal(m.head_bias, r->head_bias));
  }
  CHECK(inferred.config.num_classes == 10);
  CHECK(inferred.config.blocks.size() == 4);
  CHECK(inferred.config.blocks[1].out_channels == 32);
}

TEST_CASE("checkpoint loader rejects corruption") {
  TempDir tmp;
  const fs::path good = tmp.path / "good.bin";
  ModelState m = init_model(ModelConfig::standard(10, 14));
  save_checkpoint(m, good);

  const fs::path bad_magic = tmp.path / "bad_magic.bin";
  {
    std::ifstream in(good, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    bytes[0] = 'X';
    std::ofstream out(bad_magic, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(load_checkpoint(bad_magic), DataError);

  const fs::path truncated = tmp.path / "truncated.bin";
  {
    std::ifstream in(good, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    bytes.resize(bytes.size() / 2);
    std::ofstream out(truncated, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(load_checkpoint(truncated), DataError);

  CHECK_THROWS_AS(load_checkpoint(tmp.path / "missing.bin"), DataError);

  ModelConfig wrong = ModelConfig::standard(7, 14);
  CHECK_THROWS_AS(load_checkpoint(good, wrong), DataError);
}

TEST_CASE("named parameters follow the stable order") {
  ModelState m = init_model(ModelConfig::standard(10, 15));
  auto named = m.named_parameters();
  REQUIRE(named.size() == 10);
  CHECK(named[0].first == "block1.kernel");
  CHECK(named[1].first == "block1.bias");
  CHECK(named[6].first == "block4.kernel");
  CHECK(named[8].first == "head.weight");
  CHECK(named[9].first == "head.bias");
  CHECK(m.parameters().size() == 10);
}
