#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "salguide/augment.hpp"
#include "salguide/errors.hpp"
#include "salguide/rng.hpp"
#include "salguide/tensor.hpp"

using namespace salguide;

namespace {

std::vector<double> rnd_image(int64_t h, int64_t w, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(static_cast<size_t>(3 * h * w));
  for (auto& x : v) x = rng.uniform();
  return v;
}

TransformStep step(TransformFamily f, double factor = 1.0,
                   std::array<double, 3> offsets = {0, 0, 0}) {
  TransformStep st;
  st.family = f;
  st.factor = factor;
  st.offsets = offsets;
  return st;
}

}  // namespace

TEST_CASE("identity parameters leave the image unchanged") {
  const int64_t h = 6, w = 5;
  const std::vector<double> orig = rnd_image(h, w, 1);

  for (TransformFamily f : {TransformFamily::Sharpness, TransformFamily::Brightness,
                            TransformFamily::Color, TransformFamily::Contrast,
                            TransformFamily::RgbPerturb}) {
    std::vector<double> img = orig;
    apply_chain({step(f)}, img.data(), h, w);
    double worst = 0.0;
    for (size_t i = 0; i < img.size(); ++i)
      worst = std::max(worst, std::abs(img[i] - orig[i]));
    INFO("family " << static_cast<int>(f));
    CHECK(worst <= 1e-12);
  }
}

TEST_CASE("grayscale converts to replicated luma") {
  const int64_t h = 1, w = 1;
  std::vector<double> red = {1.0, 0.0, 0.0};
  apply_chain({step(TransformFamily::Grayscale)}, red.data(), h, w);
  CHECK(red[0] == 0.299);
  CHECK(red[1] == 0.299);
  CHECK(red[2] == 0.299);

  std::vector<double> img = rnd_image(4, 4, 2);
  apply_chain({step(TransformFamily::Grayscale)}, img.data(), 4, 4);
  for (int64_t p = 0; p < 16; ++p) {
    CHECK(img[p] == img[16 + p]);
    CHECK(img[p] == img[32 + p]);
  }
}

TEST_CASE("brightness scales exactly and clamps at the top") {
  std::vector<double> img = {0.5, 0.25, 1.0, 0.9, 0.0, 0.125};
  apply_chain({step(TransformFamily::Brightness, 0.5)}, img.data(), 1, 2);
  CHECK(img == std::vector<double>{0.25, 0.125, 0.5, 0.45, 0.0, 0.0625});

  std::vector<double> hot = {0.9, 0.5, 0.9, 0.5, 0.9, 0.5};
  apply_chain({step(TransformFamily::Brightness, 1.5)}, hot.data(), 1, 2);
  CHECK(hot[0] == 1.0);  // 1.35 clamped
  CHECK(hot[1] == 0.75);
}

TEST_CASE("zero contrast collapses to the luma mean") {
  const int64_t h = 4, w = 4;
  std::vector<double> img = rnd_image(h, w, 3);
  double mean = 0.0;
  for (int64_t p = 0; p < h * w; ++p)
    mean += kLumaR * img[p] + kLumaG * img[h * w + p] + kLumaB * img[2 * h * w + p];
  mean /= static_cast<double>(h * w);
  apply_chain({step(TransformFamily::Contrast, 0.0)}, img.data(), h, w);
  for (double v : img) CHECK(v == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("rgb perturbation shifts channels independently") {
  std::vector<double> img = {0.5, 0.5, 0.5, 0.5, 0.05, 0.05};
  apply_chain({step(TransformFamily::RgbPerturb, 1.0, {0.1, -0.25, -0.1})}, img.data(),
              1, 2);
  CHECK(img[0] == 0.6);
  CHECK(img[2] == 0.25);
  CHECK(img[4] == 0.0);  // clamped at the bottom
}

TEST_CASE("steps compose in chain order") {
  std::vector<double> img = {0.5, 0.5, 0.5, 0.5, 0.5, 0.5};
  AugmentationChain chain = {step(TransformFamily::Brightness, 0.5),
                             step(TransformFamily::RgbPerturb, 1.0, {0.1, 0.1, 0.1})};
  apply_chain(chain, img.data(), 1, 2);
  for (double v : img) CHECK(v == 0.35);  // 0.5*0.5 + 0.1
}

TEST_CASE("sampled chains draw five distinct families with bounded magnitudes") {
  Rng rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    AugmentationChain chain = sample_chain(rng);
    REQUIRE(chain.size() == 5);
    std::set<TransformFamily> seen;
    for (const TransformStep& st : chain) {
      seen.insert(st.family);
      if (st.family == TransformFamily::RgbPerturb) {
        for (double o : st.offsets) {
          CHECK(o >= -0.1);
          CHECK(o <= 0.1);
        }
        CHECK(st.factor == 1.0);
      } else if (st.family == TransformFamily::Grayscale) {
        CHECK(st.factor == 1.0);
      } else {
        CHECK(st.factor >= 0.5);
        CHECK(st.factor <= 1.5);
        CHECK(st.offsets == std::array<double, 3>{0, 0, 0});
      }
    }
    CHECK(seen.size() == 5);
  }
}

TEST_CASE("chain sampling is seed-deterministic") {
  Rng a(11), b(11), c(12);
  AugmentationChain ca = sample_chain(a), cb = sample_chain(b), cc = sample_chain(c);
  REQUIRE(ca.size() == cb.size());
  bool same = true, diff = false;
  for (size_t i = 0; i < ca.size(); ++i) {
    if (ca[i].family != cb[i].family || ca[i].factor != cb[i].factor ||
        ca[i].offsets != cb[i].offsets)
      same = false;
    if (ca[i].family != cc[i].family || ca[i].factor != cc[i].factor)
      diff = true;
  }
  CHECK(same);
  CHECK(diff);
}

TEST_CASE("batch augmentation is deterministic and leaves the input alone") {
  Rng fill(13);
  std::vector<double> v(static_cast<size_t>(4 * 3 * 8 * 8));
  for (auto& x : v) x = fill.uniform();
  Tensor batch = Tensor::from({4, 3, 8, 8}, v);

  Rng r1(99), r2(99), r3(100);
  Tensor a = augment_batch(batch, r1);
  Tensor b = augment_batch(batch, r2);
  Tensor c = augment_batch(batch, r3);

  CHECK(a.shape() == batch.shape());
  bool ab_same = true, ac_diff = false, input_intact = true, in_range = true;
  auto av = a.data(), bv = b.data(), cv = c.data(), ov = batch.data();
  for (size_t i = 0; i < av.size(); ++i) {
    if (av[i] != bv[i]) ab_same = false;
    if (av[i] != cv[i]) ac_diff = true;
    if (ov[i] != v[i]) input_intact = false;
    if (av[i] < 0.0 || av[i] > 1.0) in_range = false;
  }
  CHECK(ab_same);
  CHECK(ac_diff);
  CHECK(input_intact);
  CHECK(in_range);
}

TEST_CASE("batch augmentation rejects non-RGB tensors") {
  Rng rng(1);
  Tensor bad = Tensor::zeros({2, 1, 4, 4});
  CHECK_THROWS_AS(augment_batch(bad, rng), UsageError);
}
