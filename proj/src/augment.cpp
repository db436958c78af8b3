#include "salguide/augment.hpp"

#include <algorithm>
#include <cmath>

#include "salguide/errors.hpp"

namespace salguide {

namespace {

void clamp01(double* image, int64_t n) {
  for (int64_t i = 0; i < n; ++i) image[i] = std::clamp(image[i], 0.0, 1.0);
}

void luma_plane(const double* image, int64_t hw, std::vector<double>& out) {
  out.resize(hw);
  for (int64_t p = 0; p < hw; ++p)
    out[p] = kLumaR * image[p] + kLumaG * image[hw + p] + kLumaB * image[2 * hw + p];
}

// PIL-style smoothing kernel (center-weighted); border pixels keep their
// original value.
void smooth_plane(const double* src, int64_t h, int64_t w, std::vector<double>& out) {
  out.assign(src, src + h * w);
  for (int64_t y = 1; y + 1 < h; ++y)
    for (int64_t x = 1; x + 1 < w; ++x) {
      double acc = 5.0 * src[y * w + x];
      acc += src[(y - 1) * w + x - 1] + src[(y - 1) * w + x] + src[(y - 1) * w + x + 1];
      acc += src[y * w + x - 1] + src[y * w + x + 1];
      acc += src[(y + 1) * w + x - 1] + src[(y + 1) * w + x] + src[(y + 1) * w + x + 1];
      out[y * w + x] = acc / 13.0;
    }
}

void apply_step(const TransformStep& st, double* image, int64_t h, int64_t w) {
  const int64_t hw = h * w;
  const double f = st.factor;
  std::vector<double> tmp;
  switch (st.family) {
    case TransformFamily::Sharpness:
      for (int ch = 0; ch < 3; ++ch) {
        double* plane = image + ch * hw;
        smooth_plane(plane, h, w, tmp);
        for (int64_t p = 0; p < hw; ++p)
          plane[p] = tmp[p] + f * (plane[p] - tmp[p]);
      }
      break;
    case TransformFamily::Brightness:
      for (int64_t i = 0; i < 3 * hw; ++i) image[i] *= f;
      break;
    case TransformFamily::Color:
      luma_plane(image, hw, tmp);
      for (int ch = 0; ch < 3; ++ch)
        for (int64_t p = 0; p < hw; ++p)
          image[ch * hw + p] = tmp[p] + f * (image[ch * hw + p] - tmp[p]);
      break;
    case TransformFamily::Contrast: {
      luma_plane(image, hw, tmp);
      double mean = 0.0;
      for (double v : tmp) mean += v;
      mean /= static_cast<double>(hw);
      for (int64_t i = 0; i < 3 * hw; ++i) image[i] = mean + f * (image[i] - mean);
      break;
    }
    case TransformFamily::Grayscale:
      luma_plane(image, hw, tmp);
      for (int ch = 0; ch < 3; ++ch)
        for (int64_t p = 0; p < hw; ++p) image[ch * hw + p] = tmp[p];
      break;
    case TransformFamily::RgbPerturb:
      for (int ch = 0; ch < 3; ++ch)
        for (int64_t p = 0; p < hw; ++p) image[ch * hw + p] += st.offsets[ch];
      break;
  }
  clamp01(image, 3 * hw);
}

}  // namespace

AugmentationChain sample_chain(Rng& rng) {
  std::vector<int> families = {0, 1, 2, 3, 4, 5};
  rng.shuffle(families);
  AugmentationChain chain;
  for (int i = 0; i < 5; ++i) {
    TransformStep st;
    st.family = static_cast<TransformFamily>(families[i]);
    switch (st.family) {
      case TransformFamily::Grayscale:
        break;  // no magnitude
      case TransformFamily::RgbPerturb:
        for (double& o : st.offsets) o = rng.uniform(-0.1, 0.1);
        break;
      default:
        st.factor = rng.uniform(0.5, 1.5);
    }
    chain.push_back(st);
  }
  return chain;
}

void apply_chain(const AugmentationChain& chain, double* image, int64_t h, int64_t w) {
  for (const TransformStep& st : chain) apply_step(st, image, h, w);
}

Tensor augment_batch(const Tensor& batch, Rng& rng) {
  if (batch.rank() != 4 || batch.dim(1) != 3)
    throw UsageError("augment_batch: expected [N,3,H,W], got " +
                     shape_str(batch.shape()));
  Tensor out = batch.detached_copy();
  const int64_t n = batch.dim(0), h = batch.dim(2), w = batch.dim(3);
  double* data = out.mutable_data().data();
  for (int64_t i = 0; i < n; ++i) {
    const AugmentationChain chain = sample_chain(rng);
    apply_chain(chain, data + i * 3 * h * w, h, w);
  }
  return out;
}

}  // namespace salguide
