#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "salguide/rng.hpp"
#include "salguide/tensor.hpp"

namespace salguide {

// Photometric augmentation: each image gets a chain of five distinct
// transforms drawn from six families, in random order with random magnitudes.
// Spatial layout is untouched, so annotations and labels stay valid as-is.

enum class TransformFamily {
  Sharpness,   // blend with a smoothed copy: blur + f*(v - blur)
  Brightness,  // v * f
  Color,       // saturation: luma + f*(v - luma)
  Contrast,    // image luma mean + f*(v - mean)
  Grayscale,   // v -> luma (no magnitude)
  RgbPerturb,  // per-channel offset
};

constexpr double kLumaR = 0.299, kLumaG = 0.587, kLumaB = 0.114;

struct TransformStep {
  TransformFamily family;
  double factor = 1.0;                       // ~ U[0.5, 1.5] where used
  std::array<double, 3> offsets{0, 0, 0};    // ~ U[-0.1, 0.1], RgbPerturb only
};

using AugmentationChain = std::vector<TransformStep>;  // always 5 steps

// Shuffles the six families, keeps the first five, then draws each kept
// step's magnitudes in chain order.
AugmentationChain sample_chain(Rng& rng);

// In-place on one planar RGB image (3*h*w doubles in [0,1]); output is
// clamped to [0,1] after every step.
void apply_chain(const AugmentationChain& chain, double* image, int64_t h, int64_t w);

// Fresh tensor; one chain drawn per image, in batch order.
Tensor augment_batch(const Tensor& batch, Rng& rng);

}  // namespace salguide
