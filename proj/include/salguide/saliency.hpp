#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "salguide/model.hpp"

namespace salguide {

// Class-conditional saliency for one block's output (gradient-weighted
// channel sum, relu'd). Seeded from the pre-softmax logit.

struct SaliencyMap {
  int block = 0;
  int class_id = 0;
  int64_t h = 0, w = 0;
  std::vector<double> values;  // h*w, all >= 0
};

struct ChannelWeights {
  std::vector<double> values;  // one weight per channel
};

// Annotation resampled to one block's output extent; values in {0,1}.
struct LayerAnnotation {
  int64_t h = 0, w = 0;
  std::vector<double> values;
};

struct PeakLoc {
  int64_t row = 0, col = 0;
};

// alpha_k = spatial mean of d(logit)/d(act_k), sequential sum then one divide.
ChannelWeights saliency_channel_weights(std::span<const double> act_grads, int64_t c,
                                        int64_t hw);
// map[p] = relu(sum_k alpha_k * act_k[p]), fma-accumulated in channel order.
SaliencyMap combine_saliency(std::span<const double> acts, const ChannelWeights& alpha,
                             int64_t c, int64_t h, int64_t w, int block, int class_id);

// Full pipeline on one image [1,Ci,H,W]. Parameter gradients touched by the
// internal probe are cleared before returning.
SaliencyMap gradcam(const ModelState& state, const Tensor& image, int class_id,
                    int block);
// Batched variant; one backward pass seeded with the sum of each row's picked
// logit, which matches per-image maps bit for bit (rows stay independent
// through the head).
std::vector<SaliencyMap> gradcam_batch(const ModelState& state, const Tensor& batch,
                                       const std::vector<int>& class_ids, int block);

// Strictly positive values -> 1.
BinaryMask binarize(const SaliencyMap& map);

// Location of the max; ties resolve to the smallest row-major index.
PeakLoc peak(const SaliencyMap& map);

// Peak falls on an annotated cell. An all-zero map never hits.
bool pointing_hit(const SaliencyMap& map, const LayerAnnotation& annotation);

// Nearest-neighbor resize (floor index mapping); exact for integer factors.
std::vector<double> upsample_nearest(std::span<const double> v, int64_t h, int64_t w,
                                     int64_t out_h, int64_t out_w);

// 8-bit PGM dump, min-max normalized (constant maps write as all zeros).
// out_h/out_w of 0 keep the native extent.
void write_saliency_pgm(const SaliencyMap& map, const std::filesystem::path& path,
                        int64_t out_h = 0, int64_t out_w = 0);

}  // namespace salguide
