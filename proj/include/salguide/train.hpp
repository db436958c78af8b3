#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "salguide/data.hpp"
#include "salguide/model.hpp"
#include "salguide/saliency.hpp"

namespace salguide {

// Saliency-guided training: on guided epochs every example's activations at
// one block are gated by a binary spatial mask before the update. The mask is
// the example's own binarized saliency when its peak already falls on the
// annotated shape, otherwise the downscaled annotation itself.

enum class TrainMode { Standard, Xai, Aug, XaiAug };
const char* train_mode_name(TrainMode mode);
TrainMode train_mode_from(const std::string& name);  // noxai|xai|aug|xai-aug

struct TrainConfig {
  int epochs = 50;
  // Sized for this small from-scratch net; fine-tuning a large pretrained
  // backbone would want orders of magnitude less (reference setups use 1e-5).
  double learning_rate = 1e-3;
  int batch_size = 32;
  int freq = 5;        // guided epochs are those with epoch % freq == 0
  int guide_block = 0;  // block whose activations are gated; 0 = last block
  TrainMode mode = TrainMode::Standard;
  uint64_t seed = 0;

  void validate() const;
  int resolved_block(const ModelConfig& mc) const;  // maps 0 -> last block
};

bool is_guided_epoch(int epoch, int freq);  // epochs are 1-based

// Any-covered downscale of a {0,1} mask: target cell = 1 iff any source pixel
// whose nearest-neighbor cell it is equals 1.
LayerAnnotation downscale_annotation(const std::vector<uint8_t>& mask, int64_t h,
                                     int64_t w, int64_t th, int64_t tw);

struct Batch {
  Tensor images;  // [N,3,H,W]
  std::vector<int> labels;
  std::vector<int64_t> example_ids;
  std::vector<const std::vector<uint8_t>*> annotations;  // borrowed from a Dataset
};

Batch make_batch(const Dataset& ds, const std::vector<int64_t>& indices);

// One per-example record from a guided step: which mask branch ran (1 =
// binarized saliency, 2 = annotation fallback) and where the saliency peaked.
struct TraceEntry {
  int epoch = 0;
  int64_t example_id = 0;
  int branch = 0;
  int64_t peak_row = 0, peak_col = 0;
  bool hit = false;  // annotation value at the peak
};

// Forward, cross-entropy backward, SGD. Returns the batch loss.
double standard_step(ModelState& state, const Batch& batch, double learning_rate);

// Guided step: saliency probe (gradients discarded), mask choice per example,
// fresh masked forward/backward, SGD. Returns the masked-pass loss.
double xai_step(ModelState& state, const Batch& batch, double learning_rate, int block,
                int epoch, std::vector<TraceEntry>* trace);

struct EvalResult {
  double accuracy = 0.0;
  int64_t pointing_hits = 0, pointing_total = 0;
  double mean_loss = 0.0;
};

// Accuracy/mean loss over a dataset; optionally the pointing game at `block`
// (true-class saliency peak inside the downscaled annotation).
EvalResult evaluate(const ModelState& state, const Dataset& ds, int block,
                    int batch_size, bool with_pointing);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  int64_t pointing_hits = 0, pointing_total = 0;
  double val_loss = 0.0;
};

struct TrainHooks {
  std::function<void(const EpochMetrics&, const ModelState&)> on_epoch;
};

// Full loop: per-epoch shuffle, optional augmentation, guided steps on
// guided epochs, validation metrics per epoch. Throws NumericError if the
// loss goes non-finite.
std::vector<EpochMetrics> train(ModelState& state, const Dataset& train_set,
                                const Dataset& val_set, const TrainConfig& cfg,
                                std::vector<TraceEntry>* trace = nullptr,
                                const TrainHooks& hooks = {});

}  // namespace salguide
