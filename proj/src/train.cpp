#include "salguide/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <span>

#include "salguide/augment.hpp"
#include "salguide/errors.hpp"
#include "salguide/rng.hpp"
#include "salguide/tape.hpp"

namespace salguide {

const char* train_mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::Standard: return "noxai";
    case TrainMode::Xai: return "xai";
    case TrainMode::Aug: return "aug";
    case TrainMode::XaiAug: return "xai-aug";
  }
  throw UsageError("unknown train mode");
}

TrainMode train_mode_from(const std::string& name) {
  if (name == "noxai") return TrainMode::Standard;
  if (name == "xai") return TrainMode::Xai;
  if (name == "aug") return TrainMode::Aug;
  if (name == "xai-aug") return TrainMode::XaiAug;
  throw UsageError("unknown train mode '" + name + "' (noxai|xai|aug|xai-aug)");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw UsageError("epochs must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw UsageError("learning rate must be positive and finite");
  if (batch_size < 1) throw UsageError("batch size must be >= 1");
  if (freq < 1) throw UsageError("guide frequency must be >= 1");
  if (guide_block < 0) throw UsageError("guide block must be >= 0");
}

int TrainConfig::resolved_block(const ModelConfig& mc) const {
  const int last = static_cast<int>(mc.blocks.size());
  if (guide_block == 0) return last;
  if (guide_block > last)
    throw UsageError("guide block " + std::to_string(guide_block) + " out of range (model has " +
                     std::to_string(last) + " blocks)");
  return guide_block;
}

bool is_guided_epoch(int epoch, int freq) { return epoch % freq == 0; }

LayerAnnotation downscale_annotation(const std::vector<uint8_t>& mask, int64_t h, int64_t w,
                                     int64_t th, int64_t tw) {
  if (static_cast<int64_t>(mask.size()) != h * w) throw UsageError("annotation size mismatch");
  if (th < 1 || tw < 1 || th > h || tw > w) throw UsageError("bad downscale extents");
  LayerAnnotation out;
  out.h = th;
  out.w = tw;
  out.values.assign(static_cast<size_t>(th * tw), 0.0);
  for (int64_t y = 0; y < h; ++y) {
    const int64_t ty = y * th / h;
    for (int64_t x = 0; x < w; ++x) {
      const uint8_t v = mask[static_cast<size_t>(y * w + x)];
      if (v > 1) throw UsageError("annotation must be binary");
      if (v) out.values[static_cast<size_t>(ty * tw + x * tw / w)] = 1.0;
    }
  }
  return out;
}

Batch make_batch(const Dataset& ds, const std::vector<int64_t>& indices) {
  const int64_t n = static_cast<int64_t>(indices.size());
  if (n == 0) throw UsageError("empty batch");
  Batch b;
  b.images = Tensor::uninitialized({n, 3, kImageSize, kImageSize});
  b.labels.resize(static_cast<size_t>(n));
  b.example_ids.resize(static_cast<size_t>(n));
  b.annotations.resize(static_cast<size_t>(n));
  const int64_t plane = 3LL * kImageSize * kImageSize;
  double* dst = b.images.mutable_data().data();
  for (int64_t i = 0; i < n; ++i) {
    const auto& ex = ds.examples.at(static_cast<size_t>(indices[static_cast<size_t>(i)]));
    std::memcpy(dst + i * plane, ex.image.data(), sizeof(double) * static_cast<size_t>(plane));
    b.labels[static_cast<size_t>(i)] = ex.label;
    b.example_ids[static_cast<size_t>(i)] = ex.id;
    b.annotations[static_cast<size_t>(i)] = &ex.annotation;
  }
  return b;
}

namespace {

double finite_or_throw(double loss) {
  if (!std::isfinite(loss)) throw NumericError("training loss is not finite");
  return loss;
}

double run_update(ModelState& state, const Batch& batch, double learning_rate, int mask_block,
                  const BinaryMask* mask) {
  Tape tape;
  ForwardRecord rec = forward(state, tape, batch.images, mask_block, mask);
  Tensor loss = tape.softmax_cross_entropy(rec.logits, batch.labels);
  const double value = finite_or_throw(loss.scalar());
  tape.backward(loss);
  auto params = state.parameters();
  sgd_update(params, learning_rate);
  return value;
}

}  // namespace

double standard_step(ModelState& state, const Batch& batch, double learning_rate) {
  return run_update(state, batch, learning_rate, 0, nullptr);
}

double xai_step(ModelState& state, const Batch& batch, double learning_rate, int block, int epoch,
                std::vector<TraceEntry>* trace) {
  const int64_t n = batch.images.dim(0);
  std::vector<SaliencyMap> maps = gradcam_batch(state, batch.images, batch.labels, block);
  const auto [bh, bw] = state.config.block_extent(block);
  BinaryMask mask;
  mask.n = n;
  mask.h = bh;
  mask.w = bw;
  mask.values.assign(static_cast<size_t>(n * bh * bw), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    const size_t si = static_cast<size_t>(i);
    const SaliencyMap& s = maps[si];
    const LayerAnnotation ann =
        downscale_annotation(*batch.annotations[si], kImageSize, kImageSize, bh, bw);
    const PeakLoc p = peak(s);
    const bool on_shape = ann.values[static_cast<size_t>(p.row * bw + p.col)] == 1.0;
    double* slot = mask.values.data() + static_cast<size_t>(i * bh * bw);
    if (on_shape) {
      const BinaryMask bm = binarize(s);
      std::copy(bm.values.begin(), bm.values.end(), slot);
    } else {
      std::copy(ann.values.begin(), ann.values.end(), slot);
    }
    if (trace) {
      trace->push_back({epoch, batch.example_ids[si], on_shape ? 1 : 2, p.row, p.col, on_shape});
    }
  }
  return run_update(state, batch, learning_rate, block, &mask);
}

EvalResult evaluate(const ModelState& state, const Dataset& ds, int block, int batch_size,
                    bool with_pointing) {
  const int64_t total = static_cast<int64_t>(ds.examples.size());
  if (total == 0) throw DataError("cannot evaluate an empty dataset");
  // The probe below writes parameter gradients; work on a throwaway copy so a
  // const state stays const in effect.
  ModelState scratch = state.clone();
  EvalResult res;
  double loss_sum = 0.0;
  int64_t correct = 0;
  std::vector<int64_t> order(static_cast<size_t>(total));
  for (int64_t i = 0; i < total; ++i) order[static_cast<size_t>(i)] = i;
  const int resolved = block == 0 ? static_cast<int>(state.config.blocks.size()) : block;
  const auto [bh, bw] = state.config.block_extent(resolved);
  for (int64_t start = 0; start < total; start += batch_size) {
    const int64_t end = std::min(total, start + batch_size);
    std::vector<int64_t> chunk(order.begin() + start, order.begin() + end);
    Batch b = make_batch(ds, chunk);
    const int64_t n = b.images.dim(0);

    Tape tape;
    ForwardRecord rec = forward(scratch, tape, b.images);
    const std::span<const double> logits = rec.logits.data();
    const int64_t classes = rec.logits.dim(1);
    for (int64_t i = 0; i < n; ++i) {
      int64_t best = 0;
      for (int64_t c = 1; c < classes; ++c) {
        if (logits[i * classes + c] > logits[i * classes + best]) best = c;
      }
      if (best == b.labels[static_cast<size_t>(i)]) ++correct;
    }
    Tensor loss = tape.softmax_cross_entropy(rec.logits, b.labels);
    loss_sum += finite_or_throw(loss.scalar()) * static_cast<double>(n);

    if (with_pointing) {
      const Tensor& act = rec.block_outputs.at(static_cast<size_t>(resolved - 1));
      const int64_t ch = act.dim(1);
      Tensor seed = tape.sum(tape.pick_rows(rec.logits, b.labels));
      tape.backward_until(seed, act);
      const int64_t per = ch * bh * bw;
      for (int64_t i = 0; i < n; ++i) {
        const auto grads = act.grad_view().subspan(static_cast<size_t>(i * per),
                                                   static_cast<size_t>(per));
        const auto acts = act.data().subspan(static_cast<size_t>(i * per),
                                             static_cast<size_t>(per));
        ChannelWeights alpha = saliency_channel_weights(grads, ch, bh * bw);
        SaliencyMap s = combine_saliency(acts, alpha, ch, bh, bw, resolved,
                                         b.labels[static_cast<size_t>(i)]);
        const LayerAnnotation ann = downscale_annotation(*b.annotations[static_cast<size_t>(i)],
                                                         kImageSize, kImageSize, bh, bw);
        if (pointing_hit(s, ann)) ++res.pointing_hits;
        ++res.pointing_total;
      }
      scratch.zero_grad();
    }
  }
  res.accuracy = static_cast<double>(correct) / static_cast<double>(total);
  res.mean_loss = loss_sum / static_cast<double>(total);
  return res;
}

std::vector<EpochMetrics> train(ModelState& state, const Dataset& train_set,
                                const Dataset& val_set, const TrainConfig& cfg,
                                std::vector<TraceEntry>* trace, const TrainHooks& hooks) {
  cfg.validate();
  const int block = cfg.resolved_block(state.config);
  const bool guides = cfg.mode == TrainMode::Xai || cfg.mode == TrainMode::XaiAug;
  const bool augments = cfg.mode == TrainMode::Aug || cfg.mode == TrainMode::XaiAug;
  const int64_t total = static_cast<int64_t>(train_set.examples.size());
  if (total == 0) throw DataError("cannot train on an empty dataset");

  std::vector<int64_t> order(static_cast<size_t>(total));
  for (int64_t i = 0; i < total; ++i) order[static_cast<size_t>(i)] = i;

  std::vector<EpochMetrics> history;
  history.reserve(static_cast<size_t>(cfg.epochs));
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, {hash_str("shuffle"), static_cast<uint64_t>(epoch)}));
    shuffle_rng.shuffle(order);
    Rng aug_rng(derive_seed(cfg.seed, {hash_str("augment"), static_cast<uint64_t>(epoch)}));
    const bool guided = guides && is_guided_epoch(epoch, cfg.freq);

    double loss_sum = 0.0;
    int64_t batches = 0;
    for (int64_t start = 0; start < total; start += cfg.batch_size) {
      const int64_t end = std::min(total, start + cfg.batch_size);
      std::vector<int64_t> chunk(order.begin() + start, order.begin() + end);
      Batch b = make_batch(train_set, chunk);
      if (augments) b.images = augment_batch(b.images, aug_rng);
      loss_sum += guided ? xai_step(state, b, cfg.learning_rate, block, epoch, trace)
                         : standard_step(state, b, cfg.learning_rate);
      ++batches;
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = loss_sum / static_cast<double>(batches);
    EvalResult ev = evaluate(state, val_set, block, cfg.batch_size, true);
    em.val_accuracy = ev.accuracy;
    em.pointing_hits = ev.pointing_hits;
    em.pointing_total = ev.pointing_total;
    em.val_loss = ev.mean_loss;
    history.push_back(em);
    if (hooks.on_epoch) hooks.on_epoch(em, state);
  }
  return history;
}

}  // namespace salguide
