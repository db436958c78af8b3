#include "salguide/saliency.hpp"

#include <cmath>
#include <fstream>

#include "salguide/errors.hpp"

namespace salguide {

ChannelWeights saliency_channel_weights(std::span<const double> act_grads, int64_t c,
                                        int64_t hw) {
  if (static_cast<int64_t>(act_grads.size()) != c * hw)
    throw UsageError("saliency_channel_weights: grad size mismatch");
  ChannelWeights w;
  w.values.resize(c);
  for (int64_t k = 0; k < c; ++k) {
    double acc = 0.0;
    for (int64_t p = 0; p < hw; ++p) acc += act_grads[k * hw + p];
    w.values[k] = acc / static_cast<double>(hw);
  }
  return w;
}

SaliencyMap combine_saliency(std::span<const double> acts, const ChannelWeights& alpha,
                             int64_t c, int64_t h, int64_t w, int block, int class_id) {
  if (static_cast<int64_t>(acts.size()) != c * h * w)
    throw UsageError("combine_saliency: activation size mismatch");
  if (static_cast<int64_t>(alpha.values.size()) != c)
    throw UsageError("combine_saliency: weight count mismatch");
  SaliencyMap map;
  map.block = block;
  map.class_id = class_id;
  map.h = h;
  map.w = w;
  map.values.resize(h * w);
  for (int64_t p = 0; p < h * w; ++p) {
    double acc = 0.0;
    for (int64_t k = 0; k < c; ++k)
      acc = std::fma(alpha.values[k], acts[k * h * w + p], acc);
    map.values[p] = acc > 0.0 ? acc : 0.0;
  }
  return map;
}

std::vector<SaliencyMap> gradcam_batch(const ModelState& state, const Tensor& batch,
                                       const std::vector<int>& class_ids, int block) {
  if (block < 1 || block > state.config.num_blocks())
    throw UsageError("gradcam: block " + std::to_string(block) + " out of range");
  const int64_t n = batch.dim(0);
  if (static_cast<int64_t>(class_ids.size()) != n)
    throw UsageError("gradcam: one class id per image required");
  for (int cidx : class_ids)
    if (cidx < 0 || cidx >= state.config.num_classes)
      throw UsageError("gradcam: class id out of range");

  Tape tape;
  ForwardRecord rec = forward(state, tape, batch);
  Tensor act = rec.block_outputs[block - 1];
  Tensor seed = tape.sum(tape.pick_rows(rec.logits, class_ids));
  tape.backward_until(seed, act);

  const int64_t c = act.dim(1), h = act.dim(2), w = act.dim(3);
  const auto values = act.data();
  const auto grads = act.grad_view();
  std::vector<SaliencyMap> out;
  out.reserve(n);
  for (int64_t i = 0; i < n; ++i) {
    const auto a = values.subspan(i * c * h * w, c * h * w);
    const auto g = grads.subspan(i * c * h * w, c * h * w);
    out.push_back(combine_saliency(a, saliency_channel_weights(g, c, h * w), c, h, w,
                                   block, class_ids[i]));
  }
  state.zero_grad();  // discard probe gradients on the parameters
  return out;
}

SaliencyMap gradcam(const ModelState& state, const Tensor& image, int class_id,
                    int block) {
  if (image.rank() != 4 || image.dim(0) != 1)
    throw UsageError("gradcam: expected a single image [1,C,H,W]");
  return gradcam_batch(state, image, {class_id}, block)[0];
}

BinaryMask binarize(const SaliencyMap& map) {
  BinaryMask m;
  m.n = 1;
  m.h = map.h;
  m.w = map.w;
  m.values.resize(map.values.size());
  for (size_t i = 0; i < map.values.size(); ++i)
    m.values[i] = map.values[i] > 0.0 ? 1.0 : 0.0;
  return m;
}

PeakLoc peak(const SaliencyMap& map) {
  int64_t best = 0;
  for (int64_t i = 1; i < static_cast<int64_t>(map.values.size()); ++i)
    if (map.values[i] > map.values[best]) best = i;
  return {best / map.w, best % map.w};
}

bool pointing_hit(const SaliencyMap& map, const LayerAnnotation& annotation) {
  if (annotation.h != map.h || annotation.w != map.w)
    throw UsageError("pointing_hit: annotation extent does not match map");
  bool any = false;
  for (double v : map.values)
    if (v > 0.0) {
      any = true;
      break;
    }
  if (!any) return false;  // a silent map points at nothing
  const PeakLoc p = peak(map);
  return annotation.values[p.row * map.w + p.col] == 1.0;
}

std::vector<double> upsample_nearest(std::span<const double> v, int64_t h, int64_t w,
                                     int64_t out_h, int64_t out_w) {
  if (static_cast<int64_t>(v.size()) != h * w)
    throw UsageError("upsample_nearest: size mismatch");
  if (out_h < 1 || out_w < 1) throw UsageError("upsample_nearest: bad target extent");
  std::vector<double> out(out_h * out_w);
  for (int64_t r = 0; r < out_h; ++r) {
    const int64_t sr = r * h / out_h;
    for (int64_t cidx = 0; cidx < out_w; ++cidx)
      out[r * out_w + cidx] = v[sr * w + cidx * w / out_w];
  }
  return out;
}

void write_saliency_pgm(const SaliencyMap& map, const std::filesystem::path& path,
                        int64_t out_h, int64_t out_w) {
  if (out_h == 0) out_h = map.h;
  if (out_w == 0) out_w = map.w;
  // Min-max normalized; a constant (e.g. all-zero) map writes as all zeros.
  double mn = map.values.empty() ? 0.0 : map.values[0], mx = mn;
  for (double v : map.values) {
    mn = std::min(mn, v);
    mx = std::max(mx, v);
  }
  std::vector<double> norm(map.values.begin(), map.values.end());
  for (double& v : norm) v = mx > mn ? (v - mn) / (mx - mn) : 0.0;
  const std::vector<double> up = upsample_nearest(norm, map.h, map.w, out_h, out_w);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os << "P5\n" << out_w << " " << out_h << "\n255\n";
  for (double v : up)
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  if (!os) throw DataError("write failed: " + path.string());
}

}  // namespace salguide
