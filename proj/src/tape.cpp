#include "salguide/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "salguide/errors.hpp"
#include "salguide/kernels.hpp"
#include "salguide/threadpool.hpp"

namespace salguide {

namespace {

void check_rank(const Tensor& t, size_t r, const char* what) {
  if (t.rank() != r)
    throw UsageError(std::string(what) + ": expected rank " + std::to_string(r) +
                     ", got shape " + shape_str(t.shape()));
}

}  // namespace

Tensor Tape::record(Tensor output, std::function<void()> backward) {
  nodes_.push_back({output, std::move(backward)});
  return output;
}

Tensor Tape::conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                    int64_t stride, int64_t padding) {
  check_rank(input, 4, "conv2d input");
  check_rank(kernel, 4, "conv2d kernel");
  check_rank(bias, 1, "conv2d bias");
  if (kernel.dim(2) != kernel.dim(3))
    throw UsageError("conv2d: kernel must be square, got " + shape_str(kernel.shape()));
  if (kernel.dim(1) != input.dim(1))
    throw UsageError("conv2d: kernel expects " + std::to_string(kernel.dim(1)) +
                     " input channels, input has " + std::to_string(input.dim(1)));
  if (bias.dim(0) != kernel.dim(0))
    throw UsageError("conv2d: bias size does not match output channels");

  const auto dims = kernels::make_conv_dims(input.dim(0), input.dim(1), input.dim(2),
                                            input.dim(3), kernel.dim(0), kernel.dim(2),
                                            stride, padding);
  const bool rg = input.requires_grad() || kernel.requires_grad() || bias.requires_grad();
  Tensor out = Tensor::uninitialized({dims.n, dims.c_out, dims.oh, dims.ow}, rg);
  kernels::active().conv2d_forward(dims, input.data().data(), kernel.data().data(),
                                   bias.data().data(), out.mutable_data().data());
  Tensor in = input, k = kernel, b = bias;
  return record(out, [in, k, b, out, dims]() mutable {
    const double* gy = out.grad_view().data();
    if (in.requires_grad())
      kernels::active().conv2d_backward_input(dims, gy, k.data().data(), in.grad().data());
    if (k.requires_grad())
      kernels::active().conv2d_backward_weights(dims, gy, in.data().data(), k.grad().data());
    if (b.requires_grad())
      kernels::active().conv2d_backward_bias(dims, gy, b.grad().data());
  });
}

Tensor Tape::relu(const Tensor& input) {
  Tensor out = Tensor::uninitialized(input.shape(), input.requires_grad());
  kernels::active().relu_forward(input.data().data(), out.mutable_data().data(),
                                 input.numel());
  Tensor in = input;
  return record(out, [in, out]() mutable {
    if (!in.requires_grad()) return;
    kernels::active().relu_backward(in.data().data(), out.grad_view().data(),
                                    in.grad().data(), in.numel());
  });
}

Tensor Tape::maxpool2d(const Tensor& input) {
  check_rank(input, 4, "maxpool2d input");
  const int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h % 2 != 0 || w % 2 != 0)
    throw UsageError("maxpool2d: spatial extents must be even, got " +
                     shape_str(input.shape()));
  const int64_t oh = h / 2, ow = w / 2;
  Tensor out = Tensor::uninitialized({n, c, oh, ow}, input.requires_grad());
  auto argmax = std::make_shared<std::vector<int32_t>>(out.numel());

  const double* x = input.data().data();
  double* y = out.mutable_data().data();
  int32_t* am = argmax->data();
  ThreadPool::instance().parallel_for(n * c, [&](int64_t b, int64_t e) {
    for (int64_t plane = b; plane < e; ++plane) {
      const int64_t in_off = plane * h * w, out_off = plane * oh * ow;
      for (int64_t r = 0; r < oh; ++r) {
        for (int64_t q = 0; q < ow; ++q) {
          // Window scan in row-major order; strict > keeps the first max.
          int64_t best = in_off + (2 * r) * w + 2 * q;
          double best_v = x[best];
          const int64_t cand[3] = {best + 1, best + w, best + w + 1};
          for (int64_t idx : cand) {
            if (x[idx] > best_v) {
              best_v = x[idx];
              best = idx;
            }
          }
          y[out_off + r * ow + q] = best_v;
          am[out_off + r * ow + q] = static_cast<int32_t>(best);
        }
      }
    }
  });

  Tensor in = input;
  const int64_t out_plane = oh * ow;
  return record(out, [in, out, argmax, n, c, out_plane]() mutable {
    if (!in.requires_grad()) return;
    const double* gy = out.grad_view().data();
    double* gx = in.grad().data();
    const int32_t* am = argmax->data();
    ThreadPool::instance().parallel_for(n * c, [&](int64_t b, int64_t e) {
      for (int64_t plane = b; plane < e; ++plane) {
        const int64_t off = plane * out_plane;
        for (int64_t i = 0; i < out_plane; ++i) gx[am[off + i]] += gy[off + i];
      }
    });
  });
}

Tensor Tape::global_avg_pool(const Tensor& input) {
  check_rank(input, 4, "global_avg_pool input");
  const int64_t n = input.dim(0), c = input.dim(1);
  const int64_t hw = input.dim(2) * input.dim(3);
  Tensor out = Tensor::uninitialized({n, c}, input.requires_grad());
  const double* x = input.data().data();
  double* y = out.mutable_data().data();
  for (int64_t p = 0; p < n * c; ++p) {
    double acc = 0.0;
    for (int64_t i = 0; i < hw; ++i) acc += x[p * hw + i];
    y[p] = acc / static_cast<double>(hw);
  }
  Tensor in = input;
  return record(out, [in, out, n, c, hw]() mutable {
    if (!in.requires_grad()) return;
    const double* gy = out.grad_view().data();
    double* gx = in.grad().data();
    for (int64_t p = 0; p < n * c; ++p) {
      const double g = gy[p] / static_cast<double>(hw);
      for (int64_t i = 0; i < hw; ++i) gx[p * hw + i] += g;
    }
  });
}

Tensor Tape::dense(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  check_rank(input, 2, "dense input");
  check_rank(weight, 2, "dense weight");
  check_rank(bias, 1, "dense bias");
  const int64_t n = input.dim(0), d = input.dim(1), k = weight.dim(0);
  if (weight.dim(1) != d)
    throw UsageError("dense: weight expects " + std::to_string(weight.dim(1)) +
                     " features, input has " + std::to_string(d));
  if (bias.dim(0) != k) throw UsageError("dense: bias size does not match outputs");

  const bool rg = input.requires_grad() || weight.requires_grad() || bias.requires_grad();
  Tensor out = Tensor::uninitialized({n, k}, rg);
  const double* x = input.data().data();
  const double* w = weight.data().data();
  const double* b = bias.data().data();
  double* y = out.mutable_data().data();
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < k; ++j) {
      double acc = b[j];
      for (int64_t f = 0; f < d; ++f) acc = std::fma(x[i * d + f], w[j * d + f], acc);
      y[i * k + j] = acc;
    }
  }
  Tensor in = input, wt = weight, bs = bias;
  return record(out, [in, wt, bs, out, n, d, k]() mutable {
    const double* gy = out.grad_view().data();
    const double* x = in.data().data();
    const double* w = wt.data().data();
    if (in.requires_grad()) {
      double* gx = in.grad().data();
      for (int64_t i = 0; i < n; ++i)
        for (int64_t f = 0; f < d; ++f) {
          double acc = gx[i * d + f];
          for (int64_t j = 0; j < k; ++j)
            acc = std::fma(gy[i * k + j], w[j * d + f], acc);
          gx[i * d + f] = acc;
        }
    }
    if (wt.requires_grad()) {
      double* gw = wt.grad().data();
      for (int64_t j = 0; j < k; ++j)
        for (int64_t f = 0; f < d; ++f) {
          double acc = gw[j * d + f];
          for (int64_t i = 0; i < n; ++i)
            acc = std::fma(gy[i * k + j], x[i * d + f], acc);
          gw[j * d + f] = acc;
        }
    }
    if (bs.requires_grad()) {
      double* gb = bs.grad().data();
      for (int64_t j = 0; j < k; ++j) {
        double acc = gb[j];
        for (int64_t i = 0; i < n; ++i) acc += gy[i * k + j];
        gb[j] = acc;
      }
    }
  });
}

Tensor Tape::softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  check_rank(logits, 2, "softmax_cross_entropy logits");
  const int64_t n = logits.dim(0), k = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != n)
    throw UsageError("softmax_cross_entropy: got " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(n) + " rows");
  for (int v : labels)
    if (v < 0 || v >= k)
      throw UsageError("softmax_cross_entropy: label " + std::to_string(v) +
                       " out of range [0," + std::to_string(k) + ")");

  auto probs = std::make_shared<std::vector<double>>(n * k);
  const double* l = logits.data().data();
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double m = l[i * k];
    for (int64_t j = 1; j < k; ++j) m = std::max(m, l[i * k + j]);
    double z = 0.0;
    for (int64_t j = 0; j < k; ++j) {
      const double e = std::exp(l[i * k + j] - m);
      (*probs)[i * k + j] = e;
      z += e;
    }
    for (int64_t j = 0; j < k; ++j) (*probs)[i * k + j] /= z;
    total += std::log(z) - (l[i * k + labels[i]] - m);
  }
  Tensor out = Tensor::zeros({1}, logits.requires_grad());
  out.mutable_data()[0] = total / static_cast<double>(n);

  Tensor in = logits;
  auto lab = std::make_shared<std::vector<int>>(labels);
  return record(out, [in, out, probs, lab, n, k]() mutable {
    if (!in.requires_grad()) return;
    const double scale = out.grad_view()[0] / static_cast<double>(n);
    double* gx = in.grad().data();
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < k; ++j) {
        const double onehot = (j == (*lab)[i]) ? 1.0 : 0.0;
        gx[i * k + j] += scale * ((*probs)[i * k + j] - onehot);
      }
  });
}

Tensor Tape::channel_mask(const Tensor& input, const Tensor& mask) {
  check_rank(input, 4, "channel_mask input");
  check_rank(mask, 3, "channel_mask mask");
  if (mask.dim(0) != input.dim(0) || mask.dim(1) != input.dim(2) ||
      mask.dim(2) != input.dim(3))
    throw UsageError("channel_mask: mask " + shape_str(mask.shape()) +
                     " does not match input " + shape_str(input.shape()));
  const int64_t n = input.dim(0), c = input.dim(1);
  const int64_t hw = input.dim(2) * input.dim(3);
  Tensor out = Tensor::uninitialized(input.shape(), input.requires_grad());
  kernels::active().channel_mask_forward(n, c, hw, input.data().data(),
                                         mask.data().data(), out.mutable_data().data());
  Tensor in = input, m = mask;
  return record(out, [in, m, out, n, c, hw]() mutable {
    if (!in.requires_grad()) return;
    kernels::active().channel_mask_backward(n, c, hw, out.grad_view().data(),
                                            m.data().data(), in.grad().data());
  });
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw UsageError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  Tensor out = Tensor::uninitialized(a.shape(), a.requires_grad() || b.requires_grad());
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* y = out.mutable_data().data();
  for (int64_t i = 0; i < a.numel(); ++i) y[i] = pa[i] + pb[i];
  Tensor ta = a, tb = b;
  return record(out, [ta, tb, out]() mutable {
    const double* gy = out.grad_view().data();
    if (ta.requires_grad())
      kernels::active().accumulate(ta.numel(), gy, ta.grad().data());
    if (tb.requires_grad())
      kernels::active().accumulate(tb.numel(), gy, tb.grad().data());
  });
}

Tensor Tape::sum(const Tensor& a) {
  Tensor out = Tensor::zeros({1}, a.requires_grad());
  const double* x = a.data().data();
  double acc = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) acc += x[i];
  out.mutable_data()[0] = acc;
  Tensor in = a;
  return record(out, [in, out]() mutable {
    if (!in.requires_grad()) return;
    const double g = out.grad_view()[0];
    double* gx = in.grad().data();
    for (int64_t i = 0; i < in.numel(); ++i) gx[i] += g;
  });
}

Tensor Tape::pick(const Tensor& a, int64_t flat_index) {
  if (flat_index < 0 || flat_index >= a.numel())
    throw UsageError("pick: index " + std::to_string(flat_index) +
                     " out of range for " + std::to_string(a.numel()) + " elements");
  Tensor out = Tensor::zeros({1}, a.requires_grad());
  out.mutable_data()[0] = a.data()[flat_index];
  Tensor in = a;
  return record(out, [in, out, flat_index]() mutable {
    if (!in.requires_grad()) return;
    in.grad()[flat_index] += out.grad_view()[0];
  });
}

Tensor Tape::pick_rows(const Tensor& a, const std::vector<int>& cols) {
  check_rank(a, 2, "pick_rows input");
  const int64_t n = a.dim(0), k = a.dim(1);
  if (static_cast<int64_t>(cols.size()) != n)
    throw UsageError("pick_rows: got " + std::to_string(cols.size()) +
                     " columns for " + std::to_string(n) + " rows");
  for (int cidx : cols)
    if (cidx < 0 || cidx >= k) throw UsageError("pick_rows: column out of range");
  Tensor out = Tensor::uninitialized({n}, a.requires_grad());
  for (int64_t i = 0; i < n; ++i)
    out.mutable_data()[i] = a.data()[i * k + cols[i]];
  Tensor in = a;
  auto cc = std::make_shared<std::vector<int>>(cols);
  return record(out, [in, out, cc, n, k]() mutable {
    if (!in.requires_grad()) return;
    const double* gy = out.grad_view().data();
    double* gx = in.grad().data();
    for (int64_t i = 0; i < n; ++i) gx[i * k + (*cc)[i]] += gy[i];
  });
}

void Tape::backward_impl(const Tensor& loss, const Tensor* stop) {
  int64_t start = -1;
  for (int64_t i = static_cast<int64_t>(nodes_.size()) - 1; i >= 0; --i) {
    if (nodes_[i].output.same_as(loss)) {
      start = i;
      break;
    }
  }
  if (start < 0) throw UsageError("backward: tensor was not produced by this tape");
  if (loss.numel() != 1) throw UsageError("backward: seed tensor must be scalar");
  if (!loss.requires_grad())
    throw UsageError("backward: nothing on this tape requires gradients");

  Tensor seed = loss;
  seed.grad()[0] = 1.0;
  for (int64_t i = start; i >= 0; --i) {
    Node& nd = nodes_[i];
    if (stop && nd.output.same_as(*stop)) return;  // consumers already ran
    if (!nd.output.has_grad()) continue;           // does not influence the loss
    nd.backward();
  }
  if (stop) throw UsageError("backward_until: stop tensor was not produced by this tape");
}

void Tape::backward(const Tensor& loss) { backward_impl(loss, nullptr); }

void Tape::backward_until(const Tensor& loss, const Tensor& stop) {
  backward_impl(loss, &stop);
}

void sgd_update(std::vector<Tensor>& params, double learning_rate) {
  for (Tensor& p : params) {
    if (!p.has_grad()) throw UsageError("sgd_update: parameter has no gradient");
    kernels::active().axpy(p.numel(), -learning_rate, p.grad().data(),
                           p.mutable_data().data());
    p.zero_grad();
  }
}

}  // namespace salguide
