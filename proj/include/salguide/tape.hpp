#pragma once

#include <functional>
#include <vector>

#include "salguide/tensor.hpp"

namespace salguide {

// Define-by-run reverse-mode tape over the op set the classifier needs.
// A tape is built fresh for every forward pass and used from one thread;
// parallelism lives inside the kernels.
//
// Gradients accumulate (+=) into each tensor's grad buffer, so a tensor
// feeding several consumers sums their contributions, and parameter grads
// survive across tapes until zero_grad().
class Tape {
 public:
  // input [N,Ci,H,W] (+) kernel [Co,Ci,k,k] + bias [Co] -> [N,Co,OH,OW].
  // Cross-correlation, square kernel, symmetric zero padding.
  Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                int64_t stride, int64_t padding);
  Tensor relu(const Tensor& input);
  // 2x2 window, stride 2; requires even H and W. Ties pick the first element
  // of the window in row-major order.
  Tensor maxpool2d(const Tensor& input);
  Tensor global_avg_pool(const Tensor& input);  // [N,C,H,W] -> [N,C]
  // input [N,D] * weight [K,D]^T + bias [K] -> [N,K]
  Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias);
  // Mean over the batch of -log softmax(logits)[label]; returns a scalar.
  Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);
  // x [N,C,H,W] * m [N,H,W], broadcast over channels. The mask is a constant:
  // it never receives a gradient.
  Tensor channel_mask(const Tensor& input, const Tensor& mask);
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sum(const Tensor& a);                      // -> scalar
  Tensor pick(const Tensor& a, int64_t flat_index);  // -> scalar
  // rows [N,K], one column index per row -> [N]
  Tensor pick_rows(const Tensor& a, const std::vector<int>& cols);

  // Reverse sweep seeded with d(loss)/d(loss) = 1. loss must be a scalar
  // produced by this tape. One sweep per tape.
  void backward(const Tensor& loss);
  // Same, but stops once `stop`'s gradient is complete (all its consumers
  // sit later on the tape); nothing below `stop` is touched.
  void backward_until(const Tensor& loss, const Tensor& stop);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor output;
    std::function<void()> backward;
  };
  std::vector<Node> nodes_;

  Tensor record(Tensor output, std::function<void()> backward);
  void backward_impl(const Tensor& loss, const Tensor* stop);
};

// params -= lr * grad, then grads are zeroed. Throws if a param has no grad.
void sgd_update(std::vector<Tensor>& params, double learning_rate);

}  // namespace salguide
