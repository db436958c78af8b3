#include "salguide/tensor.hpp"

#include <sstream>

#include "salguide/errors.hpp"

namespace salguide {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) {
    if (d < 0) throw UsageError("negative extent in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  Tensor t;
  t.d_ = std::make_shared<Payload>();
  t.d_->values.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
  t.d_->shape = std::move(shape);
  t.d_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::uninitialized(Shape shape, bool requires_grad) {
  Tensor t;
  t.d_ = std::make_shared<Payload>();
  t.d_->values.resize(static_cast<size_t>(shape_numel(shape)));
  t.d_->shape = std::move(shape);
  t.d_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (static_cast<int64_t>(values.size()) != shape_numel(shape))
    throw UsageError("value count " + std::to_string(values.size()) +
                     " does not fill shape " + shape_str(shape));
  Tensor t;
  t.d_ = std::make_shared<Payload>();
  t.d_->shape = std::move(shape);
  t.d_->values.assign(values.begin(), values.end());
  t.d_->requires_grad = requires_grad;
  return t;
}

std::span<double> Tensor::grad() {
  if (!d_->has_grad) {
    d_->grad.assign(d_->values.size(), 0.0);
    d_->has_grad = true;
  }
  return d_->grad;
}

std::span<const double> Tensor::grad_view() const {
  if (!d_->has_grad) throw UsageError("tensor has no gradient");
  return d_->grad;
}

void Tensor::zero_grad() {
  if (d_->has_grad) d_->grad.assign(d_->grad.size(), 0.0);
}

void Tensor::drop_grad() {
  d_->grad.clear();
  d_->grad.shrink_to_fit();
  d_->has_grad = false;
}

double Tensor::scalar() const {
  if (numel() != 1) throw UsageError("scalar() on tensor of shape " + shape_str(shape()));
  return d_->values[0];
}

Tensor Tensor::detached_copy() const {
  Tensor t;
  t.d_ = std::make_shared<Payload>();
  t.d_->shape = d_->shape;
  t.d_->values = d_->values;
  return t;
}

}  // namespace salguide
