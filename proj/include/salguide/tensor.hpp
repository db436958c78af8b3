#pragma once

#include <cstdint>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace salguide {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Allocator that default-initializes on resize, so buffers that are about to
// be overwritten in full skip the zero pass. Explicit fills still zero.
template <class T>
struct NoInitAlloc : std::allocator<T> {
  template <class U>
  struct rebind {
    using other = NoInitAlloc<U>;
  };
  template <class U, class... Args>
  void construct(U* p, Args&&... args) {
    if constexpr (sizeof...(Args) == 0)
      ::new (static_cast<void*>(p)) U;
    else
      ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

// Dense row-major f64 tensor with an optional gradient buffer of the same
// shape. Copies share storage (shared_ptr); the tape relies on that to
// accumulate gradients through whichever handle it holds.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  // Values start unspecified; callers must write every element.
  static Tensor uninitialized(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  int64_t numel() const { return static_cast<int64_t>(d_->values.size()); }
  int64_t dim(size_t i) const { return d_->shape.at(i); }
  size_t rank() const { return d_->shape.size(); }

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool v) { d_->requires_grad = v; }

  std::span<const double> data() const { return d_->values; }
  std::span<double> mutable_data() { return d_->values; }

  bool has_grad() const { return d_->has_grad; }
  // Allocates a zeroed grad buffer on first touch.
  std::span<double> grad();
  std::span<const double> grad_view() const;
  void zero_grad();
  void drop_grad();

  double scalar() const;  // numel() == 1

  // Identity of the underlying storage, for tape bookkeeping.
  const void* id() const { return d_.get(); }
  bool same_as(const Tensor& o) const { return d_ == o.d_; }

  Tensor detached_copy() const;  // fresh storage, same values, no grad

 private:
  struct Payload {
    Shape shape;
    std::vector<double, NoInitAlloc<double>> values;
    std::vector<double, NoInitAlloc<double>> grad;
    bool requires_grad = false;
    bool has_grad = false;
  };
  std::shared_ptr<Payload> d_;
};

}  // namespace salguide
