#pragma once

#include <cstdint>
#include <functional>

namespace salguide {

// Process-wide worker pool. parallel_for() splits [0, n) into one contiguous
// chunk per worker; the body must only write locations owned by its range, so
// results are bit-identical for every pool size. Pool size comes from
// SALGUIDE_THREADS (default: hardware concurrency). Size 1 runs inline.
class ThreadPool {
 public:
  static ThreadPool& instance();

  int size() const { return size_; }

  // fn(begin, end) is called for disjoint ranges covering [0, n).
  // Not reentrant: the body must not itself call parallel_for.
  void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

  ~ThreadPool();

 private:
  ThreadPool();
  ThreadPool(const ThreadPool&) = delete;

  struct Impl;
  Impl* impl_;
  int size_;
};

}  // namespace salguide
