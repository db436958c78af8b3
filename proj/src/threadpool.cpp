#include "salguide/threadpool.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace salguide {

struct ThreadPool::Impl {
  std::vector<std::thread> workers;
  std::mutex mu;
  std::condition_variable wake;
  std::condition_variable done;
  const std::function<void(int64_t, int64_t)>* job = nullptr;
  int64_t job_n = 0;
  uint64_t generation = 0;
  int pending = 0;
  bool stop = false;
  int nworkers = 0;

  void worker_loop(int rank) {
    uint64_t seen = 0;
    for (;;) {
      std::unique_lock<std::mutex> lk(mu);
      wake.wait(lk, [&] { return stop || generation != seen; });
      if (stop) return;
      seen = generation;
      const auto* fn = job;
      int64_t n = job_n;
      lk.unlock();

      run_chunk(*fn, n, rank, nworkers + 1);

      lk.lock();
      if (--pending == 0) done.notify_all();
    }
  }

  static void run_chunk(const std::function<void(int64_t, int64_t)>& fn, int64_t n,
                        int rank, int nchunks) {
    int64_t per = n / nchunks;
    int64_t rem = n % nchunks;
    int64_t begin = rank * per + std::min<int64_t>(rank, rem);
    int64_t end = begin + per + (rank < rem ? 1 : 0);
    if (begin < end) fn(begin, end);
  }
};

static int pool_size_from_env() {
  if (const char* env = std::getenv("SALGUIDE_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

ThreadPool::ThreadPool() : impl_(new Impl), size_(pool_size_from_env()) {
  impl_->nworkers = size_ - 1;
  for (int r = 0; r < impl_->nworkers; ++r) {
    // Caller thread takes rank 0; workers take 1..size-1.
    impl_->workers.emplace_back([this, r] { impl_->worker_loop(r + 1); });
  }
}

ThreadPool::~ThreadPool() {
  {
    std::lock_guard<std::mutex> lk(impl_->mu);
    impl_->stop = true;
  }
  impl_->wake.notify_all();
  for (auto& t : impl_->workers) t.join();
  delete impl_;
}

ThreadPool& ThreadPool::instance() {
  static ThreadPool pool;
  return pool;
}

void ThreadPool::parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  if (size_ == 1 || n == 1) {
    fn(0, n);
    return;
  }
  {
    std::lock_guard<std::mutex> lk(impl_->mu);
    impl_->job = &fn;
    impl_->job_n = n;
    impl_->pending = impl_->nworkers;
    ++impl_->generation;
  }
  impl_->wake.notify_all();
  Impl::run_chunk(fn, n, 0, size_);
  std::unique_lock<std::mutex> lk(impl_->mu);
  impl_->done.wait(lk, [&] { return impl_->pending == 0; });
}

}  // namespace salguide
