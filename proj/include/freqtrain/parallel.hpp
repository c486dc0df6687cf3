#pragma once

#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace freqtrain {

// Persistent worker pool for data-parallel loops. Results are independent of
// the thread count because every output element is accumulated sequentially
// inside exactly one chunk invocation.
class ThreadPool {
 public:
  static ThreadPool& instance() {
    static ThreadPool pool;
    return pool;
  }

  int workers() const { return static_cast<int>(threads_.size()) + 1; }

  // Runs fn(begin, end) over contiguous chunks of [0, n). The calling thread
  // participates. Do not nest.
  void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    if (n <= 0) return;
    const int nw = workers();
    if (nw == 1 || n < 2 * nw) {
      fn(0, n);
      return;
    }
    const int64_t chunk = (n + nw - 1) / nw;
    {
      std::unique_lock<std::mutex> lk(mu_);
      job_ = &fn;
      job_n_ = n;
      job_chunk_ = chunk;
      next_chunk_ = 1;  // chunk 0 runs on the calling thread
      pending_ = 0;
      for (int64_t c = 1; c * chunk < n; ++c) ++pending_;
      ++generation_;
      cv_.notify_all();
    }
    fn(0, std::min<int64_t>(chunk, n));
    std::unique_lock<std::mutex> lk(mu_);
    done_cv_.wait(lk, [&] { return pending_ == 0; });
    job_ = nullptr;
  }

  ~ThreadPool() {
    {
      std::unique_lock<std::mutex> lk(mu_);
      stop_ = true;
      cv_.notify_all();
    }
    for (auto& t : threads_) t.join();
  }

 private:
  ThreadPool() {
    int n = 0;
    if (const char* env = std::getenv("FREQTRAIN_THREADS")) n = std::atoi(env);
    if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
    if (n <= 0) n = 1;
    for (int i = 0; i < n - 1; ++i) {
      threads_.emplace_back([this] { worker_loop(); });
    }
  }

  void worker_loop() {
    uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock<std::mutex> lk(mu_);
        cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
      }
      for (;;) {
        const std::function<void(int64_t, int64_t)>* job = nullptr;
        int64_t c, n, chunk;
        {
          // Job state is re-read under the lock on every grab: a fresh job
          // may reuse the previous callable's address with new bounds.
          std::unique_lock<std::mutex> lk(mu_);
          if (generation_ != seen || job_ == nullptr) break;
          n = job_n_;
          chunk = job_chunk_;
          if (next_chunk_ * chunk >= n) break;
          c = next_chunk_++;
          job = job_;
        }
        (*job)(c * chunk, std::min<int64_t>((c + 1) * chunk, n));
        {
          std::unique_lock<std::mutex> lk(mu_);
          if (--pending_ == 0) done_cv_.notify_all();
        }
      }
    }
  }

  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_, done_cv_;
  const std::function<void(int64_t, int64_t)>* job_ = nullptr;
  int64_t job_n_ = 0, job_chunk_ = 0, next_chunk_ = 0;
  int pending_ = 0;
  uint64_t generation_ = 0;
  bool stop_ = false;
};

inline void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  ThreadPool::instance().parallel_for(n, fn);
}

}  // namespace freqtrain
