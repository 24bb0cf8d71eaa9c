#include "hexburst/threadpool.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>
#include <vector>

namespace hexburst {
namespace {

int g_threads = 0;  // 0 = hardware default

int effective_threads() {
  if (g_threads > 0) return g_threads;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

class Pool {
 public:
  explicit Pool(int workers) {
    for (int i = 0; i < workers; ++i) {
      threads_.emplace_back([this] { worker_loop(); });
    }
  }

  ~Pool() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  void run(const std::vector<std::function<void()>>& tasks) {
    if (tasks.empty()) return;
    {
      std::lock_guard<std::mutex> lk(mu_);
      pending_ = &tasks;
      next_ = 0;
      remaining_ = tasks.size();
    }
    cv_.notify_all();
    // The caller participates too.
    drain();
    std::unique_lock<std::mutex> lk(mu_);
    done_cv_.wait(lk, [this] { return remaining_ == 0; });
    pending_ = nullptr;
  }

 private:
  void drain() {
    for (;;) {
      const std::function<void()>* task = nullptr;
      {
        std::lock_guard<std::mutex> lk(mu_);
        if (pending_ && next_ < pending_->size()) task = &(*pending_)[next_++];
      }
      if (!task) return;
      (*task)();
      std::lock_guard<std::mutex> lk(mu_);
      if (--remaining_ == 0) done_cv_.notify_all();
    }
  }

  void worker_loop() {
    for (;;) {
      {
        std::unique_lock<std::mutex> lk(mu_);
        cv_.wait(lk, [this] {
          return stop_ || (pending_ && next_ < pending_->size());
        });
        if (stop_) return;
      }
      drain();
    }
  }

  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  const std::vector<std::function<void()>>* pending_ = nullptr;
  size_t next_ = 0;
  size_t remaining_ = 0;
  bool stop_ = false;
  std::vector<std::thread> threads_;
};

Pool* pool_instance(int workers) {
  static Pool* pool = nullptr;
  static int pool_workers = -1;
  if (pool_workers != workers) {
    delete pool;
    pool = workers > 0 ? new Pool(workers) : nullptr;
    pool_workers = workers;
  }
  return pool;
}

std::mutex g_pool_mu;

}  // namespace

void set_num_threads(int n) {
  std::lock_guard<std::mutex> lk(g_pool_mu);
  g_threads = n < 0 ? 0 : n;
}

int num_threads() { return effective_threads(); }

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  int t = effective_threads();
  // Small ranges are not worth the dispatch overhead.
  if (t <= 1 || n < 2) {
    fn(0, n);
    return;
  }
  int chunks = static_cast<int>(std::min<int64_t>(t, n));
  std::vector<std::function<void()>> tasks;
  tasks.reserve(chunks);
  int64_t base = n / chunks, rem = n % chunks, begin = 0;
  for (int i = 0; i < chunks; ++i) {
    int64_t len = base + (i < rem ? 1 : 0);
    int64_t b = begin, e = begin + len;
    tasks.emplace_back([&fn, b, e] { fn(b, e); });
    begin = e;
  }
  std::lock_guard<std::mutex> lk(g_pool_mu);
  pool_instance(t - 1);  // ensure pool matches current setting
  Pool* pool = pool_instance(t - 1);
  if (!pool) {
    fn(0, n);
    return;
  }
  pool->run(tasks);
}

}  // namespace hexburst
