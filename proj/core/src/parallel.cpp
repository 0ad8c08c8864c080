#include "spikedet/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>
#include <vector>

namespace spikedet {

namespace {

std::atomic<int> g_num_threads{1};

// Persistent pool; workers sleep on a condition variable between jobs.
// Rebuilt lazily when set_num_threads changes the size.
class Pool {
public:
  explicit Pool(int workers) : stop_(false), job_id_(0), pending_(0) {
    for (int i = 0; i < workers; ++i)
      threads_.emplace_back([this, i] { worker_loop(i); });
  }

  ~Pool() {
    {
      std::lock_guard<std::mutex> lk(m_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  int size() const { return static_cast<int>(threads_.size()); }

  void run(std::size_t count, const std::function<void(std::size_t, std::size_t)>& fn) {
    const int n = size() + 1; // workers plus the calling thread
    {
      std::lock_guard<std::mutex> lk(m_);
      fn_ = &fn;
      count_ = count;
      parts_ = n;
      pending_ = size();
      ++job_id_;
    }
    cv_.notify_all();
    run_chunk(0);
    std::unique_lock<std::mutex> lk(m_);
    done_cv_.wait(lk, [this] { return pending_ == 0; });
  }

private:
  void run_chunk(int part) {
    const std::size_t chunk = (count_ + parts_ - 1) / parts_;
    const std::size_t b = std::min(count_, chunk * static_cast<std::size_t>(part));
    const std::size_t e = std::min(count_, b + chunk);
    if (b < e) (*fn_)(b, e);
  }

  void worker_loop(int index) {
    std::uint64_t seen = 0;
    for (;;) {
      std::unique_lock<std::mutex> lk(m_);
      cv_.wait(lk, [&] { return stop_ || job_id_ != seen; });
      if (stop_) return;
      seen = job_id_;
      lk.unlock();
      run_chunk(index + 1);
      lk.lock();
      if (--pending_ == 0) done_cv_.notify_one();
    }
  }

  std::vector<std::thread> threads_;
  std::mutex m_;
  std::condition_variable cv_, done_cv_;
  bool stop_;
  std::uint64_t job_id_;
  int pending_;
  const std::function<void(std::size_t, std::size_t)>* fn_ = nullptr;
  std::size_t count_ = 0;
  int parts_ = 1;
};

std::mutex g_pool_mutex;
std::unique_ptr<Pool> g_pool;

} // namespace

void set_num_threads(int n) {
  if (n < 1) n = 1;
  g_num_threads.store(n);
  std::lock_guard<std::mutex> lk(g_pool_mutex);
  if (n == 1) {
    g_pool.reset();
  } else if (!g_pool || g_pool->size() != n - 1) {
    g_pool = std::make_unique<Pool>(n - 1);
  }
}

int num_threads() { return g_num_threads.load(); }

void parallel_for(std::size_t count, const std::function<void(std::size_t, std::size_t)>& fn) {
  if (count == 0) return;
  if (g_num_threads.load() <= 1 || count == 1) {
    fn(0, count);
    return;
  }
  std::lock_guard<std::mutex> lk(g_pool_mutex);
  if (!g_pool) {
    fn(0, count);
    return;
  }
  g_pool->run(count, fn);
}

} // namespace spikedet
