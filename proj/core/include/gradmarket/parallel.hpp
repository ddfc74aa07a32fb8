#pragma once

#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <queue>
#include <thread>
#include <vector>

namespace gradmarket {

// Small fixed-size worker pool. parallel_for blocks the calling thread until
// every index has run; bodies must not call back into the same pool.
class ThreadPool {
 public:
  explicit ThreadPool(unsigned threads);
  ~ThreadPool();

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  unsigned size() const { return static_cast<unsigned>(workers_.size()); }

  // Run body(0..count-1), each index exactly once, in unspecified order.
  // Rethrows the first body exception after all indices finish or are
  // abandoned.
  void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

 private:
  struct Task {
    const std::function<void(std::size_t)>* body;
    std::size_t index;
  };

  void worker_loop();

  std::vector<std::thread> workers_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  std::queue<Task> queue_;
  std::size_t in_flight_ = 0;
  std::exception_ptr first_error_;
  bool stop_ = false;
};

}  // namespace gradmarket
