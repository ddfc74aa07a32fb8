#include "gradmarket/parallel.hpp"

#include <stdexcept>

namespace gradmarket {

ThreadPool::ThreadPool(unsigned threads) {
  if (threads == 0) threads = 1;
  workers_.reserve(threads);
  for (unsigned i = 0; i < threads; ++i) {
    workers_.emplace_back([this] { worker_loop(); });
  }
}

ThreadPool::~ThreadPool() {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    stop_ = true;
  }
  wake_.notify_all();
  for (auto& w : workers_) w.join();
}

void ThreadPool::worker_loop() {
  for (;;) {
    Task task;
    {
      std::unique_lock<std::mutex> lock(mutex_);
      wake_.wait(lock, [this] { return stop_ || !queue_.empty(); });
      if (queue_.empty()) {
        if (stop_) return;
        continue;
      }
      task = queue_.front();
      queue_.pop();
    }
    try {
      (*task.body)(task.index);
    } catch (...) {
      std::lock_guard<std::mutex> lock(mutex_);
      if (!first_error_) first_error_ = std::current_exception();
    }
    {
      std::lock_guard<std::mutex> lock(mutex_);
      in_flight_ -= 1;
      if (in_flight_ == 0) done_.notify_all();
    }
  }
}

void ThreadPool::parallel_for(std::size_t count,
                              const std::function<void(std::size_t)>& body) {
  if (count == 0) return;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    if (in_flight_ != 0) {
      throw std::logic_error("ThreadPool::parallel_for: nested use");
    }
    first_error_ = nullptr;
    in_flight_ = count;
    for (std::size_t i = 0; i < count; ++i) queue_.push(Task{&body, i});
  }
  wake_.notify_all();
  std::unique_lock<std::mutex> lock(mutex_);
  done_.wait(lock, [this] { return in_flight_ == 0; });
  if (first_error_) std::rethrow_exception(first_error_);
}

}  // namespace gradmarket
