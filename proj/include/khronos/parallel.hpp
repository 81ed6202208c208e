#pragma once

#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace khronos {

/// Worker-count default: KHRONOS_THREADS env override, else hardware threads.
inline int default_thread_count() {
    if (const char* env = std::getenv("KHRONOS_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Tiny blocking task pool. All bookkeeping happens under one mutex; task
/// bodies run unlocked. Tasks here are coarse (thousands of rows each), so
/// the locked claim is not a bottleneck, and the serialization makes cross-
/// generation races impossible. Any worker may run any task; callers must
/// keep task results independent of the executing worker (per-task output
/// slots, combined in task order).
class ThreadPool {
public:
    explicit ThreadPool(int workers) {
        workers = workers < 1 ? 1 : workers;
        for (int i = 0; i < workers - 1; ++i) {
            threads_.emplace_back([this] { worker_loop(); });
        }
    }

    ~ThreadPool() {
        {
            std::unique_lock lock(mutex_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    ThreadPool(const ThreadPool&) = delete;
    ThreadPool& operator=(const ThreadPool&) = delete;

    int workers() const noexcept { return static_cast<int>(threads_.size()) + 1; }

    /// Run task(0..n_tasks-1), blocking until all complete. The calling
    /// thread participates.
    void run(int n_tasks, const std::function<void(int)>& task) {
        if (n_tasks <= 0) return;
        if (threads_.empty() || n_tasks == 1) {
            for (int i = 0; i < n_tasks; ++i) task(i);
            return;
        }
        std::unique_lock lock(mutex_);
        task_ = &task;
        next_ = 0;
        remaining_ = n_tasks;
        total_ = n_tasks;
        cv_.notify_all();
        work(lock);
        done_cv_.wait(lock, [this] { return remaining_ == 0; });
        task_ = nullptr;
    }

private:
    /// Claim and run tasks until none are left. Entered and left holding the
    /// lock; released only around the task body. A new generation cannot
    /// start while remaining_ > 0, so claims never cross generations.
    void work(std::unique_lock<std::mutex>& lock) {
        while (next_ < total_) {
            const int i = next_++;
            const auto* task = task_;
            lock.unlock();
            (*task)(i);
            lock.lock();
            if (--remaining_ == 0) done_cv_.notify_all();
        }
    }

    void worker_loop() {
        std::unique_lock lock(mutex_);
        for (;;) {
            cv_.wait(lock, [this] { return stop_ || next_ < total_; });
            if (stop_) return;
            work(lock);
        }
    }

    std::vector<std::thread> threads_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    const std::function<void(int)>* task_ = nullptr;
    int next_ = 0;
    int total_ = 0;
    int remaining_ = 0;
    bool stop_ = false;
};

}  // namespace khronos
