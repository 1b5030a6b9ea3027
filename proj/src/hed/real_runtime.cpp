#include "chelonia/hed/real_runtime.hpp"

#include <chrono>

#include "chelonia/core/digest.hpp"

namespace chelonia::hed {

RealRuntime::RealRuntime() : thread_([this] { loop(); }) {}

RealRuntime::~RealRuntime() { stop(); }

void RealRuntime::stop() {
  {
    std::lock_guard lock(mu_);
    if (stopping_) return;
    stopping_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

double RealRuntime::now() const {
  using namespace std::chrono;
  return duration<double>(system_clock::now().time_since_epoch()).count();
}

TimerId RealRuntime::schedule(double delay, std::function<void()> fn) {
  auto due = Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(std::max(0.0, delay)));
  TimerId id;
  {
    std::lock_guard lock(mu_);
    id = ++nextId_;
    timers_.emplace(due, std::make_pair(id, std::move(fn)));
  }
  cv_.notify_all();
  return id;
}

void RealRuntime::cancel(TimerId id) {
  std::unique_lock lock(mu_);
  for (auto it = timers_.begin(); it != timers_.end(); ++it) {
    if (it->second.first == id) {
      timers_.erase(it);
      break;
    }
  }
  if (std::this_thread::get_id() != thread_.get_id()) {
    cv_.wait(lock, [&] { return running_ != id; });
  }
}

std::uint64_t RealRuntime::randomU64() {
  std::uint64_t v;
  secureRandom(std::span<std::uint8_t>(reinterpret_cast<std::uint8_t*>(&v), sizeof v));
  return v;
}

void RealRuntime::randomBytes(std::span<std::uint8_t> out) { secureRandom(out); }

void RealRuntime::busy(double seconds) { sleep(seconds); }

void RealRuntime::sleep(double seconds) {
  if (seconds > 0) std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

void RealRuntime::loop() {
  std::unique_lock lock(mu_);
  while (!stopping_) {
    if (timers_.empty()) {
      cv_.wait(lock);
      continue;
    }
    auto due = timers_.begin()->first;
    if (Clock::now() < due) {
      cv_.wait_until(lock, due);
      continue;
    }
    auto node = timers_.extract(timers_.begin());
    running_ = node.mapped().first;
    auto fn = std::move(node.mapped().second);
    lock.unlock();
    try {
      fn();
    } catch (...) {
      // Periodic activities report their own failures; a throwing timer
      // must not take the runtime down.
    }
    lock.lock();
    running_ = 0;
    cv_.notify_all();
  }
}

}  // namespace chelonia::hed
