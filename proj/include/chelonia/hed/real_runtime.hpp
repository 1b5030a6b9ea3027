#pragma once

#include <condition_variable>
#include <map>
#include <mutex>
#include <thread>

#include "chelonia/hed/runtime.hpp"

namespace chelonia::hed {

/// Wall-clock runtime: Unix-time clock, one timer thread, OS randomness.
class RealRuntime final : public Runtime {
 public:
  RealRuntime();
  ~RealRuntime() override;

  RealRuntime(const RealRuntime&) = delete;
  RealRuntime& operator=(const RealRuntime&) = delete;

  void stop();

  double now() const override;
  TimerId schedule(double delay, std::function<void()> fn) override;
  void cancel(TimerId id) override;
  std::uint64_t randomU64() override;
  void randomBytes(std::span<std::uint8_t> out) override;
  void busy(double seconds) override;
  void sleep(double seconds) override;

 private:
  using Clock = std::chrono::steady_clock;

  void loop();

  std::mutex mu_;
  std::condition_variable cv_;
  std::multimap<Clock::time_point, std::pair<TimerId, std::function<void()>>> timers_;
  TimerId nextId_ = 0;
  TimerId running_ = 0;
  bool stopping_ = false;
  std::thread thread_;
};

}  // namespace chelonia::hed
