#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>

namespace chelonia::hed {

using TimerId = std::uint64_t;

/// Clock, timers and randomness as seen by services. Services never read
/// the wall clock directly; the simulation implementation owns a virtual
/// clock and a seeded generator so whole deployments replay exactly.
class Runtime {
 public:
  virtual ~Runtime() = default;

  /// Seconds. Virtual in simulation, Unix time otherwise.
  virtual double now() const = 0;

  virtual TimerId schedule(double delay, std::function<void()> fn) = 0;

  /// Cancels a pending timer. If the timer is running on another thread the
  /// call waits for it to finish.
  virtual void cancel(TimerId id) = 0;

  virtual std::uint64_t randomU64() = 0;
  virtual void randomBytes(std::span<std::uint8_t> out) = 0;

  /// Time spent working inside a handler (holds the worker).
  virtual void busy(double seconds) = 0;

  /// Time spent waiting on the caller side, e.g. a retry backoff.
  virtual void sleep(double seconds) = 0;

  std::string randomHex(std::size_t bytes);
  double uniform(double lo, double hi);
};

/// Re-arms itself every `period` seconds until destroyed.
class PeriodicTask {
 public:
  PeriodicTask(Runtime& runtime, double period, double firstDelay, std::function<void()> fn);
  ~PeriodicTask();

  PeriodicTask(const PeriodicTask&) = delete;
  PeriodicTask& operator=(const PeriodicTask&) = delete;

  void stop();

 private:
  struct State {
    Runtime* runtime;
    double period;
    std::function<void()> fn;
    std::mutex mu;
    TimerId pending = 0;
    bool stopped = false;
  };

  static void arm(const std::shared_ptr<State>& state, double delay);

  std::shared_ptr<State> state_;
};

}  // namespace chelonia::hed
