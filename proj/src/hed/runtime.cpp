#include "chelonia/hed/runtime.hpp"

#include <vector>

#include "chelonia/core/digest.hpp"

namespace chelonia::hed {

std::string Runtime::randomHex(std::size_t bytes) {
  std::vector<std::uint8_t> buf(bytes);
  randomBytes(buf);
  return toHex(buf);
}

double Runtime::uniform(double lo, double hi) {
  // 53 random bits mapped onto [0, 1).
  double unit = static_cast<double>(randomU64() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * unit;
}

PeriodicTask::PeriodicTask(Runtime& runtime, double period, double firstDelay, std::function<void()> fn)
    : state_(std::make_shared<State>()) {
  state_->runtime = &runtime;
  state_->period = period;
  state_->fn = std::move(fn);
  arm(state_, firstDelay);
}

PeriodicTask::~PeriodicTask() { stop(); }

void PeriodicTask::stop() {
  TimerId pending = 0;
  {
    std::lock_guard lock(state_->mu);
    if (state_->stopped) return;
    state_->stopped = true;
    pending = state_->pending;
  }
  if (pending != 0) state_->runtime->cancel(pending);
}

void PeriodicTask::arm(const std::shared_ptr<State>& state, double delay) {
  std::weak_ptr<State> weak = state;
  std::lock_guard lock(state->mu);
  if (state->stopped) return;
  state->pending = state->runtime->schedule(delay, [weak] {
    auto s = weak.lock();
    if (!s) return;
    {
      std::lock_guard lock(s->mu);
      if (s->stopped) return;
    }
    s->fn();
    arm(s, s->period);
  });
}

}  // namespace chelonia::hed
