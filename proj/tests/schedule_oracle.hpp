#pragma once

// Discrete-event model of the vsync schedule in exact integer time.
// One tick is 1/(1000*refreshHz) s, so a frame period is exactly 1000 ticks
// and whole-millisecond workloads are whole tick counts.

#include <cstdint>
#include <vector>

namespace oracle {

struct ScheduledFrame {
  std::int64_t startTick;
  std::int64_t intervalTicks;
  bool dropped;
};

// refreshHz and all ms inputs must be integers for the model to be exact.
inline std::vector<ScheduledFrame> simulate_schedule(int refreshHz, int runningStartMs, int sceneMs, int otherMs,
                                                     int frames) {
  const std::int64_t period = 1000;
  const std::int64_t rs = static_cast<std::int64_t>(runningStartMs) * refreshHz;
  const std::int64_t scene = static_cast<std::int64_t>(sceneMs) * refreshHz;
  const std::int64_t other = static_cast<std::int64_t>(otherMs) * refreshHz;
  std::vector<ScheduledFrame> out;
  std::int64_t vsync = period;  // first vsync after t = 0
  for (int f = 0; f < frames; ++f) {
    const std::int64_t start = vsync - rs;
    const std::int64_t submit = start + scene;
    const std::int64_t end = submit + other;
    const bool dropped = submit > start + period;
    std::int64_t next = vsync + period;
    while (next - rs < end) next += period;
    out.push_back({start, next - vsync, dropped});
    vsync = next;
  }
  return out;
}

inline double oracle_fps(const std::vector<ScheduledFrame>& fs, int refreshHz) {
  std::int64_t ticks = 0;
  for (const auto& f : fs) ticks += f.intervalTicks;
  // frames / (ticks / (1000 * refreshHz)) seconds
  return static_cast<double>(fs.size()) * 1000.0 * refreshHz / static_cast<double>(ticks);
}

}  // namespace oracle
