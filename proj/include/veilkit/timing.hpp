#pragma once

#include <chrono>
#include <cstddef>
#include <exception>
#include <functional>
#include <string>
#include <utility>

namespace veilkit {

struct StageTiming {
  std::string stage;
  std::size_t frames = 0;
  double seconds = 0.0;

  double frames_per_second() const noexcept { return seconds > 0.0 ? static_cast<double>(frames) / seconds : 0.0; }
};

/// Optional sink for per-stage timings; a default-constructed log is silent.
class StageLog {
public:
  StageLog() = default;
  explicit StageLog(std::function<void(const StageTiming&)> sink) : sink_(std::move(sink)) {}

  template <class Fn>
  decltype(auto) time(std::string stage, std::size_t frames, Fn&& fn) const {
    const auto start = std::chrono::steady_clock::now();
    struct Report {
      const StageLog* log;
      std::string stage;
      std::size_t frames;
      std::chrono::steady_clock::time_point start;
      ~Report() {
        if (!log->sink_ || std::uncaught_exceptions() > 0) return;
        const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
        log->sink_(StageTiming{stage, frames, dt.count()});
      }
    } report{this, std::move(stage), frames, start};
    return fn();
  }

private:
  std::function<void(const StageTiming&)> sink_;
};

}  // namespace veilkit
