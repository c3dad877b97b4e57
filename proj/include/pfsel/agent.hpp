#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "pfsel/codec.hpp"
#include "pfsel/dtree.hpp"
#include "pfsel/errors.hpp"
#include "pfsel/num_io.hpp"
#include "pfsel/trace.hpp"

namespace pfsel {

struct PollResult {
  enum class Status { kSample, kError, kEnd };
  Status status = Status::kEnd;
  CounterSample sample;
  std::string error;

  static PollResult ok(const CounterSample& s) { return {Status::kSample, s, {}}; }
  static PollResult fail(std::string msg) { return {Status::kError, {}, std::move(msg)}; }
  static PollResult end() { return {Status::kEnd, {}, {}}; }
};

// Periodic counter reader. poll() returns event deltas since the previous
// poll; successive samples carry strictly increasing timestamps.
class CounterSource {
public:
  virtual ~CounterSource() = default;
  virtual PollResult poll() = 0;
};

// Applies a prefetcher mask to the managed system. Must be idempotent for
// equal masks.
class ConfigSink {
public:
  virtual ~ConfigSink() = default;
  virtual void apply(PrefetcherConfig mask) = 0;
};

struct AgentConfig {
  std::uint32_t period_ms = 100;
  Model model;
  PrefetcherConfig initial_mask = PrefetcherConfig::platform_default();
  bool write_on_change_only = true;
  // When set, the loop sleeps period_ms between polls (the deployment
  // cadence). Replay and simulator sources run unpaced.
  bool realtime = false;
};

struct DecisionRecord {
  std::int64_t timestamp_ms = 0;
  FeatureVector features;
  PrefetcherConfig mask;
};

struct AgentState {
  const Model* model = nullptr;
  ConfigSink* sink = nullptr;
  bool write_on_change_only = true;
  PrefetcherConfig applied;                   // last mask handed to the sink
  std::vector<DecisionRecord>* log = nullptr;  // optional instrumentation
};

// One control step: features, tree inference, conditional sink write.
// O(1): seven divisions, four scalings, depth comparisons.
inline PrefetcherConfig agent_tick(AgentState& st, const CounterSample& sample) {
  const FeatureVector f = compute_features(sample);
  const PrefetcherConfig mask = predict(st.model->tree, f, st.model->scaler);
  if (!st.write_on_change_only || mask != st.applied) {
    st.sink->apply(mask);
    st.applied = mask;
  }
  if (st.log) st.log->push_back({sample.timestamp_ms, f, mask});
  return mask;
}

struct AgentRunResult {
  std::vector<DecisionRecord> log;
  std::uint64_t source_errors = 0;
  std::uint64_t ticks = 0;
};

// The runtime loop: apply the initial mask, then poll/tick until the source
// ends or stop is set; restore the initial mask on the way out. Source
// failures are counted and the previous mask retained; the loop never
// propagates them.
inline AgentRunResult run_agent(const AgentConfig& cfg, CounterSource& source, ConfigSink& sink,
                                const std::atomic<bool>& stop) {
  AgentRunResult result;
  AgentState st;
  st.model = &cfg.model;
  st.sink = &sink;
  st.write_on_change_only = cfg.write_on_change_only;
  st.applied = cfg.initial_mask;
  st.log = &result.log;

  sink.apply(cfg.initial_mask);
  while (!stop.load(std::memory_order_relaxed)) {
    if (cfg.realtime) std::this_thread::sleep_for(std::chrono::milliseconds(cfg.period_ms));
    const PollResult r = source.poll();
    if (r.status == PollResult::Status::kEnd) break;
    if (r.status == PollResult::Status::kError) {
      ++result.source_errors;
      continue;  // fail-safe: keep the previously applied mask
    }
    agent_tick(st, r.sample);
    ++result.ticks;
  }
  sink.apply(cfg.initial_mask);
  return result;
}

// Replays a recorded trace.
class ReplaySource final : public CounterSource {
public:
  explicit ReplaySource(Trace trace) : trace_(std::move(trace)) {}

  PollResult poll() override {
    if (next_ >= trace_.samples.size()) return PollResult::end();
    return PollResult::ok(trace_.samples[next_++]);
  }

private:
  Trace trace_;
  std::size_t next_ = 0;
};

// Swallows masks; used when replaying traces for analysis.
class NullSink final : public ConfigSink {
public:
  void apply(PrefetcherConfig) override {}
};

inline constexpr std::string_view kDecisionLogHeader =
    "timestamp_ms,f0,f1,f2,f3,f4,f5,f6,mask";

inline void write_decision_log(std::span<const DecisionRecord> log, std::ostream& out) {
  out << kDecisionLogHeader << "\n";
  for (const auto& rec : log) {
    out << rec.timestamp_ms;
    const auto a = rec.features.to_array();
    for (double v : a) out << ',' << fmt_double(v);
    out << ',' << rec.mask.to_string() << "\n";
  }
}

inline void write_decision_log(std::span<const DecisionRecord> log, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(path + ": cannot open for writing");
  write_decision_log(log, out);
}

// ---- os backend stub -------------------------------------------------------
// Real perf/MSR integration is a platform port: build with PFSEL_OS_BACKEND
// and link an adapter that defines these two factories.

#ifdef PFSEL_OS_BACKEND
std::unique_ptr<CounterSource> os_platform_source();
std::unique_ptr<ConfigSink> os_platform_sink();
#endif

inline std::unique_ptr<CounterSource> make_os_source() {
#ifdef PFSEL_OS_BACKEND
  return os_platform_source();
#else
  throw Error("os counter source: unsupported platform (build with PFSEL_OS_BACKEND and a platform adapter)");
#endif
}

inline std::unique_ptr<ConfigSink> make_os_sink() {
#ifdef PFSEL_OS_BACKEND
  return os_platform_sink();
#else
  throw Error("os config sink: unsupported platform (build with PFSEL_OS_BACKEND and a platform adapter)");
#endif
}

}  // namespace pfsel
