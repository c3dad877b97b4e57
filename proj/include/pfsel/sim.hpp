#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "pfsel/agent.hpp"
#include "pfsel/codec.hpp"
#include "pfsel/errors.hpp"
#include "pfsel/num_io.hpp"
#include "pfsel/rng.hpp"
#include "pfsel/toml_lite.hpp"
#include "pfsel/trace.hpp"
#include "pfsel/trace_io.hpp"

namespace pfsel {

// One scripted phase: per-tick counter rates at multiplier 1.0 (canonical
// counter order) and the per-config IPC multiplier table. The argmax of the
// multipliers is the planted oracle config for the phase.
struct SegmentSpec {
  std::uint64_t duration_ticks = 1;
  std::array<double, CounterSample::kCounterCount> base_rates{};
  std::array<double, PrefetcherConfig::kValidCount> multipliers{};

  double multiplier(PrefetcherConfig c) const {
    const int i = PrefetcherConfig::valid_index(c);
    if (i < 0) throw DataError("segment: config " + c.to_string() + " not in valid set");
    return multipliers[i];
  }

  PrefetcherConfig planted_best() const {
    auto set = PrefetcherConfig::valid_set();
    int best = 0;
    for (int i = 1; i < PrefetcherConfig::kValidCount; ++i)
      if (multipliers[i] > multipliers[best]) best = i;  // ties keep the lowest mask
    return set[best];
  }
};

struct WorkloadSpec {
  std::string name;
  std::uint64_t seed = 0;
  double noise_sigma = 0.0;  // relative Gaussian noise on emitted counters
  std::uint32_t period_ms = 100;
  std::vector<SegmentSpec> segments;

  void validate() const {
    if (segments.empty()) throw DataError("workload '" + name + "': no segments");
    for (std::size_t s = 0; s < segments.size(); ++s) {
      const auto& seg = segments[s];
      if (seg.duration_ticks < 1)
        throw DataError("workload '" + name + "' segment " + std::to_string(s) + ": duration must be >= 1");
      if (!(seg.base_rates[0] > 0))
        throw DataError("workload '" + name + "' segment " + std::to_string(s) + ": instructions rate must be > 0");
      for (double r : seg.base_rates)
        if (r < 0) throw DataError("workload '" + name + "' segment " + std::to_string(s) + ": negative rate");
      for (double m : seg.multipliers)
        if (!(m > 0)) throw DataError("workload '" + name + "' segment " + std::to_string(s) + ": multipliers must be > 0");
    }
    if (noise_sigma < 0) throw DataError("workload '" + name + "': negative noise_sigma");
  }

  // Total instructions at multiplier 1; the work closed_loop must consume.
  double total_work() const {
    double w = 0;
    for (const auto& seg : segments) w += static_cast<double>(seg.duration_ticks) * seg.base_rates[0];
    return w;
  }

  // Lower bound on execution ticks: every segment at its best multiplier.
  double oracle_ticks() const {
    double t = 0;
    for (const auto& seg : segments)
      t += static_cast<double>(seg.duration_ticks) / seg.multiplier(seg.planted_best());
    return t;
  }
};

// Steps the scripted system one sampling tick at a time. Work is consumed at
// base_instructions * multiplier(segment, mask) per tick; a tick that drains
// a segment hands its remaining fraction to the next segment. noise_sigma
// perturbs the emitted counters only, never the consumption.
class Simulation {
public:
  explicit Simulation(const WorkloadSpec& spec, std::uint64_t seed_salt = 0)
      : spec_(&spec), rng_(spec.seed ^ seed_salt) {
    spec.validate();
    if (!spec_->segments.empty())
      work_left_ = static_cast<double>(spec_->segments[0].duration_ticks) * spec_->segments[0].base_rates[0];
  }

  bool done() const { return seg_ >= spec_->segments.size(); }
  double ticks() const { return ticks_; }
  double instructions_consumed() const { return consumed_; }
  int current_segment() const { return static_cast<int>(seg_); }
  const WorkloadSpec& spec() const { return *spec_; }

  CounterSample step(PrefetcherConfig mask) {
    if (done()) throw DataError("simulation: step after completion");
    std::array<double, CounterSample::kCounterCount> clean{};
    double time_left = 1.0;
    while (time_left > 0 && !done()) {
      const auto& seg = spec_->segments[seg_];
      const double rate = seg.base_rates[0] * seg.multiplier(mask);  // work per tick
      const double possible = rate * time_left;
      double used_work, used_time;
      if (work_left_ > possible) {  // tick ends inside this segment
        used_work = possible;
        used_time = time_left;
      } else {  // segment drains; hand the rest of the tick to the next one
        used_work = work_left_;
        used_time = std::min(work_left_ / rate, time_left);
      }
      clean[0] += used_work;  // instructions scale with the multiplier
      for (std::size_t c = 1; c < clean.size(); ++c) clean[c] += seg.base_rates[c] * used_time;
      consumed_ += used_work;
      work_left_ -= used_work;
      time_left -= used_time;
      if (!(work_left_ > 0)) {
        ++seg_;
        if (!done())
          work_left_ = static_cast<double>(spec_->segments[seg_].duration_ticks) *
                       spec_->segments[seg_].base_rates[0];
      }
    }
    ticks_ += 1.0 - time_left;
    ++emitted_;
    return emit(clean);
  }

private:
  CounterSample emit(const std::array<double, CounterSample::kCounterCount>& clean) {
    std::array<std::uint64_t, CounterSample::kCounterCount> counts{};
    for (std::size_t c = 0; c < clean.size(); ++c) {
      double v = clean[c];
      if (spec_->noise_sigma > 0) v *= std::max(0.0, 1.0 + spec_->noise_sigma * rng_.normal());
      counts[c] = static_cast<std::uint64_t>(std::llround(std::max(0.0, v)));
    }
    CounterSample s;
    s.timestamp_ms = static_cast<std::int64_t>(emitted_) * spec_->period_ms;
    s.instructions = counts[0];
    s.mem_accesses = counts[1];
    s.branch_misses = counts[2];
    s.cache_misses = counts[3];
    s.cpu_cycles = counts[4];
    s.l2d_refills = counts[5];
    s.l2i_refills = counts[6];
    return s;
  }

  const WorkloadSpec* spec_;
  Rng rng_;
  std::size_t seg_ = 0;
  double work_left_ = 0;
  double consumed_ = 0;
  double ticks_ = 0;
  std::uint64_t emitted_ = 0;
};

// Runs the whole script under one fixed config, emitting duration_ticks
// samples per segment. This is the stage-1 data-collection sweep.
inline Trace sweep(const WorkloadSpec& spec, PrefetcherConfig config) {
  spec.validate();
  if (!config.is_valid()) throw DataError("sweep: config " + config.to_string() + " not in valid set");
  Trace trace;
  trace.meta.workload_name = spec.name;
  trace.meta.config = config;
  trace.meta.period_ms = spec.period_ms;
  Rng rng(spec.seed ^ (0x9E3779B97F4A7C15ull * (config.mask + 1)));
  std::uint64_t tick = 0;
  for (const auto& seg : spec.segments) {
    const double mult = seg.multiplier(config);
    for (std::uint64_t t = 0; t < seg.duration_ticks; ++t) {
      CounterSample s;
      std::array<double, CounterSample::kCounterCount> clean = seg.base_rates;
      clean[0] *= mult;
      std::array<std::uint64_t, CounterSample::kCounterCount> counts{};
      for (std::size_t c = 0; c < clean.size(); ++c) {
        double v = clean[c];
        if (spec.noise_sigma > 0) v *= std::max(0.0, 1.0 + spec.noise_sigma * rng.normal());
        counts[c] = static_cast<std::uint64_t>(std::llround(std::max(0.0, v)));
      }
      s.timestamp_ms = static_cast<std::int64_t>(++tick) * spec.period_ms;
      s.instructions = counts[0];
      s.mem_accesses = counts[1];
      s.branch_misses = counts[2];
      s.cache_misses = counts[3];
      s.cpu_cycles = counts[4];
      s.l2d_refills = counts[5];
      s.l2i_refills = counts[6];
      trace.samples.push_back(s);
    }
  }
  return trace;
}

// Execution ticks under a fixed mask.
inline double closed_loop(const WorkloadSpec& spec, PrefetcherConfig mask) {
  if (!mask.is_valid()) throw DataError("closed_loop: config not in valid set");
  Simulation sim(spec);
  while (!sim.done()) sim.step(mask);
  return sim.ticks();
}

// Execution ticks with the model in the loop: the decision made from the
// sample of tick t drives tick t+1.
inline double closed_loop(const WorkloadSpec& spec, const Model& model,
                          PrefetcherConfig initial = PrefetcherConfig::platform_default()) {
  Simulation sim(spec);
  PrefetcherConfig mask = initial;
  while (!sim.done()) {
    const CounterSample s = sim.step(mask);
    mask = predict(model.tree, compute_features(s), model.scaler);
  }
  return sim.ticks();
}

// CounterSource/ConfigSink pair over one shared simulation, so run_agent can
// drive the simulator exactly like a live system.
class SimHarness {
public:
  explicit SimHarness(const WorkloadSpec& spec,
                      PrefetcherConfig initial = PrefetcherConfig::platform_default())
      : sim_(spec), mask_(initial) {}

  CounterSource& source() { return source_; }
  ConfigSink& sink() { return sink_; }
  double ticks() const { return sim_.ticks(); }
  bool done() const { return sim_.done(); }

private:
  class Source final : public CounterSource {
   public:
    explicit Source(SimHarness& h) : h_(h) {}
    PollResult poll() override {
      if (h_.sim_.done()) return PollResult::end();
      return PollResult::ok(h_.sim_.step(h_.mask_));
    }
   private:
    SimHarness& h_;
  };
  class Sink final : public ConfigSink {
   public:
    explicit Sink(SimHarness& h) : h_(h) {}
    void apply(PrefetcherConfig mask) override { h_.mask_ = mask; }
   private:
    SimHarness& h_;
  };

  Simulation sim_;
  PrefetcherConfig mask_;
  Source source_{*this};
  Sink sink_{*this};
};

struct WorkloadEval {
  std::string name;
  double ticks_policy = 0;
  double ticks_default = 0;
  double ticks_off = 0;
  double ticks_on = 0;
  double ticks_oracle = 0;

  double speedup_policy() const { return ticks_default / ticks_policy; }
  double speedup_off() const { return ticks_default / ticks_off; }
  double speedup_on() const { return ticks_default / ticks_on; }
  double speedup_oracle() const { return ticks_default / ticks_oracle; }
};

struct EvalReport {
  std::vector<WorkloadEval> workloads;
  double geomean_policy = 1.0;
  double geomean_off = 1.0;
  double geomean_on = 1.0;
  double geomean_oracle = 1.0;
};

inline double geomean(std::span<const double> xs) {
  if (xs.empty()) return 1.0;
  double log_sum = 0;
  for (double x : xs) log_sum += std::log(x);
  return std::exp(log_sum / static_cast<double>(xs.size()));
}

// Closed-loop ticks for {model policy, default, OFF, ON, oracle} per
// workload, speedups vs the default mask, geomean last.
inline EvalReport evaluate(std::span<const WorkloadSpec> specs, const Model& model) {
  EvalReport report;
  std::vector<double> sp_policy, sp_off, sp_on, sp_oracle;
  for (const auto& spec : specs) {
    WorkloadEval we;
    we.name = spec.name;
    we.ticks_policy = closed_loop(spec, model);
    we.ticks_default = closed_loop(spec, PrefetcherConfig::platform_default());
    we.ticks_off = closed_loop(spec, PrefetcherConfig::off());
    we.ticks_on = closed_loop(spec, PrefetcherConfig::all_on());
    we.ticks_oracle = spec.oracle_ticks();
    // The analytic oracle is a hard lower bound; a policy beating it means
    // the simulation itself is broken.
    for (double t : {we.ticks_policy, we.ticks_default, we.ticks_off, we.ticks_on})
      if (t < we.ticks_oracle - 1e-6)
        throw Error("evaluate: policy finished below the oracle bound on '" + spec.name + "'");
    report.workloads.push_back(we);
    sp_policy.push_back(we.speedup_policy());
    sp_off.push_back(we.speedup_off());
    sp_on.push_back(we.speedup_on());
    sp_oracle.push_back(we.speedup_oracle());
  }
  report.geomean_policy = geomean(sp_policy);
  report.geomean_off = geomean(sp_off);
  report.geomean_on = geomean(sp_on);
  report.geomean_oracle = geomean(sp_oracle);
  return report;
}

inline constexpr std::string_view kEvalCsvHeader =
    "workload,ticks_policy,ticks_default,ticks_off,ticks_on,ticks_oracle,"
    "speedup_policy,speedup_off,speedup_on,speedup_oracle";

inline void write_eval_csv(const EvalReport& r, std::ostream& out) {
  out << kEvalCsvHeader << "\n";
  for (const auto& w : r.workloads) {
    out << w.name << ',' << fmt_double(w.ticks_policy, 10) << ',' << fmt_double(w.ticks_default, 10)
        << ',' << fmt_double(w.ticks_off, 10) << ',' << fmt_double(w.ticks_on, 10) << ','
        << fmt_double(w.ticks_oracle, 10) << ',' << fmt_double(w.speedup_policy(), 6) << ','
        << fmt_double(w.speedup_off(), 6) << ',' << fmt_double(w.speedup_on(), 6) << ','
        << fmt_double(w.speedup_oracle(), 6) << "\n";
  }
  out << "geomean,,,,,," << fmt_double(r.geomean_policy, 6) << ',' << fmt_double(r.geomean_off, 6)
      << ',' << fmt_double(r.geomean_on, 6) << ',' << fmt_double(r.geomean_oracle, 6) << "\n";
}

inline void write_eval_csv(const EvalReport& r, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(path + ": cannot open for writing");
  write_eval_csv(r, out);
}

inline std::string format_eval_table(const EvalReport& r) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-20s %12s %12s %12s %12s %12s %9s\n", "workload", "policy",
                "default", "off", "on", "oracle", "speedup");
  out << buf;
  for (const auto& w : r.workloads) {
    std::snprintf(buf, sizeof(buf), "%-20s %12.1f %12.1f %12.1f %12.1f %12.1f %9.4f\n",
                  w.name.c_str(), w.ticks_policy, w.ticks_default, w.ticks_off, w.ticks_on,
                  w.ticks_oracle, w.speedup_policy());
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "%-20s %12s %12s %12s %12s %12s %9.4f\n", "geomean", "", "", "",
                "", "", r.geomean_policy);
  out << buf;
  std::snprintf(buf, sizeof(buf), "(geomean off %.4f, on %.4f, oracle %.4f)\n", r.geomean_off,
                r.geomean_on, r.geomean_oracle);
  out << buf;
  return out.str();
}

// ---- workload spec files ---------------------------------------------------

inline void write_workload_spec(const WorkloadSpec& spec, std::ostream& out) {
  out << "name = \"" << spec.name << "\"\n";
  out << "seed = " << spec.seed << "\n";
  out << "noise_sigma = " << fmt_double(spec.noise_sigma) << "\n";
  out << "period_ms = " << spec.period_ms << "\n";
  for (const auto& seg : spec.segments) {
    out << "\n[[segment]]\n";
    out << "duration_ticks = " << seg.duration_ticks << "\n";
    for (std::size_t c = 0; c < CounterSample::kCounterCount; ++c)
      out << kCounterNames[c] << " = " << fmt_double(seg.base_rates[c]) << "\n";
    out << "[segment.multipliers]\n";
    auto set = PrefetcherConfig::valid_set();
    for (int i = 0; i < PrefetcherConfig::kValidCount; ++i)
      out << set[i].to_string() << " = " << fmt_double(seg.multipliers[i]) << "\n";
  }
}

inline void write_workload_spec(const WorkloadSpec& spec, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(path + ": cannot open for writing");
  write_workload_spec(spec, out);
}

inline WorkloadSpec workload_spec_from_toml(const TomlTable& t, const std::string& where) {
  WorkloadSpec spec;
  if (const auto* v = t.find("name")) spec.name = v->as_string(where + ": name");
  if (const auto* v = t.find("seed")) spec.seed = static_cast<std::uint64_t>(v->as_int(where + ": seed"));
  if (const auto* v = t.find("noise_sigma")) spec.noise_sigma = v->as_double(where + ": noise_sigma");
  if (const auto* v = t.find("period_ms"))
    spec.period_ms = static_cast<std::uint32_t>(v->as_int(where + ": period_ms"));
  auto it = t.arrays.find("segment");
  if (it == t.arrays.end() || it->second.empty())
    throw ParseError(where + ": no [[segment]] blocks");
  for (std::size_t s = 0; s < it->second.size(); ++s) {
    const auto& st = it->second[s];
    const std::string sw = where + ": segment " + std::to_string(s);
    SegmentSpec seg;
    seg.duration_ticks =
        static_cast<std::uint64_t>(st.require("duration_ticks", sw).as_int(sw + ": duration_ticks"));
    for (std::size_t c = 0; c < CounterSample::kCounterCount; ++c)
      seg.base_rates[c] = st.require(kCounterNames[c], sw).as_double(sw);
    seg.multipliers.fill(1.0);
    if (const auto* mt = st.find_table("multipliers")) {
      for (const auto& [key, val] : mt->values) {
        auto cfg = PrefetcherConfig::parse(key);
        if (!cfg || !cfg->is_valid())
          throw ParseError(sw + ": multiplier key '" + key + "' is not a valid config mask");
        seg.multipliers[PrefetcherConfig::valid_index(*cfg)] = val.as_double(sw + ": multiplier " + key);
      }
    }
    spec.segments.push_back(seg);
  }
  spec.validate();
  return spec;
}

inline WorkloadSpec read_workload_spec(const std::string& path) {
  return workload_spec_from_toml(read_toml_file(path), path);
}

}  // namespace pfsel
