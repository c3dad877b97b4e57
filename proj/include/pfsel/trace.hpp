#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pfsel/prefetcher_config.hpp"

namespace pfsel {

// One periodic reading of the seven raw hardware counters, as event deltas
// accumulated over a single sampling interval.
struct CounterSample {
  std::int64_t timestamp_ms = 0;
  std::uint64_t instructions = 0;
  std::uint64_t mem_accesses = 0;
  std::uint64_t branch_misses = 0;
  std::uint64_t cache_misses = 0;
  std::uint64_t cpu_cycles = 0;
  std::uint64_t l2d_refills = 0;
  std::uint64_t l2i_refills = 0;

  static constexpr std::size_t kCounterCount = 7;

  friend bool operator==(const CounterSample&, const CounterSample&) = default;
};

inline constexpr std::array<const char*, CounterSample::kCounterCount> kCounterNames = {
    "instructions", "mem_accesses",  "branch_misses", "cache_misses",
    "cpu_cycles",   "l2d_refills",   "l2i_refills"};

// The seven derived features, feature IDs 0..6 in this order. IPC is ID 0.
struct FeatureVector {
  double ipc = 0;
  double mem_apki = 0;
  double branch_mpki = 0;
  double cache_mpki = 0;
  double cache_miss_per_access = 0;
  double l2d_refill_per_miss = 0;
  double l2i_refill_per_branch_miss = 0;

  static constexpr std::size_t kCount = 7;

  double operator[](std::size_t id) const {
    switch (id) {
      case 0: return ipc;
      case 1: return mem_apki;
      case 2: return branch_mpki;
      case 3: return cache_mpki;
      case 4: return cache_miss_per_access;
      case 5: return l2d_refill_per_miss;
      default: return l2i_refill_per_branch_miss;
    }
  }

  std::array<double, kCount> to_array() const {
    return {ipc,
            mem_apki,
            branch_mpki,
            cache_mpki,
            cache_miss_per_access,
            l2d_refill_per_miss,
            l2i_refill_per_branch_miss};
  }

  static FeatureVector from_array(const std::array<double, kCount>& a) {
    return {a[0], a[1], a[2], a[3], a[4], a[5], a[6]};
  }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

inline constexpr std::array<const char*, FeatureVector::kCount> kFeatureNames = {
    "ipc",
    "mem_apki",
    "branch_mpki",
    "cache_mpki",
    "cache_miss_per_access",
    "l2d_refill_per_miss",
    "l2i_refill_per_branch_miss"};

// Counter -> feature transform. Total: any ratio with a zero denominator is
// defined as 0, so idle all-zero intervals map to the origin of feature space
// and no NaN/inf can escape.
inline FeatureVector compute_features(const CounterSample& s) {
  const auto ratio = [](std::uint64_t num, std::uint64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  const auto per_kilo = [](std::uint64_t num, std::uint64_t den) {
    return den == 0 ? 0.0 : 1000.0 * static_cast<double>(num) / static_cast<double>(den);
  };
  FeatureVector f;
  f.ipc = ratio(s.instructions, s.cpu_cycles);
  f.mem_apki = per_kilo(s.mem_accesses, s.instructions);
  f.branch_mpki = per_kilo(s.branch_misses, s.instructions);
  f.cache_mpki = per_kilo(s.cache_misses, s.instructions);
  f.cache_miss_per_access = ratio(s.cache_misses, s.mem_accesses);
  f.l2d_refill_per_miss = ratio(s.l2d_refills, s.cache_misses);
  f.l2i_refill_per_branch_miss = ratio(s.l2i_refills, s.branch_misses);
  return f;
}

struct TraceMeta {
  std::string workload_name;
  // Configuration the trace was recorded under; absent when the file carried
  // no `# config=` line. Labeling requires it.
  std::optional<PrefetcherConfig> config;
  std::uint32_t period_ms = 100;

  friend bool operator==(const TraceMeta&, const TraceMeta&) = default;
};

struct Trace {
  TraceMeta meta;
  std::vector<CounterSample> samples;  // timestamps strictly increasing, size >= 1

  friend bool operator==(const Trace&, const Trace&) = default;
};

}  // namespace pfsel
