#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pfsel/rng.hpp"
#include "pfsel/sim.hpp"

namespace pfsel {

// Synthetic workload distribution. A fixed library of phase archetypes
// (distinct counter signatures, each with a planted best config) is shared
// by all generated workloads; a workload is a random archetype sequence with
// jittered rates. Training and held-out workloads come from the same library
// with different seeds, which is what makes generalization measurable.
struct Archetype {
  std::array<double, CounterSample::kCounterCount> rates{};
  std::array<double, PrefetcherConfig::kValidCount> multipliers{};
};

struct GenOptions {
  int min_segments = 3;
  int max_segments = 6;
  std::uint64_t min_duration = 150;
  std::uint64_t max_duration = 400;
  double noise_sigma = 0.0;
  double rate_jitter = 0.08;  // relative, per counter per segment
  double mult_jitter = 0.02;  // relative, per config per segment
};

inline double log_uniform(Rng& rng, double lo, double hi) {
  return std::exp(rng.uniform(std::log(lo), std::log(hi)));
}

namespace gen_detail {

// Archetype signature over the config-insensitive dimensions only. The
// active config scales instructions by up to +-25%, dragging IPC (and mildly
// the per-kilo-instruction rates) with it, so IPC cannot carry archetype
// identity; the ratio dimensions barely move and can.
inline std::array<double, 5> signature(double apki, double miss_ratio, double bmpki,
                                       double l2d_ratio, double l2i_ratio) {
  return {std::log(apki / 5.0) / std::log(300.0 / 5.0),
          std::log(miss_ratio / 0.02) / std::log(0.8 / 0.02),
          std::log(bmpki / 0.5) / std::log(30.0 / 0.5),
          (l2d_ratio - 0.1) / 1.4,
          (l2i_ratio - 0.05) / 0.95};
}

inline double min_distance(const std::array<double, 5>& sig,
                           const std::vector<std::array<double, 5>>& others) {
  double best = 1e9;
  for (const auto& o : others) {
    double d = 0;
    for (std::size_t i = 0; i < sig.size(); ++i) d += (sig[i] - o[i]) * (sig[i] - o[i]);
    best = std::min(best, std::sqrt(d));
  }
  return best;
}

}  // namespace gen_detail

inline std::vector<Archetype> make_archetype_library(std::uint64_t seed, int count = 6) {
  Rng rng(seed);
  std::vector<Archetype> lib;
  std::vector<std::array<double, 5>> signatures;
  lib.reserve(count);

  // Two archetypes whose counter signatures collide but whose optima differ
  // would make the labels ill-posed, so candidates are rejection-sampled to a
  // minimum pairwise separation (best-effort after max_tries).
  const double min_separation = 0.45;
  const int max_tries = 200;

  for (int a = 0; a < count; ++a) {
    double best_sep = -1;
    std::array<double, 6> chosen_params{};
    std::array<double, 5> chosen_sig{};
    for (int attempt = 0; attempt < max_tries; ++attempt) {
      const double ipc = rng.uniform(0.25, 3.0);
      const double apki = log_uniform(rng, 5.0, 300.0);
      const double miss_ratio = log_uniform(rng, 0.02, 0.8);
      const double bmpki = log_uniform(rng, 0.5, 30.0);
      const double l2d_ratio = rng.uniform(0.1, 1.5);
      const double l2i_ratio = rng.uniform(0.05, 1.0);
      const auto sig = gen_detail::signature(apki, miss_ratio, bmpki, l2d_ratio, l2i_ratio);
      const double sep = signatures.empty() ? 1e9 : gen_detail::min_distance(sig, signatures);
      if (sep > best_sep) {
        best_sep = sep;
        chosen_params = {ipc, apki, miss_ratio, bmpki, l2d_ratio, l2i_ratio};
        chosen_sig = sig;
      }
      if (sep >= min_separation) break;
    }
    signatures.push_back(chosen_sig);

    const auto [ipc, apki, miss_ratio, bmpki, l2d_ratio, l2i_ratio] = chosen_params;
    Archetype arch;
    const double cycles = 1e6;
    const double instr = cycles * ipc;
    const double mem = instr * apki / 1000.0;
    const double cache_misses = mem * miss_ratio;
    const double branch_misses = instr * bmpki / 1000.0;
    arch.rates = {instr,          mem,
                  branch_misses,  cache_misses,
                  cycles,         cache_misses * l2d_ratio,
                  branch_misses * l2i_ratio};

    // Config effects on IPC are kept second-order relative to phase
    // differences, the regime in which nearest-center classification of
    // non-baseline samples is reliable.
    const int best = static_cast<int>(rng.below(PrefetcherConfig::kValidCount));
    for (int i = 0; i < PrefetcherConfig::kValidCount; ++i)
      arch.multipliers[i] = rng.uniform(0.90, 1.0);
    // Planted optimum with a >= 4% margin over every other config.
    arch.multipliers[best] = rng.uniform(1.04, 1.12);
    lib.push_back(arch);
  }
  return lib;
}

inline WorkloadSpec make_workload(std::span<const Archetype> library, std::uint64_t seed,
                                  const GenOptions& opt, std::string name) {
  Rng rng(seed);
  WorkloadSpec spec;
  spec.name = std::move(name);
  spec.seed = seed;
  spec.noise_sigma = opt.noise_sigma;
  const int nseg =
      opt.min_segments + static_cast<int>(rng.below(opt.max_segments - opt.min_segments + 1));
  for (int s = 0; s < nseg; ++s) {
    const auto& arch = library[rng.below(library.size())];
    SegmentSpec seg;
    seg.duration_ticks =
        opt.min_duration + rng.below(opt.max_duration - opt.min_duration + 1);
    for (std::size_t c = 0; c < seg.base_rates.size(); ++c)
      seg.base_rates[c] = arch.rates[c] * (1.0 + rng.uniform(-opt.rate_jitter, opt.rate_jitter));
    int best = 0;
    for (int i = 1; i < PrefetcherConfig::kValidCount; ++i)
      if (arch.multipliers[i] > arch.multipliers[best]) best = i;
    for (int i = 0; i < PrefetcherConfig::kValidCount; ++i)
      seg.multipliers[i] = arch.multipliers[i] * (1.0 + rng.uniform(-opt.mult_jitter, opt.mult_jitter));
    // Jitter must not displace the planted optimum.
    for (int i = 0; i < PrefetcherConfig::kValidCount; ++i)
      if (i != best) seg.multipliers[i] = std::min(seg.multipliers[i], seg.multipliers[best] * 0.98);
    spec.segments.push_back(seg);
  }
  spec.validate();
  return spec;
}

// Rescales every multiplier by up to +-shift while keeping each segment's
// planted optimum in place. Stand-in for running the same phases under a
// differently compiled binary.
inline WorkloadSpec shift_multipliers(const WorkloadSpec& spec, std::uint64_t seed, double shift) {
  Rng rng(seed);
  WorkloadSpec out = spec;
  out.name = spec.name + "_shifted";
  for (auto& seg : out.segments) {
    int best = 0;
    for (int i = 1; i < PrefetcherConfig::kValidCount; ++i)
      if (seg.multipliers[i] > seg.multipliers[best]) best = i;
    for (int i = 0; i < PrefetcherConfig::kValidCount; ++i)
      seg.multipliers[i] *= 1.0 + rng.uniform(-shift, shift);
    for (int i = 0; i < PrefetcherConfig::kValidCount; ++i)
      if (i != best) seg.multipliers[i] = std::min(seg.multipliers[i], seg.multipliers[best] * 0.98);
  }
  out.validate();
  return out;
}

}  // namespace pfsel
