#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <vector>

#include "pfsel/errors.hpp"
#include "pfsel/rng.hpp"
#include "pfsel/trace.hpp"

namespace pfsel {

using ScaledVec = std::array<double, FeatureVector::kCount>;

// Per-feature min-max scaler fitted on baseline data. apply() clamps into
// [0,1]; a feature with min == max maps to 0.
struct Scaler {
  std::array<double, FeatureVector::kCount> min{};
  std::array<double, FeatureVector::kCount> max{};

  double apply(std::size_t id, double v) const {
    const double lo = min[id], hi = max[id];
    if (!(hi > lo)) return 0.0;
    return std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
  }

  ScaledVec apply(const FeatureVector& f) const {
    ScaledVec out{};
    for (std::size_t i = 0; i < FeatureVector::kCount; ++i) out[i] = apply(i, f[i]);
    return out;
  }

  friend bool operator==(const Scaler&, const Scaler&) = default;
};

inline Scaler fit_scaler(std::span<const FeatureVector> samples) {
  if (samples.empty()) throw DataError("fit_scaler: no samples");
  Scaler s;
  for (std::size_t i = 0; i < FeatureVector::kCount; ++i) {
    s.min[i] = samples[0][i];
    s.max[i] = samples[0][i];
  }
  for (const auto& f : samples) {
    for (std::size_t i = 0; i < FeatureVector::kCount; ++i) {
      s.min[i] = std::min(s.min[i], f[i]);
      s.max[i] = std::max(s.max[i], f[i]);
    }
  }
  return s;
}

struct PhaseModel {
  Scaler scaler;
  std::vector<ScaledVec> centers;  // in scaled [0,1]^7 space

  int k() const { return static_cast<int>(centers.size()); }

  friend bool operator==(const PhaseModel&, const PhaseModel&) = default;
};

namespace detail {

inline double sq_dist(const ScaledVec& a, const ScaledVec& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    d += t * t;
  }
  return d;
}

inline int nearest_center(std::span<const ScaledVec> centers, const ScaledVec& x) {
  int best = 0;
  double best_d = sq_dist(centers[0], x);
  for (int i = 1; i < static_cast<int>(centers.size()); ++i) {
    const double d = sq_dist(centers[i], x);
    if (d < best_d) {  // ties keep the lowest index
      best_d = d;
      best = i;
    }
  }
  return best;
}

inline std::size_t count_distinct(std::span<const ScaledVec> pts) {
  std::set<ScaledVec> uniq(pts.begin(), pts.end());
  return uniq.size();
}

}  // namespace detail

struct KMeansResult {
  std::vector<ScaledVec> centers;
  std::vector<double> wcss_history;  // within-cluster sum of squares after each assignment
  int iterations = 0;
};

// Lloyd's algorithm with k-means++ initialization. Deterministic for a given
// (data, k, seed): fixed reduction order, explicit RNG transforms, ties in
// assignment broken toward the lowest center index. Empty clusters are
// repaired by seizing the point farthest from its current center.
inline KMeansResult kmeans_fit_detailed(std::span<const ScaledVec> scaled, int k,
                                        std::uint64_t seed, int max_iters = 300,
                                        double tol = 1e-6) {
  const int n = static_cast<int>(scaled.size());
  if (k < 1) throw DataError("kmeans_fit: k must be >= 1");
  if (n == 0) throw DataError("kmeans_fit: no samples");
  if (detail::count_distinct(scaled) < static_cast<std::size_t>(k))
    throw DataError("kmeans_fit: fewer distinct samples than k");

  Rng rng(seed);
  KMeansResult res;
  auto& centers = res.centers;
  centers.reserve(k);

  // k-means++ seeding: first center uniform, then D^2-weighted draws.
  centers.push_back(scaled[rng.below(n)]);
  std::vector<double> d2(n);
  for (int c = 1; c < k; ++c) {
    double total = 0;
    for (int i = 0; i < n; ++i) {
      double best = detail::sq_dist(scaled[i], centers[0]);
      for (std::size_t j = 1; j < centers.size(); ++j)
        best = std::min(best, detail::sq_dist(scaled[i], centers[j]));
      d2[i] = best;
      total += best;
    }
    int pick = -1;
    if (total > 0) {
      const double r = rng.uniform01() * total;
      double cum = 0;
      for (int i = 0; i < n; ++i) {
        cum += d2[i];
        if (cum > r) {
          pick = i;
          break;
        }
      }
      if (pick < 0) {  // r landed on the summed tail; take the last nonzero weight
        for (int i = n - 1; i >= 0; --i)
          if (d2[i] > 0) {
            pick = i;
            break;
          }
      }
    }
    if (pick < 0) throw DataError("kmeans_fit: degenerate data during seeding");
    centers.push_back(scaled[pick]);
  }

  std::vector<int> assign(n, 0);
  std::vector<ScaledVec> sums(k);
  std::vector<int> counts(k);

  for (int iter = 0; iter < max_iters; ++iter) {
    // Assignment
    double wcss = 0;
    for (int i = 0; i < n; ++i) {
      assign[i] = detail::nearest_center(centers, scaled[i]);
      wcss += detail::sq_dist(scaled[i], centers[assign[i]]);
    }
    res.wcss_history.push_back(wcss);
    res.iterations = iter + 1;

    // Update (fixed order over points)
    for (int c = 0; c < k; ++c) {
      sums[c] = ScaledVec{};
      counts[c] = 0;
    }
    for (int i = 0; i < n; ++i) {
      for (std::size_t dim = 0; dim < scaled[i].size(); ++dim) sums[assign[i]][dim] += scaled[i][dim];
      ++counts[assign[i]];
    }
    std::vector<ScaledVec> next(k);
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        for (std::size_t dim = 0; dim < sums[c].size(); ++dim)
          next[c][dim] = sums[c][dim] / counts[c];
      } else {
        next[c] = centers[c];  // repaired below
      }
    }

    // Empty-cluster repair: move the center onto the point farthest from its
    // assigned center, skipping points that already coincide with a center.
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      int far_i = -1;
      double far_d = -1;
      for (int i = 0; i < n; ++i) {
        const double d = detail::sq_dist(scaled[i], next[assign[i]]);
        if (d <= far_d) continue;
        bool on_center = false;
        for (int c2 = 0; c2 < k; ++c2)
          if (scaled[i] == next[c2]) {
            on_center = true;
            break;
          }
        if (!on_center) {
          far_d = d;
          far_i = i;
        }
      }
      if (far_i >= 0) {
        next[c] = scaled[far_i];
        assign[far_i] = c;
        counts[c] = 1;
      }
    }

    double movement = 0;
    for (int c = 0; c < k; ++c)
      movement = std::max(movement, std::sqrt(detail::sq_dist(centers[c], next[c])));
    centers = std::move(next);
    if (movement < tol) break;
  }
  return res;
}

inline std::vector<ScaledVec> kmeans_fit(std::span<const ScaledVec> scaled, int k,
                                         std::uint64_t seed) {
  return kmeans_fit_detailed(scaled, k, seed).centers;
}

// Scaler + k-means in one step: the stage-2 fit on baseline features.
inline PhaseModel fit_phase_model(std::span<const FeatureVector> baseline, int k,
                                  std::uint64_t seed) {
  PhaseModel m;
  m.scaler = fit_scaler(baseline);
  std::vector<ScaledVec> scaled;
  scaled.reserve(baseline.size());
  for (const auto& f : baseline) scaled.push_back(m.scaler.apply(f));
  m.centers = kmeans_fit(scaled, k, seed);
  return m;
}

// Nearest center in scaled space; ties go to the lowest center index.
inline int classify_phase(const PhaseModel& model, const FeatureVector& x) {
  return detail::nearest_center(model.centers, model.scaler.apply(x));
}

// WCSS per k over [k_min, k_max], for picking k by elbow. Not auto-applied.
inline std::vector<std::pair<int, double>> elbow_scan(std::span<const FeatureVector> baseline,
                                                      int k_min, int k_max,
                                                      std::uint64_t seed) {
  if (k_min < 1 || k_max < k_min) throw DataError("elbow_scan: bad k range");
  Scaler scaler = fit_scaler(baseline);
  std::vector<ScaledVec> scaled;
  scaled.reserve(baseline.size());
  for (const auto& f : baseline) scaled.push_back(scaler.apply(f));
  std::vector<std::pair<int, double>> out;
  for (int k = k_min; k <= k_max; ++k) {
    auto res = kmeans_fit_detailed(scaled, k, seed);
    // final WCSS under the converged centers
    double wcss = 0;
    for (const auto& x : scaled) wcss += detail::sq_dist(x, res.centers[detail::nearest_center(res.centers, x)]);
    out.emplace_back(k, wcss);
  }
  return out;
}

}  // namespace pfsel
