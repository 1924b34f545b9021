#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "wfd/errors.hpp"
#include "wfd/rng.hpp"
#include "wfd/trace.hpp"

namespace wfd {

// Fixed anchor lengths in burst-index units, ascending and distinct.
struct AnchorSet {
  std::vector<double> lengths;
};

namespace detail {

inline double kmeans_sse(const std::vector<double>& xs,
                         const std::vector<double>& centers) {
  double sse = 0.0;
  for (double x : xs) {
    double best = std::abs(x - centers[0]);
    for (double c : centers) best = std::min(best, std::abs(x - c));
    sse += best * best;
  }
  return sse;
}

// One Lloyd run from a k-means++ style seeded init. Returns centers sorted.
inline std::vector<double> lloyd_1d(const std::vector<double>& xs, int n, Rng& rng) {
  std::vector<double> centers;
  centers.push_back(xs[rng.uniform_int(xs.size())]);
  while (static_cast<int>(centers.size()) < n) {
    std::vector<double> d2(xs.size());
    double total = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      double best = std::abs(xs[i] - centers[0]);
      for (double c : centers) best = std::min(best, std::abs(xs[i] - c));
      d2[i] = best * best;
      total += d2[i];
    }
    if (total <= 0.0) {
      // All remaining mass sits on existing centers; pick any unused value.
      for (double x : xs)
        if (std::find(centers.begin(), centers.end(), x) == centers.end()) {
          centers.push_back(x);
          break;
        }
      continue;
    }
    double pick = rng.uniform() * total;
    std::size_t idx = 0;
    for (; idx + 1 < xs.size(); ++idx) {
      pick -= d2[idx];
      if (pick <= 0.0) break;
    }
    centers.push_back(xs[idx]);
  }

  std::vector<double> sums(n), counts(n);
  for (int iter = 0; iter < 100; ++iter) {
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0.0);
    for (double x : xs) {
      int best = 0;
      double bd = std::abs(x - centers[0]);
      for (int k = 1; k < n; ++k) {
        const double d = std::abs(x - centers[k]);
        if (d < bd) {
          bd = d;
          best = k;
        }
      }
      sums[best] += x;
      counts[best] += 1.0;
    }
    double moved = 0.0;
    for (int k = 0; k < n; ++k) {
      if (counts[k] == 0.0) continue;  // keep empty cluster where it is
      const double next = sums[k] / counts[k];
      moved += std::abs(next - centers[k]);
      centers[k] = next;
    }
    if (moved < 1e-12) break;
  }
  std::sort(centers.begin(), centers.end());
  return centers;
}

}  // namespace detail

// Clusters ground-truth trace lengths into n anchor lengths with seeded 1D
// k-means (Lloyd's, restarted, best SSE kept).
inline AnchorSet kmeans_anchor_lengths(const std::vector<double>& gt_lengths,
                                       int n, std::uint64_t seed = 0) {
  if (n < 1) throw config_error("kmeans_anchor_lengths: n must be >= 1");
  for (double l : gt_lengths)
    if (!(l > 0.0)) throw data_error("kmeans_anchor_lengths: lengths must be positive");
  std::set<double> distinct(gt_lengths.begin(), gt_lengths.end());
  if (static_cast<int>(distinct.size()) < n)
    throw data_error("kmeans_anchor_lengths: fewer distinct lengths than clusters");

  std::vector<double> best;
  double best_sse = 0.0;
  for (int restart = 0; restart < 8; ++restart) {
    Rng rng = Rng::derive(seed, restart);
    std::vector<double> centers = detail::lloyd_1d(gt_lengths, n, rng);
    const double sse = detail::kmeans_sse(gt_lengths, centers);
    const bool dup = std::adjacent_find(centers.begin(), centers.end()) != centers.end();
    if (!dup && (best.empty() || sse < best_sse)) {
      best = std::move(centers);
      best_sse = sse;
    }
  }
  if (best.empty())
    throw data_error("kmeans_anchor_lengths: clustering produced duplicate centers");
  return AnchorSet{std::move(best)};
}

// One anchor per (cell segment i, anchor length j), flattened row-major as
// i * n + j. Cell segment i owns input span [i*r_ds, (i+1)*r_ds), so its
// center sits at i*r_ds + r_ds/2.
inline std::vector<Segment> build_anchors(int m, const AnchorSet& anchors, int r_ds) {
  if (m < 1) throw config_error("build_anchors: m must be >= 1");
  std::vector<Segment> out;
  out.reserve(static_cast<std::size_t>(m) * anchors.lengths.size());
  for (int i = 0; i < m; ++i) {
    const double center = static_cast<double>(i) * r_ds + r_ds / 2.0;
    for (double len : anchors.lengths) out.push_back(Segment{center, len});
  }
  return out;
}

}  // namespace wfd
