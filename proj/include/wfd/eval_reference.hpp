#pragma once

#include <algorithm>
#include <set>
#include <vector>

#include "wfd/eval.hpp"
#include "wfd/trace.hpp"

namespace wfd {

// Exhaustive reference evaluator. Slow by construction: for every score
// threshold it redoes the one-to-one matching from scratch and reads the
// average precision off the finite precision-recall point set. Kept fully
// separate from the ranked evaluator in eval.hpp so the two can check each
// other on small instances.
namespace reference {

struct PrPoint {
  double precision, recall;
};

// Precision/recall of one class at fixed (lambda, tau) by direct matching.
inline PrPoint pr_at(const EvalInstance& inst, int cls, double lambda, double tau) {
  long long tp = 0, fp = 0, n_gt = 0;
  for (std::size_t t = 0; t < inst.gts.size(); ++t) {
    const std::vector<GroundTruth>& gts = inst.gts[t];
    for (const GroundTruth& g : gts)
      if (g.w == cls) ++n_gt;

    // Candidates of this class at or above the threshold, best score first.
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < inst.candidates[t].size(); ++i) {
      const CandidateTrace& c = inst.candidates[t][i];
      if (c.w == cls && c.score >= tau) order.push_back(i);
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double sa = inst.candidates[t][a].score;
      const double sb = inst.candidates[t][b].score;
      if (sa != sb) return sa > sb;
      return a < b;
    });

    std::vector<bool> used(gts.size(), false);
    for (std::size_t i : order) {
      const CandidateTrace& c = inst.candidates[t][i];
      int pick = -1;
      double best = lambda;
      for (std::size_t j = 0; j < gts.size(); ++j) {
        if (used[j] || gts[j].w != cls) continue;
        const double ov = iout(c.span, gts[j].span);
        if (ov > best) {
          best = ov;
          pick = static_cast<int>(j);
        }
      }
      if (pick >= 0) {
        used[pick] = true;
        ++tp;
      } else {
        ++fp;
      }
    }
  }
  PrPoint p;
  p.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  p.recall = n_gt > 0 ? static_cast<double>(tp) / n_gt : 0.0;
  return p;
}

// AP of one class at one IoUT threshold; negative when the class has no
// ground truths.
inline double average_precision(const EvalInstance& inst, int cls, double lambda) {
  long long n_gt = 0;
  for (const auto& gts : inst.gts)
    for (const GroundTruth& g : gts)
      if (g.w == cls) ++n_gt;
  if (n_gt == 0) return -1.0;

  std::set<double, std::greater<double>> thresholds;
  for (const auto& cands : inst.candidates)
    for (const CandidateTrace& c : cands)
      if (c.w == cls) thresholds.insert(c.score);
  if (thresholds.empty()) return 0.0;

  std::vector<PrPoint> points;
  for (double tau : thresholds) points.push_back(pr_at(inst, cls, lambda, tau));

  // Integrate with monotone max-to-the-right interpolation.
  for (std::size_t k = points.size() - 1; k-- > 0;)
    points[k].precision = std::max(points[k].precision, points[k + 1].precision);
  double ap = 0.0, prev = 0.0;
  for (const PrPoint& p : points) {
    if (p.recall > prev) {
      ap += (p.recall - prev) * p.precision;
      prev = p.recall;
    }
  }
  return ap;
}

inline double map_lambda(const EvalInstance& inst, int class_count, double lambda) {
  double sum = 0.0;
  int defined = 0;
  for (int c = 1; c <= class_count; ++c) {
    const double ap = reference::average_precision(inst, c, lambda);
    if (ap >= 0.0) {
      sum += ap;
      ++defined;
    }
  }
  return defined > 0 ? sum / defined : 0.0;
}

inline double map(const EvalInstance& inst, int class_count,
                  const std::vector<double>& grid) {
  double sum = 0.0;
  for (double l : grid) sum += map_lambda(inst, class_count, l);
  return sum / static_cast<double>(grid.size());
}

}  // namespace reference
}  // namespace wfd
