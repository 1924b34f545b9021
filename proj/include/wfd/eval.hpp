#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "wfd/errors.hpp"
#include "wfd/trace.hpp"

namespace wfd {

// Detections grouped per trace id, aligned with a ground-truth set.
struct EvalInstance {
  std::vector<std::vector<GroundTruth>> gts;          // per trace
  std::vector<std::vector<CandidateTrace>> candidates;  // per trace
};

struct EvalConfig {
  std::vector<double> lambda_grid;  // IoUT thresholds, strictly increasing
  double tau_operating = 0.5;       // score threshold for reported P/R
  int class_count = 0;              // monitored classes (1..class_count)

  static std::vector<double> default_grid() {
    std::vector<double> g;
    for (int i = 0; i <= 8; ++i) g.push_back(0.5 + 0.05 * i);
    return g;
  }

  void validate() const {
    if (class_count < 1) throw data_error("eval: empty class set");
    if (lambda_grid.empty()) throw config_error("eval: empty lambda grid");
    for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
      if (!(lambda_grid[i] > 0.0 && lambda_grid[i] <= 1.0))
        throw config_error("eval: lambda values must be in (0, 1]");
      if (i > 0 && !(lambda_grid[i] > lambda_grid[i - 1]))
        throw config_error("eval: lambda grid must be strictly increasing");
    }
  }
};

struct ClassCounts {
  long long tp = 0, fp = 0, fn = 0;
};

namespace detail {

// Stable detection ordering: score descending, then original order.
template <typename T>
std::vector<std::size_t> score_order(const std::vector<T>& v) {
  std::vector<std::size_t> idx(v.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (v[a].score != v[b].score) return v[a].score > v[b].score;
    return a < b;
  });
  return idx;
}

}  // namespace detail

// One-to-one greedy matching at an operating point: candidates with score
// >= tau, in descending score order, claim the best unmatched ground truth
// of their class with IoUT strictly above lambda. Claimed pairs are TPs,
// unclaimed candidates FPs, unclaimed ground truths FNs.
inline std::map<int, ClassCounts> classify_matches(
    const std::vector<CandidateTrace>& candidates,
    const std::vector<GroundTruth>& gts, double lambda, double tau) {
  std::map<int, ClassCounts> counts;
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t idx : detail::score_order(candidates)) {
    const CandidateTrace& cand = candidates[idx];
    if (cand.score < tau) continue;
    int best = -1;
    double best_ov = lambda;
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (taken[j] || gts[j].w != cand.w) continue;
      const double ov = iout(cand.span, gts[j].span);
      if (ov > best_ov) {
        best_ov = ov;
        best = static_cast<int>(j);
      }
    }
    if (best >= 0) {
      taken[best] = true;
      ++counts[cand.w].tp;
    } else {
      ++counts[cand.w].fp;
    }
  }
  for (std::size_t j = 0; j < gts.size(); ++j)
    if (!taken[j]) ++counts[gts[j].w].fn;
  return counts;
}

// Average precision for one class at one IoUT threshold: detections of that
// class are ranked by score across all traces, matched greedily one-to-one
// within their trace, and the precision-recall curve is integrated with
// monotone (max-to-the-right) interpolation. Returns a negative value when
// the class has no ground truths (callers skip it).
inline double average_precision(const EvalInstance& inst, int cls, double lambda) {
  struct Det {
    double score;
    std::size_t trace, idx;
  };
  std::vector<Det> dets;
  long long n_gt = 0;
  for (std::size_t t = 0; t < inst.gts.size(); ++t)
    for (const GroundTruth& gt : inst.gts[t])
      if (gt.w == cls) ++n_gt;
  if (n_gt == 0) return -1.0;

  for (std::size_t t = 0; t < inst.candidates.size(); ++t)
    for (std::size_t i = 0; i < inst.candidates[t].size(); ++i)
      if (inst.candidates[t][i].w == cls)
        dets.push_back(Det{inst.candidates[t][i].score, t, i});
  if (dets.empty()) return 0.0;

  std::sort(dets.begin(), dets.end(), [](const Det& a, const Det& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.trace != b.trace) return a.trace < b.trace;
    return a.idx < b.idx;
  });

  std::vector<std::vector<bool>> taken(inst.gts.size());
  for (std::size_t t = 0; t < inst.gts.size(); ++t)
    taken[t].assign(inst.gts[t].size(), false);

  std::vector<bool> is_tp(dets.size(), false);
  for (std::size_t k = 0; k < dets.size(); ++k) {
    const CandidateTrace& cand = inst.candidates[dets[k].trace][dets[k].idx];
    const std::vector<GroundTruth>& gts = inst.gts[dets[k].trace];
    int best = -1;
    double best_ov = lambda;
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (taken[dets[k].trace][j] || gts[j].w != cls) continue;
      const double ov = iout(cand.span, gts[j].span);
      if (ov > best_ov) {
        best_ov = ov;
        best = static_cast<int>(j);
      }
    }
    if (best >= 0) {
      taken[dets[k].trace][best] = true;
      is_tp[k] = true;
    }
  }

  std::vector<double> precision(dets.size()), recall(dets.size());
  long long tp = 0;
  for (std::size_t k = 0; k < dets.size(); ++k) {
    if (is_tp[k]) ++tp;
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    recall[k] = static_cast<double>(tp) / static_cast<double>(n_gt);
  }
  for (std::size_t k = precision.size() - 1; k-- > 0;)
    precision[k] = std::max(precision[k], precision[k + 1]);

  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < dets.size(); ++k) {
    if (recall[k] > prev_recall) {
      ap += (recall[k] - prev_recall) * precision[k];
      prev_recall = recall[k];
    }
  }
  return ap;
}

struct EvalReport {
  std::vector<double> lambda_grid;
  // ap[l][c] = AP of class c+1 at lambda_grid[l]; negative when undefined.
  std::vector<std::vector<double>> ap;
  std::vector<double> map_lambda;
  double map = 0.0;
  double map50 = 0.0;
  double map75 = 0.0;
  double precision_at = 0.0;  // at (lambda = 0.5, tau = tau_operating)
  double recall_at = 0.0;
  long long tp = 0, fp = 0, fn = 0;
  double throughput_mbps = -1.0;  // filled by timed runs; negative = not set
  long long cells_processed = 0;
};

// Accuracy report over the full instance: per-class AP per lambda, mAP per
// lambda (classes without ground truths excluded from the mean), the grid
// mean, and operating-point precision/recall counts.
inline EvalReport map_report(const EvalInstance& inst, const EvalConfig& cfg) {
  cfg.validate();
  long long total_gts = 0;
  for (const auto& g : inst.gts) total_gts += static_cast<long long>(g.size());
  if (total_gts == 0) throw data_error("map_report: no ground truths");

  EvalReport rep;
  rep.lambda_grid = cfg.lambda_grid;
  rep.ap.assign(cfg.lambda_grid.size(), std::vector<double>(cfg.class_count, -1.0));
  for (std::size_t l = 0; l < cfg.lambda_grid.size(); ++l) {
    double sum = 0.0;
    int defined = 0;
    for (int c = 1; c <= cfg.class_count; ++c) {
      const double ap = average_precision(inst, c, cfg.lambda_grid[l]);
      rep.ap[l][c - 1] = ap;
      if (ap >= 0.0) {
        sum += ap;
        ++defined;
      }
    }
    rep.map_lambda.push_back(defined > 0 ? sum / defined : 0.0);
  }
  rep.map = 0.0;
  for (double m : rep.map_lambda) rep.map += m;
  rep.map /= static_cast<double>(rep.map_lambda.size());

  auto map_at = [&](double lambda) {
    double sum = 0.0;
    int defined = 0;
    for (int c = 1; c <= cfg.class_count; ++c) {
      const double ap = average_precision(inst, c, lambda);
      if (ap >= 0.0) {
        sum += ap;
        ++defined;
      }
    }
    return defined > 0 ? sum / defined : 0.0;
  };
  rep.map50 = map_at(0.50);
  rep.map75 = map_at(0.75);

  for (std::size_t t = 0; t < inst.gts.size(); ++t) {
    const auto counts =
        classify_matches(inst.candidates[t], inst.gts[t], 0.5, cfg.tau_operating);
    for (const auto& [w, c] : counts) {
      rep.tp += c.tp;
      rep.fp += c.fp;
      rep.fn += c.fn;
    }
  }
  rep.precision_at = rep.tp + rep.fp > 0
                         ? static_cast<double>(rep.tp) / static_cast<double>(rep.tp + rep.fp)
                         : 0.0;
  rep.recall_at = rep.tp + rep.fn > 0
                      ? static_cast<double>(rep.tp) / static_cast<double>(rep.tp + rep.fn)
                      : 0.0;
  return rep;
}

// Attack-speed metric: megabytes of cell traffic per wall-clock second,
// with 512 bytes per cell and MB = 1e6 bytes.
inline double throughput_mbps(long long cells_processed, double wall_seconds) {
  if (cells_processed < 0) throw data_error("throughput: negative cell count");
  if (!(wall_seconds > 0.0)) throw data_error("throughput: wall time must be > 0");
  return static_cast<double>(cells_processed) * kCellBytes / 1e6 / wall_seconds;
}

inline double megabytes(long long cells) {
  return static_cast<double>(cells) * kCellBytes / 1e6;
}

}  // namespace wfd
