#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <string>
#include <vector>

#include "wfd/errors.hpp"

namespace wfd {

// Shared label for all traffic outside the monitored set. Monitored websites
// are labeled 1..K.
inline constexpr int kUnmonitored = 0;

// Fixed transport-cell payload, used for byte accounting.
inline constexpr long long kCellBytes = 512;

// One transport cell: timestamp in seconds and direction (+1 outgoing from
// the client, -1 incoming).
struct Cell {
  double t = 0.0;
  int d = +1;
};

// Maximal same-direction run of cells. Carries the timestamp of its first
// cell and the signed run length (sign = direction). Adjacent bursts in a
// sequence always have opposite signs.
struct Burst {
  double t = 0.0;
  long long l = 0;
};

// Half-open interval [s, e) in index units, stored as center/length so that
// s = c - l/2 and e = c + l/2.
struct Segment {
  double c = 0.0;
  double l = 0.0;

  static Segment from_bounds(double s, double e) {
    return Segment{(s + e) / 2.0, e - s};
  }
  double start() const { return c - l / 2.0; }
  double end() const { return c + l / 2.0; }
};

// A full monitored trace span inside a longer multi-tab trace.
struct GroundTruth {
  Segment span;
  int w = kUnmonitored;
};

enum class IndexSpace { cell, burst };

// An untrimmed multi-tab capture: the burst sequence, the cell count it
// encodes, and the monitored ground-truth spans (in the declared index
// space, sorted by start).
struct MultiTabTrace {
  std::string id;
  std::vector<Burst> bursts;
  long long cells_total = 0;
  std::vector<GroundTruth> gts;
  IndexSpace space = IndexSpace::burst;
};

// One detection: a span, a monitored website label, and a score in [0, 1].
struct CandidateTrace {
  Segment span;
  int w = kUnmonitored;
  double score = 0.0;
};

// Collapses maximal same-direction runs into bursts. Each burst takes the
// timestamp of its first cell; order is preserved.
inline std::vector<Burst> bursts_from_cells(const std::vector<Cell>& cells) {
  std::vector<Burst> out;
  for (const Cell& c : cells) {
    if (c.d != 1 && c.d != -1)
      throw data_error("bursts_from_cells: direction must be +1 or -1");
    if (!out.empty() && ((out.back().l > 0) == (c.d > 0))) {
      out.back().l += c.d;
    } else {
      out.push_back(Burst{c.t, static_cast<long long>(c.d)});
    }
  }
  return out;
}

// Expands a burst sequence back into its direction sequence.
inline std::vector<int> directions_from_bursts(const std::vector<Burst>& bursts) {
  std::vector<int> dirs;
  for (const Burst& b : bursts) {
    const int d = b.l > 0 ? +1 : -1;
    for (long long i = 0; i < std::llabs(b.l); ++i) dirs.push_back(d);
  }
  return dirs;
}

inline long long cell_count(const std::vector<Burst>& bursts) {
  long long n = 0;
  for (const Burst& b : bursts) n += std::llabs(b.l);
  return n;
}

// Intersection over union of two segments, with interval arithmetic on
// [s, e). Symmetric, in [0, 1], zero when disjoint, 1 iff identical.
inline double iout(const Segment& a, const Segment& b) {
  if (!(a.l > 0.0) || !(b.l > 0.0))
    throw data_error("iout: segment length must be positive");
  const double inter =
      std::max(0.0, std::min(a.end(), b.end()) - std::max(a.start(), b.start()));
  const double uni = a.l + b.l - inter;
  return inter / uni;
}

// Maps a half-open cell-index span onto the half-open burst-index span
// covering the same cells: the first burst containing any cell of the span
// through one past the last such burst. Monotone and containment-preserving.
inline Segment cell_span_to_burst_span(const Segment& span_cells,
                                       const std::vector<Burst>& bursts) {
  const long long total = cell_count(bursts);
  const double s = span_cells.start();
  const double e = span_cells.end();
  if (!(e > s)) throw data_error("cell_span_to_burst_span: empty span");
  if (s < 0.0 || e > static_cast<double>(total))
    throw data_error("cell_span_to_burst_span: span outside trace");

  const long long first_cell = static_cast<long long>(std::floor(s));
  const long long last_cell = static_cast<long long>(std::ceil(e)) - 1;

  long long prefix = 0;
  long long b_first = -1, b_last = -1;
  for (std::size_t i = 0; i < bursts.size(); ++i) {
    const long long next = prefix + std::llabs(bursts[i].l);
    if (b_first < 0 && first_cell < next) b_first = static_cast<long long>(i);
    if (last_cell < next) {
      b_last = static_cast<long long>(i);
      break;
    }
    prefix = next;
  }
  return Segment::from_bounds(static_cast<double>(b_first),
                              static_cast<double>(b_last + 1));
}

}  // namespace wfd
