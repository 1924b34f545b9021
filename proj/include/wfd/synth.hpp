#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "wfd/errors.hpp"
#include "wfd/rng.hpp"
#include "wfd/trace.hpp"

namespace wfd {

// Procedural stand-in for one website. A page load is an alternating
// sequence of short outgoing bursts and longer incoming bursts; the
// incoming lengths follow a per-phase lognormal profile over the load, so
// distinct labels have distinct length rhythms. `separability` scales how
// far apart profiles are drawn.
struct WebsiteSignature {
  int label = kUnmonitored;
  std::vector<double> in_log_mean;   // per-phase lognormal mu of incoming |l|
  std::vector<double> in_log_sigma;  // per-phase lognormal sigma
  double out_log_mean = 0.7;
  double out_log_sigma = 0.35;
  int start_dir = +1;
  int cells_min = 400;
  int cells_max = 800;
};

inline constexpr int kSignaturePhases = 24;
inline constexpr int kMaxBurstCells = 80;

// `cells_min`/`cells_max` bound the whole site universe; each signature owns
// a narrow length band inside it, drawn log-uniformly, so page size is a
// class cue the way real page weights are.
inline WebsiteSignature make_signature(int label, std::uint64_t seed,
                                       double separability, int cells_min,
                                       int cells_max) {
  if (cells_min < 2 || cells_min > cells_max)
    throw config_error("make_signature: degenerate cell-count range");
  Rng rng(seed);
  rng.next_u64();
  WebsiteSignature sig;
  sig.label = label;
  const double log_lo = std::log(static_cast<double>(cells_min));
  const double log_hi = std::log(static_cast<double>(cells_max));
  const double center = std::exp(rng.uniform(log_lo, log_hi));
  sig.cells_min = std::max(cells_min, static_cast<int>(std::llround(center * 0.85)));
  sig.cells_max = std::min(cells_max, static_cast<int>(std::llround(center * 1.15)));
  if (sig.cells_min > sig.cells_max) sig.cells_min = sig.cells_max;
  if (sig.cells_min < 2) sig.cells_min = 2;
  sig.in_log_mean.reserve(kSignaturePhases);
  sig.in_log_sigma.reserve(kSignaturePhases);
  const double base = std::log(14.0);
  // Higher separability both spreads class profiles apart and tightens the
  // within-class draw noise, so the knob really does order task difficulty.
  const double noise = 1.0 / std::sqrt(std::max(separability, 0.25));
  for (int p = 0; p < kSignaturePhases; ++p) {
    sig.in_log_mean.push_back(base + separability * rng.uniform(-0.6, 0.6));
    sig.in_log_sigma.push_back(noise * rng.uniform(0.15, 0.35));
  }
  sig.out_log_mean = std::log(2.0) + separability * rng.uniform(-0.35, 0.35);
  sig.out_log_sigma = 0.3 * noise;
  sig.start_dir = rng.uniform() < 0.5 ? +1 : -1;
  return sig;
}

// One page load, deterministic under (sig, seed). Cell count lands in the
// signature's range; timestamps advance in unit steps with sub-unit jitter,
// strictly increasing.
inline std::vector<Cell> gen_single_tab(const WebsiteSignature& sig,
                                        std::uint64_t seed) {
  if (sig.cells_min < 2 || sig.cells_min > sig.cells_max)
    throw config_error("gen_single_tab: degenerate cell-count range");
  Rng rng(seed);
  const int n = sig.cells_min +
                static_cast<int>(rng.uniform_int(
                    static_cast<std::uint64_t>(sig.cells_max - sig.cells_min + 1)));
  std::vector<Cell> cells;
  cells.reserve(n);
  int made = 0;
  int dir = sig.start_dir;
  const int phases = static_cast<int>(sig.in_log_mean.size());
  while (made < n) {
    const int phase =
        std::min(phases - 1, static_cast<int>(static_cast<double>(made) * phases / n));
    const double mu = dir < 0 ? sig.in_log_mean[phase] : sig.out_log_mean;
    const double sd = dir < 0 ? sig.in_log_sigma[phase] : sig.out_log_sigma;
    int len = static_cast<int>(std::llround(std::exp(mu + sd * rng.normal())));
    len = std::clamp(len, 1, std::min(kMaxBurstCells, n - made));
    for (int i = 0; i < len; ++i) {
      cells.push_back(Cell{static_cast<double>(made + i) + 0.3 * rng.uniform(), dir});
      }
    made += len;
    dir = -dir;
  }
  return cells;
}

// Overlap category of one adjacent pair in the composition protocol: which
// clean segment the affected trace keeps. Placement itself is fixed by the
// fraction (see compose_multitab); the tag is carried into the dataset
// manifest for accounting.
enum class OverlapPosition { tail, front, both_ends };

struct OverlapSpec {
  OverlapPosition position = OverlapPosition::tail;
  double fraction = 0.1;  // of the earlier trace's cell count
};

inline const std::array<double, 6>& overlap_fractions() {
  static const std::array<double, 6> f = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  return f;
}

// All 18 (position, fraction) combinations.
inline std::vector<OverlapSpec> all_overlap_types() {
  std::vector<OverlapSpec> types;
  for (OverlapPosition pos :
       {OverlapPosition::tail, OverlapPosition::front, OverlapPosition::both_ends})
    for (double f : overlap_fractions()) types.push_back(OverlapSpec{pos, f});
  return types;
}

inline std::string overlap_position_name(OverlapPosition p) {
  switch (p) {
    case OverlapPosition::tail: return "tail";
    case OverlapPosition::front: return "front";
    default: return "both_ends";
  }
}

inline std::string overlap_type_name(const OverlapSpec& spec) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "_%.2f", spec.fraction);
  return overlap_position_name(spec.position) + buf;
}

// Result of composing several single-tab traces into one capture. Keeps the
// merged per-cell bookkeeping so invariants (tight spans, realized overlap)
// can be checked directly.
struct ComposedTrace {
  MultiTabTrace trace;                    // burst space, gts remapped
  std::vector<Cell> merged_cells;
  std::vector<int> cell_owner;            // tab index per merged cell
  std::vector<GroundTruth> gts_cells;     // monitored spans in cell space
  std::vector<OverlapSpec> specs;         // per adjacent pair
  std::vector<long long> requested_overlap;
  std::vector<long long> realized_overlap;
};

namespace detail {
inline bool fraction_on_grid(double p) {
  for (double f : overlap_fractions())
    if (std::abs(p - f) < 1e-9) return true;
  return false;
}
}  // namespace detail

// Composes time-ordered single-tab traces into one multi-tab trace. Pair
// i/i+1 overlaps by o = round(p * len(trace i)) cells (clamped to the later
// trace's length): the later trace's first cell is placed at the timestamp
// of the earlier trace's cell len-o, so o of its cells fall inside the
// earlier trace's time span, up to jitter. Cells are merge-sorted by time
// with earlier-trace-first tie-break. Ground-truth spans are the extremal
// merged indices of each monitored trace's own cells, recorded in cell
// space and remapped to burst space over the merged direction stream.
inline ComposedTrace compose_multitab(
    const std::vector<std::pair<std::vector<Cell>, int>>& tabs,
    const std::vector<OverlapSpec>& specs, bool free_overlap = false,
    std::string id = "") {
  if (tabs.empty()) throw data_error("compose_multitab: no traces");
  if (specs.size() + 1 != tabs.size())
    throw data_error("compose_multitab: need one overlap spec per adjacent pair");
  for (const auto& [cells, label] : tabs)
    if (cells.empty()) throw data_error("compose_multitab: empty trace");
  for (const OverlapSpec& s : specs) {
    if (free_overlap) {
      if (s.fraction < 0.0 || s.fraction >= 1.0)
        throw config_error("compose_multitab: overlap fraction outside [0, 1)");
    } else if (!detail::fraction_on_grid(s.fraction)) {
      throw config_error(
          "compose_multitab: overlap fraction not in {0.10..0.60}; use free overlap mode");
    }
  }

  ComposedTrace out;
  out.trace.id = std::move(id);
  out.specs = specs;

  // Place each trace on the shared timeline.
  std::vector<std::vector<double>> placed(tabs.size());
  for (std::size_t i = 0; i < tabs[0].first.size(); ++i)
    placed[0].push_back(tabs[0].first[i].t);
  for (std::size_t k = 1; k < tabs.size(); ++k) {
    const std::vector<double>& prev = placed[k - 1];
    const std::vector<Cell>& cur = tabs[k].first;
    const long long len_prev = static_cast<long long>(prev.size());
    const long long len_cur = static_cast<long long>(cur.size());
    long long o = std::llround(specs[k - 1].fraction * static_cast<double>(len_prev));
    o = std::min(o, len_cur);
    out.requested_overlap.push_back(o);
    double offset;
    if (o >= 1) {
      offset = prev[static_cast<std::size_t>(len_prev - o)] - cur[0].t;
    } else {
      offset = prev.back() + 1.0 - cur[0].t;
    }
    placed[k].reserve(cur.size());
    for (const Cell& c : cur) placed[k].push_back(c.t + offset);
    long long realized = 0;
    for (double t : placed[k])
      if (t <= prev.back()) ++realized;
    out.realized_overlap.push_back(realized);
  }

  // Merge by time, earlier tab first on ties.
  struct Item {
    double t;
    int tab;
    int dir;
  };
  std::vector<Item> items;
  for (std::size_t k = 0; k < tabs.size(); ++k)
    for (std::size_t i = 0; i < tabs[k].first.size(); ++i)
      items.push_back(Item{placed[k][i], static_cast<int>(k), tabs[k].first[i].d});
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    if (a.t != b.t) return a.t < b.t;
    return a.tab < b.tab;
  });

  out.merged_cells.reserve(items.size());
  out.cell_owner.reserve(items.size());
  std::vector<long long> first_idx(tabs.size(), -1), last_idx(tabs.size(), -1);
  for (std::size_t i = 0; i < items.size(); ++i) {
    out.merged_cells.push_back(Cell{items[i].t, items[i].dir});
    out.cell_owner.push_back(items[i].tab);
    if (first_idx[items[i].tab] < 0) first_idx[items[i].tab] = static_cast<long long>(i);
    last_idx[items[i].tab] = static_cast<long long>(i);
  }

  for (std::size_t k = 0; k < tabs.size(); ++k) {
    if (tabs[k].second == kUnmonitored) continue;
    GroundTruth gt;
    gt.span = Segment::from_bounds(static_cast<double>(first_idx[k]),
                                   static_cast<double>(last_idx[k] + 1));
    gt.w = tabs[k].second;
    out.gts_cells.push_back(gt);
  }
  std::sort(out.gts_cells.begin(), out.gts_cells.end(),
            [](const GroundTruth& a, const GroundTruth& b) {
              return a.span.start() < b.span.start();
            });

  out.trace.bursts = bursts_from_cells(out.merged_cells);
  out.trace.cells_total = static_cast<long long>(out.merged_cells.size());
  out.trace.space = IndexSpace::burst;
  for (const GroundTruth& gt : out.gts_cells) {
    GroundTruth mapped;
    mapped.span = cell_span_to_burst_span(gt.span, out.trace.bursts);
    mapped.w = gt.w;
    out.trace.gts.push_back(mapped);
  }
  return out;
}

// Dataset generation config. Each composed trace draws its tab count from
// `tabs` round-robin; every slot is monitored with probability 1/(1+r),
// uniformly over the monitored classes. Unmonitored visits draw a fresh
// signature per visit (an open world of background sites).
struct SynthConfig {
  int classes = 5;
  double base_rate = 10.0;
  std::vector<int> tabs = {2};
  int count = 100;
  double test_fraction = 0.25;
  std::uint64_t seed = 0;
  // Seed of the monitored-site universe; runs with different trace seeds but
  // the same sites_seed sample visits to the same websites. -1 follows seed.
  long long sites_seed = -1;
  double separability = 1.0;
  int cells_min = 300;
  int cells_max = 3000;
  bool free_overlap = false;
  int threads = 1;

  std::uint64_t universe_seed() const {
    return sites_seed < 0 ? seed : static_cast<std::uint64_t>(sites_seed);
  }

  void validate() const {
    if (classes < 1) throw config_error("synth: need at least one monitored class");
    if (base_rate < 0.0) throw config_error("synth: base rate must be >= 0");
    if (tabs.empty()) throw config_error("synth: need at least one tab count");
    for (int l : tabs)
      if (l < 1) throw config_error("synth: tab count must be >= 1");
    if (count < 1) throw config_error("synth: trace count must be >= 1");
    if (test_fraction < 0.0 || test_fraction >= 1.0)
      throw config_error("synth: test fraction must be in [0, 1)");
    if (cells_min < 2 || cells_min > cells_max)
      throw config_error("synth: degenerate cell-count range");
  }
};

inline WebsiteSignature class_signature(const SynthConfig& cfg, int label) {
  return make_signature(
      label, Rng::derive(cfg.universe_seed(), 0xC1A5500ULL + label).next_u64(),
      cfg.separability, cfg.cells_min, cfg.cells_max);
}

// Generates composed trace `index` of the run. Deterministic per (seed,
// index), so generation can run in parallel across traces.
inline ComposedTrace synth_trace(const SynthConfig& cfg,
                                 const std::vector<WebsiteSignature>& class_sigs,
                                 std::uint64_t index, std::string id) {
  Rng rng = Rng::derive(cfg.seed, index);
  const int l = cfg.tabs[index % cfg.tabs.size()];
  std::vector<std::pair<std::vector<Cell>, int>> tabs;
  tabs.reserve(l);
  for (int k = 0; k < l; ++k) {
    const bool monitored = rng.uniform() < 1.0 / (1.0 + cfg.base_rate);
    if (monitored) {
      const int w = 1 + static_cast<int>(rng.uniform_int(cfg.classes));
      tabs.emplace_back(gen_single_tab(class_sigs[w - 1], rng.next_u64()), w);
    } else {
      const WebsiteSignature sig =
          make_signature(kUnmonitored, rng.next_u64(), cfg.separability,
                         cfg.cells_min, cfg.cells_max);
      tabs.emplace_back(gen_single_tab(sig, rng.next_u64()), kUnmonitored);
    }
  }
  const std::vector<OverlapSpec> types = all_overlap_types();
  std::vector<OverlapSpec> specs;
  for (int k = 0; k + 1 < l; ++k)
    specs.push_back(types[rng.uniform_int(types.size())]);
  return compose_multitab(tabs, specs, cfg.free_overlap, std::move(id));
}

}  // namespace wfd
