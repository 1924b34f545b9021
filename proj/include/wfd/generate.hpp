#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "wfd/dataset.hpp"
#include "wfd/parallel.hpp"
#include "wfd/synth.hpp"

namespace wfd {

struct DatasetSummary {
  std::vector<MultiTabTrace> train, test;
  json manifest;
};

namespace detail {

struct SplitStats {
  std::map<std::string, long long> overlap_types;
  std::map<int, long long> class_hist;
  long long cells = 0, bursts = 0, gts = 0;
  long long max_overlap_error = 0;
  std::map<int, long long> tab_counts;
};

inline json stats_to_json(const SplitStats& s, std::size_t traces) {
  json out;
  out["traces"] = traces;
  json types = json::object();
  for (const auto& [name, n] : s.overlap_types) types[name] = n;
  out["overlap_type_counts"] = std::move(types);
  json hist = json::object();
  for (const auto& [w, n] : s.class_hist) hist[std::to_string(w)] = n;
  out["class_histogram"] = std::move(hist);
  json tabs = json::object();
  for (const auto& [l, n] : s.tab_counts) tabs[std::to_string(l)] = n;
  out["per_tab_counts"] = std::move(tabs);
  out["cells_total"] = s.cells;
  out["bursts_total"] = s.bursts;
  out["gts_total"] = s.gts;
  out["mean_cell_len"] = traces ? static_cast<double>(s.cells) / traces : 0.0;
  out["mean_burst_len"] = traces ? static_cast<double>(s.bursts) / traces : 0.0;
  out["max_overlap_error_cells"] = s.max_overlap_error;
  return out;
}

inline void accumulate(SplitStats& s, const ComposedTrace& ct) {
  for (const OverlapSpec& spec : ct.specs) ++s.overlap_types[overlap_type_name(spec)];
  for (const GroundTruth& gt : ct.trace.gts) ++s.class_hist[gt.w];
  s.cells += ct.trace.cells_total;
  s.bursts += static_cast<long long>(ct.trace.bursts.size());
  s.gts += static_cast<long long>(ct.trace.gts.size());
  for (std::size_t k = 0; k < ct.requested_overlap.size(); ++k)
    s.max_overlap_error =
        std::max(s.max_overlap_error,
                 std::llabs(ct.requested_overlap[k] - ct.realized_overlap[k]));
  ++s.tab_counts[static_cast<int>(ct.specs.size()) + 1];
}

}  // namespace detail

// Generates the train and test splits plus a manifest describing the run.
// Trace i draws everything from a substream of (seed, i), so generation is
// reproducible and parallelizable; outputs are ordered by index either way.
inline DatasetSummary gen_dataset(const SynthConfig& cfg) {
  cfg.validate();

  std::vector<WebsiteSignature> class_sigs;
  for (int w = 1; w <= cfg.classes; ++w) class_sigs.push_back(class_signature(cfg, w));

  const std::size_t n_train = static_cast<std::size_t>(cfg.count);
  std::size_t n_test = static_cast<std::size_t>(cfg.count * cfg.test_fraction + 0.5);
  if (cfg.test_fraction > 0.0 && n_test == 0) n_test = 1;
  const std::size_t total = n_train + n_test;

  std::vector<ComposedTrace> composed(total);
  parallel_for(total, cfg.threads, [&](std::size_t i) {
    char buf[32];
    if (i < n_train)
      std::snprintf(buf, sizeof(buf), "tr%06zu", i);
    else
      std::snprintf(buf, sizeof(buf), "te%06zu", i - n_train);
    composed[i] = synth_trace(cfg, class_sigs, i, buf);
  });

  DatasetSummary out;
  detail::SplitStats train_stats, test_stats;
  for (std::size_t i = 0; i < total; ++i) {
    if (i < n_train) {
      detail::accumulate(train_stats, composed[i]);
      out.train.push_back(std::move(composed[i].trace));
    } else {
      detail::accumulate(test_stats, composed[i]);
      out.test.push_back(std::move(composed[i].trace));
    }
  }

  json manifest;
  manifest["seed"] = cfg.seed;
  manifest["sites_seed"] = cfg.universe_seed();
  manifest["classes"] = cfg.classes;
  manifest["base_rate"] = cfg.base_rate;
  manifest["tabs"] = cfg.tabs;
  manifest["count"] = cfg.count;
  manifest["test_fraction"] = cfg.test_fraction;
  manifest["separability"] = cfg.separability;
  manifest["cells_min"] = cfg.cells_min;
  manifest["cells_max"] = cfg.cells_max;
  manifest["free_overlap"] = cfg.free_overlap;
  manifest["train"] = detail::stats_to_json(train_stats, out.train.size());
  manifest["test"] = detail::stats_to_json(test_stats, out.test.size());
  out.manifest = std::move(manifest);
  return out;
}

// Writes train.jsonl, test.jsonl and manifest.json under `dir`.
inline void write_dataset_dir(const std::string& dir, const DatasetSummary& ds) {
  std::filesystem::create_directories(dir);
  write_dataset(dir + "/train.jsonl", ds.train);
  write_dataset(dir + "/test.jsonl", ds.test);
  std::ofstream mf(dir + "/manifest.json");
  if (!mf) throw data_error("dataset: cannot write " + dir + "/manifest.json");
  mf << ds.manifest.dump(2) << "\n";
}

}  // namespace wfd
