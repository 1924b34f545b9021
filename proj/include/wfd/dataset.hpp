#pragma once

#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "wfd/errors.hpp"
#include "wfd/eval.hpp"
#include "wfd/trace.hpp"

namespace wfd {

using json = nlohmann::json;

// One dataset record per line:
// {"id", "bursts":[signed ints], "cells_total", "space":"burst",
//  "gts":[{"s","e","w"}]}
inline json trace_to_json(const MultiTabTrace& tr) {
  json rec;
  rec["id"] = tr.id;
  json bursts = json::array();
  for (const Burst& b : tr.bursts) bursts.push_back(b.l);
  rec["bursts"] = std::move(bursts);
  rec["cells_total"] = tr.cells_total;
  rec["space"] = tr.space == IndexSpace::burst ? "burst" : "cell";
  json gts = json::array();
  for (const GroundTruth& gt : tr.gts) {
    json g;
    g["s"] = static_cast<long long>(std::llround(gt.span.start()));
    g["e"] = static_cast<long long>(std::llround(gt.span.end()));
    g["w"] = gt.w;
    gts.push_back(std::move(g));
  }
  rec["gts"] = std::move(gts);
  return rec;
}

inline MultiTabTrace trace_from_json(const json& rec) {
  MultiTabTrace tr;
  try {
    tr.id = rec.at("id").get<std::string>();
    const std::string space = rec.at("space").get<std::string>();
    if (space == "burst")
      tr.space = IndexSpace::burst;
    else if (space == "cell")
      tr.space = IndexSpace::cell;
    else
      throw data_error("dataset: unknown index space '" + space + "'");
    for (const auto& l : rec.at("bursts")) {
      const long long v = l.get<long long>();
      if (v == 0) throw data_error("dataset: zero-length burst");
      tr.bursts.push_back(Burst{0.0, v});
    }
    tr.cells_total = rec.at("cells_total").get<long long>();
    for (const auto& g : rec.at("gts")) {
      GroundTruth gt;
      const double s = g.at("s").get<double>();
      const double e = g.at("e").get<double>();
      gt.span = Segment::from_bounds(s, e);
      gt.w = g.at("w").get<int>();
      if (!(gt.span.l > 0)) throw data_error("dataset: empty ground-truth span");
      if (gt.w == kUnmonitored)
        throw data_error("dataset: ground truths must carry monitored labels");
      tr.gts.push_back(gt);
    }
  } catch (const json::exception& e) {
    throw data_error(std::string("dataset: malformed record: ") + e.what());
  }
  if (cell_count(tr.bursts) != tr.cells_total)
    throw data_error("dataset: cells_total does not match burst lengths in " + tr.id);
  return tr;
}

inline void write_dataset(const std::string& path,
                          const std::vector<MultiTabTrace>& traces) {
  std::ofstream out(path);
  if (!out) throw data_error("dataset: cannot write " + path);
  for (const MultiTabTrace& tr : traces) out << trace_to_json(tr).dump() << "\n";
}

inline std::vector<MultiTabTrace> read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("dataset: cannot read " + path);
  std::vector<MultiTabTrace> traces;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw data_error("dataset: parse error at " + path + ":" +
                       std::to_string(line_no) + ": " + e.what());
    }
    traces.push_back(trace_from_json(rec));
  }
  return traces;
}

// Detections file: {"trace_id","c","l","w","score"} per line.
struct Detection {
  std::string trace_id;
  CandidateTrace cand;
};

inline void write_detections(const std::string& path,
                             const std::vector<Detection>& dets) {
  std::ofstream out(path);
  if (!out) throw data_error("detections: cannot write " + path);
  for (const Detection& d : dets) {
    json rec;
    rec["trace_id"] = d.trace_id;
    rec["c"] = d.cand.span.c;
    rec["l"] = d.cand.span.l;
    rec["w"] = d.cand.w;
    rec["score"] = d.cand.score;
    out << rec.dump() << "\n";
  }
}

inline std::vector<Detection> read_detections(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("detections: cannot read " + path);
  std::vector<Detection> dets;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json rec = json::parse(line);
      Detection d;
      d.trace_id = rec.at("trace_id").get<std::string>();
      d.cand.span.c = rec.at("c").get<double>();
      d.cand.span.l = rec.at("l").get<double>();
      d.cand.w = rec.at("w").get<int>();
      d.cand.score = rec.at("score").get<double>();
      if (!(d.cand.span.l > 0)) throw data_error("detections: non-positive length");
      if (d.cand.score < 0.0 || d.cand.score > 1.0)
        throw data_error("detections: score outside [0, 1]");
      dets.push_back(std::move(d));
    } catch (const json::exception& e) {
      throw data_error("detections: parse error at " + path + ":" +
                       std::to_string(line_no) + ": " + e.what());
    }
  }
  return dets;
}

// Builds the evaluator instance from a ground-truth dataset and a detections
// file; detections for unknown trace ids are rejected.
inline EvalInstance make_eval_instance(const std::vector<MultiTabTrace>& gt_traces,
                                       const std::vector<Detection>& dets) {
  EvalInstance inst;
  std::map<std::string, std::size_t> index;
  inst.gts.reserve(gt_traces.size());
  inst.candidates.assign(gt_traces.size(), {});
  for (std::size_t i = 0; i < gt_traces.size(); ++i) {
    index[gt_traces[i].id] = i;
    inst.gts.push_back(gt_traces[i].gts);
  }
  for (const Detection& d : dets) {
    const auto it = index.find(d.trace_id);
    if (it == index.end())
      throw data_error("detections: unknown trace id '" + d.trace_id + "'");
    inst.candidates[it->second].push_back(d.cand);
  }
  return inst;
}

}  // namespace wfd
