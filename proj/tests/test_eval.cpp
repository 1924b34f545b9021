#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "wfd/eval.hpp"
#include "wfd/eval_reference.hpp"
#include "wfd/rng.hpp"

using namespace wfd;

namespace {

CandidateTrace cand(double s, double e, int w, double score) {
  return CandidateTrace{Segment::from_bounds(s, e), w, score};
}

GroundTruth gt(double s, double e, int w) {
  return GroundTruth{Segment::from_bounds(s, e), w};
}

// Random small instance generator shared by the oracle-equivalence tests.
EvalInstance random_instance(Rng& rng, int max_classes = 5, int max_traces = 10,
                             int max_cands = 20) {
  EvalInstance inst;
  const int classes = 1 + static_cast<int>(rng.uniform_int(max_classes));
  const int traces = 1 + static_cast<int>(rng.uniform_int(max_traces));
  inst.gts.resize(traces);
  inst.candidates.resize(traces);
  for (int t = 0; t < traces; ++t) {
    const int J = static_cast<int>(rng.uniform_int(4));
    for (int j = 0; j < J; ++j) {
      const double s = rng.uniform(0, 150);
      inst.gts[t].push_back(gt(s, s + rng.uniform(3, 60),
                               1 + static_cast<int>(rng.uniform_int(classes))));
    }
  }
  const int K = static_cast<int>(rng.uniform_int(max_cands + 1));
  for (int k = 0; k < K; ++k) {
    const int t = static_cast<int>(rng.uniform_int(traces));
    const double s = rng.uniform(0, 150);
    inst.candidates[t].push_back(cand(s, s + rng.uniform(3, 60),
                                      1 + static_cast<int>(rng.uniform_int(classes)),
                                      rng.uniform()));
  }
  return inst;
}

int instance_classes(const EvalInstance& inst) {
  int c = 0;
  for (const auto& gts : inst.gts)
    for (const GroundTruth& g : gts) c = std::max(c, g.w);
  for (const auto& cands : inst.candidates)
    for (const CandidateTrace& cd : cands) c = std::max(c, cd.w);
  return std::max(1, c);
}

}  // namespace

TEST_CASE("classify_matches counts a perfect detection as TP") {
  const auto counts = classify_matches({cand(0, 10, 1, 0.9)}, {gt(0, 10, 1)}, 0.5, 0.5);
  CHECK(counts.at(1).tp == 1);
  CHECK(counts.at(1).fp == 0);
  CHECK(counts.at(1).fn == 0);
}

TEST_CASE("classify_matches flips TP to FP as lambda rises past the overlap") {
  // IoUT 0.6: TP at lambda .5, FP (plus FN for the gt) at lambda .75.
  const std::vector<CandidateTrace> cands = {cand(0, 6, 1, 0.9)};
  const std::vector<GroundTruth> gts = {gt(0, 10, 1)};
  REQUIRE(iout(cands[0].span, gts[0].span) == Catch::Approx(0.6));
  const auto at50 = classify_matches(cands, gts, 0.5, 0.5);
  CHECK(at50.at(1).tp == 1);
  const auto at75 = classify_matches(cands, gts, 0.75, 0.5);
  CHECK(at75.at(1).tp == 0);
  CHECK(at75.at(1).fp == 1);
  CHECK(at75.at(1).fn == 1);
}

TEST_CASE("classify_matches is one-to-one: the higher score wins the gt") {
  const std::vector<CandidateTrace> cands = {cand(0, 10, 1, 0.7), cand(1, 11, 1, 0.9)};
  const std::vector<GroundTruth> gts = {gt(0, 10, 1)};
  const auto counts = classify_matches(cands, gts, 0.5, 0.5);
  CHECK(counts.at(1).tp == 1);
  CHECK(counts.at(1).fp == 1);
  CHECK(counts.at(1).fn == 0);
}

TEST_CASE("classify_matches drops candidates below tau") {
  const auto counts = classify_matches({cand(0, 10, 1, 0.3)}, {gt(0, 10, 1)}, 0.5, 0.5);
  CHECK(counts.at(1).tp == 0);
  CHECK(counts.at(1).fp == 0);
  CHECK(counts.at(1).fn == 1);
}

TEST_CASE("average_precision on simple cases") {
  EvalInstance inst;
  inst.gts = {{gt(0, 10, 1)}};
  inst.candidates = {{cand(0, 10, 1, 0.9)}};
  CHECK(average_precision(inst, 1, 0.5) == 1.0);

  // All detections carry the wrong class.
  EvalInstance wrong;
  wrong.gts = {{gt(0, 10, 1)}};
  wrong.candidates = {{cand(0, 10, 2, 0.9)}};
  CHECK(average_precision(wrong, 1, 0.5) == 0.0);

  // High-scoring TP followed by a zero-overlap FP: recall 1 is reached at
  // precision 1 before the FP enters, so AP stays 1.
  EvalInstance mixed;
  mixed.gts = {{gt(0, 10, 1)}};
  mixed.candidates = {{cand(1, 9, 1, 0.9), cand(100, 130, 1, 0.6)}};
  REQUIRE(iout(mixed.candidates[0][0].span, mixed.gts[0][0].span) ==
          Catch::Approx(0.8));
  CHECK(average_precision(mixed, 1, 0.5) == 1.0);

  // No ground truths of the class: undefined.
  CHECK(average_precision(mixed, 2, 0.5) < 0.0);
}

TEST_CASE("map_report on perfect and empty predictions") {
  EvalInstance inst;
  inst.gts = {{gt(0, 10, 1), gt(20, 40, 2)}, {gt(5, 25, 1)}};
  inst.candidates = {{cand(0, 10, 1, 0.9), cand(20, 40, 2, 0.95)},
                     {cand(5, 25, 1, 0.8)}};
  EvalConfig cfg;
  cfg.lambda_grid = EvalConfig::default_grid();
  cfg.class_count = 2;
  const EvalReport rep = map_report(inst, cfg);
  CHECK(rep.map == 1.0);
  CHECK(rep.map50 == 1.0);
  CHECK(rep.map75 == 1.0);
  for (double m : rep.map_lambda) CHECK(m == 1.0);
  CHECK(rep.tp == 3);
  CHECK(rep.fp == 0);
  CHECK(rep.fn == 0);

  EvalInstance none = inst;
  none.candidates = {{}, {}};
  const EvalReport rep0 = map_report(none, cfg);
  CHECK(rep0.map == 0.0);
  CHECK(rep0.fn == 3);

  EvalInstance empty;
  empty.gts = {{}};
  empty.candidates = {{}};
  CHECK_THROWS_AS(map_report(empty, cfg), data_error);
  EvalConfig bad = cfg;
  bad.class_count = 0;
  CHECK_THROWS_AS(map_report(inst, bad), data_error);
}

TEST_CASE("map equals the mean of the per-lambda values") {
  Rng rng(121);
  for (int rep = 0; rep < 20; ++rep) {
    const EvalInstance inst = random_instance(rng);
    long long gts = 0;
    for (const auto& g : inst.gts) gts += static_cast<long long>(g.size());
    if (gts == 0) continue;
    EvalConfig cfg;
    cfg.lambda_grid = EvalConfig::default_grid();
    cfg.class_count = instance_classes(inst);
    const EvalReport r = map_report(inst, cfg);
    double mean = 0.0;
    for (double m : r.map_lambda) mean += m;
    mean /= static_cast<double>(r.map_lambda.size());
    CHECK(r.map == Catch::Approx(mean).margin(1e-12));
  }
}

TEST_CASE("AP is monotone non-increasing in lambda") {
  Rng rng(123);
  for (int rep = 0; rep < 50; ++rep) {
    const EvalInstance inst = random_instance(rng);
    const int classes = instance_classes(inst);
    for (int c = 1; c <= classes; ++c) {
      double prev = 2.0;
      for (double lambda : {0.3, 0.5, 0.7, 0.9}) {
        const double ap = average_precision(inst, c, lambda);
        if (ap < 0.0) continue;
        CHECK(ap <= prev + 1e-12);
        prev = ap;
      }
    }
  }
}

TEST_CASE("adding a lower-scored duplicate of a TP never increases AP") {
  Rng rng(127);
  for (int rep = 0; rep < 50; ++rep) {
    EvalInstance inst = random_instance(rng);
    // Find any gt and plant a perfect detection plus its duplicate.
    int t = -1;
    for (std::size_t i = 0; i < inst.gts.size(); ++i)
      if (!inst.gts[i].empty()) t = static_cast<int>(i);
    if (t < 0) continue;
    const GroundTruth& g0 = inst.gts[t][0];
    // The duplicate must have nothing else to claim, or it is not a
    // duplicate: skip instances with another overlapping same-class gt.
    bool other_overlap = false;
    for (std::size_t j = 1; j < inst.gts[t].size(); ++j)
      if (inst.gts[t][j].w == g0.w && iout(inst.gts[t][j].span, g0.span) > 0.0)
        other_overlap = true;
    if (other_overlap) continue;
    inst.candidates[t].push_back(
        CandidateTrace{g0.span, g0.w, 0.95});
    const double before = average_precision(inst, g0.w, 0.5);
    EvalInstance dup = inst;
    dup.candidates[t].push_back(CandidateTrace{g0.span, g0.w, 0.55});
    const double after = average_precision(dup, g0.w, 0.5);
    CHECK(after <= before + 1e-12);
  }
}

TEST_CASE("ranked evaluator equals the exhaustive reference on random instances") {
  Rng rng(131);
  int compared = 0;
  for (int rep = 0; rep < 300; ++rep) {
    const EvalInstance inst = random_instance(rng);
    long long gts = 0;
    for (const auto& g : inst.gts) gts += static_cast<long long>(g.size());
    if (gts == 0) continue;
    const int classes = instance_classes(inst);
    EvalConfig cfg;
    cfg.lambda_grid = EvalConfig::default_grid();
    cfg.class_count = classes;
    const EvalReport fast = map_report(inst, cfg);
    const double slow = reference::map(inst, classes, cfg.lambda_grid);
    CHECK(std::abs(fast.map - slow) <= 1e-9);
    for (std::size_t l = 0; l < cfg.lambda_grid.size(); ++l) {
      const double slow_l =
          reference::map_lambda(inst, classes, cfg.lambda_grid[l]);
      CHECK(std::abs(fast.map_lambda[l] - slow_l) <= 1e-9);
    }
    ++compared;
  }
  CHECK(compared > 200);
}

TEST_CASE("throughput uses 512-byte cells and decimal megabytes") {
  CHECK(megabytes(4441) == Catch::Approx(2.273792));
  CHECK(throughput_mbps(1000000, 1.0) == Catch::Approx(512.0));
  CHECK(throughput_mbps(0, 2.0) == 0.0);
  CHECK_THROWS_AS(throughput_mbps(100, 0.0), data_error);
  CHECK_THROWS_AS(throughput_mbps(-1, 1.0), data_error);
}
