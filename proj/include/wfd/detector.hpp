#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "wfd/anchors.hpp"
#include "wfd/extractor.hpp"
#include "wfd/nn.hpp"
#include "wfd/trace.hpp"

namespace wfd {

// Keeps exp() in decode well-behaved for extreme regression outputs; the
// gradient is zero outside the clamp.
inline constexpr double kLogLenClamp = 12.0;

struct DetectorConfig {
  int num_classes = 5;  // monitored classes; scores are per-class sigmoids
  int num_anchors = 8;
  int width = 16;
  int r_ds = 16;
  std::vector<int> dilation_rates = {2, 4, 6, 8};
  double norm_divisor = 50.0;  // input burst lengths are divided by this
  double norm_clamp = 20.0;    // and clamped to +/- this
  double center_scale = 1.0;   // multiplies the sigmoid center offset

  void validate() const {
    if (num_classes < 1) throw config_error("detector: need >= 1 monitored class");
    if (num_anchors < 1) throw config_error("detector: need >= 1 anchor");
    if (dilation_rates.empty()) throw config_error("detector: need dilation rates");
    for (int r : dilation_rates)
      if (r < 1) throw config_error("detector: dilation rates must be >= 1");
    if (!(norm_divisor > 0.0)) throw config_error("detector: norm divisor must be > 0");
    ExtractorConfig fe{width, r_ds};
    fe.validate();
  }
};

// Stack of dilated residual blocks perceiving segment scales.
struct ScaleEncoder {
  std::vector<DilatedBlock> blocks;

  ScaleEncoder() = default;
  ScaleEncoder(int channels, const std::vector<int>& rates) {
    for (int r : rates) blocks.emplace_back(channels, r);
  }

  void init(Rng& rng) {
    for (DilatedBlock& b : blocks) b.init(rng);
  }

  ParamRefs params(const std::string& prefix = "se") {
    ParamRefs out;
    for (std::size_t i = 0; i < blocks.size(); ++i)
      for (auto& p : blocks[i].params(prefix + ".b" + std::to_string(i)))
        out.push_back(p);
    return out;
  }

  struct Cache {
    std::vector<DilatedBlock::Cache> blocks;
  };

  Tensor forward(const Tensor& x, Cache* cache) const {
    if (cache) cache->blocks.assign(blocks.size(), {});
    Tensor h = x;
    for (std::size_t i = 0; i < blocks.size(); ++i)
      h = blocks[i].forward(h, cache ? &cache->blocks[i] : nullptr);
    return h;
  }

  Tensor backward(const Cache& cache, const Tensor& gy) {
    Tensor g = gy;
    for (std::size_t i = blocks.size(); i-- > 0;)
      g = blocks[i].backward(cache.blocks[i], g);
    return g;
  }
};

// Two-head predictor over the encoded features. The regression head emits
// (d_c, d_l) per anchor; the classification head emits per-class logits,
// with a 1-kernel shortcut convolution feeding regression features into the
// classification features before the final projection.
struct PredictionHeads {
  int channels = 0, num_anchors = 0, num_classes = 0;
  Conv1d reg_tower, cls_tower, reg_to_cls, reg_out, cls_out;

  PredictionHeads() = default;
  PredictionHeads(int ch, int n, int s)
      : channels(ch), num_anchors(n), num_classes(s),
        reg_tower(ch, ch, 3, 1, 1, 1),
        cls_tower(ch, ch, 3, 1, 1, 1),
        reg_to_cls(ch, ch, 1, 1, 1, 0),
        reg_out(ch, 2 * n, 1, 1, 1, 0),
        cls_out(ch, n * s, 1, 1, 1, 0) {}

  // Output projections start near zero with the classification bias at the
  // logit of a small prior, so initial scores sit near kScorePrior and
  // initial proposals near their anchors.
  static constexpr double kScorePrior = 0.05;

  void init(Rng& rng) {
    reg_tower.init(rng);
    cls_tower.init(rng);
    reg_to_cls.init(rng);
    reg_out.init(rng);
    cls_out.init(rng);
    for (double& w : reg_out.weight.value.data) w *= 0.05;
    for (double& w : cls_out.weight.value.data) w *= 0.05;
    const double b = std::log(kScorePrior / (1.0 - kScorePrior));
    cls_out.bias.value.fill(b);
  }

  ParamRefs params(const std::string& prefix = "head") {
    ParamRefs out;
    for (auto& p : reg_tower.params(prefix + ".regt")) out.push_back(p);
    for (auto& p : cls_tower.params(prefix + ".clst")) out.push_back(p);
    for (auto& p : reg_to_cls.params(prefix + ".short")) out.push_back(p);
    for (auto& p : reg_out.params(prefix + ".rego")) out.push_back(p);
    for (auto& p : cls_out.params(prefix + ".clso")) out.push_back(p);
    return out;
  }

  struct Cache {
    Tensor e, r, g, g2, logits;
  };

  // e: [C, m]. Outputs raw offsets [2n, m] and logits [n*S, m].
  void forward(const Tensor& e, Tensor& offsets_raw, Tensor& logits, Cache* cache) const {
    Tensor r = relu(reg_tower.forward(e));
    Tensor g = relu(cls_tower.forward(e));
    Tensor g2 = g;
    Tensor sc = reg_to_cls.forward(r);
    for (std::size_t i = 0; i < g2.size(); ++i) g2.data[i] += sc.data[i];
    offsets_raw = reg_out.forward(r);
    logits = cls_out.forward(g2);
    if (cache) {
      cache->e = e;
      cache->r = std::move(r);
      cache->g = std::move(g);
      cache->g2 = std::move(g2);
      cache->logits = logits;
    }
  }

  Tensor backward(const Cache& cache, const Tensor& g_offsets_raw, const Tensor& g_logits) {
    Tensor ge(cache.e.shape);
    Tensor gg2(cache.g2.shape);
    cls_out.backward(cache.g2, g_logits, &gg2);

    Tensor gr(cache.r.shape);
    reg_to_cls.backward(cache.r, gg2, &gr);
    Tensor ggpre(cache.g.shape);
    relu_backward(cache.g, gg2, ggpre);
    cls_tower.backward(cache.e, ggpre, &ge);

    reg_out.backward(cache.r, g_offsets_raw, &gr);
    Tensor grpre(cache.r.shape);
    relu_backward(cache.r, gr, grpre);
    reg_tower.backward(cache.e, grpre, &ge);
    return ge;
  }
};

// A decoded anchor prediction: span, per-class scores, and the source
// (cell-segment, anchor) pair it came from.
struct Proposal {
  Segment span;
  std::vector<double> scores;
  int pos_index = 0;
  int anchor_index = 0;
};

// Normalization applied to raw signed burst lengths before any model stage.
inline Tensor normalize_bursts(const std::vector<Burst>& bursts, double divisor,
                               double clamp) {
  if (bursts.empty()) throw data_error("normalize_bursts: empty burst sequence");
  Tensor x({1, bursts.size()});
  for (std::size_t i = 0; i < bursts.size(); ++i)
    x.data[i] = std::clamp(static_cast<double>(bursts[i].l) / divisor, -clamp, clamp);
  return x;
}

// Span decode: the center moves by a bounded sigmoid offset, the length by
// an exponential factor of the anchor length.
inline Segment decode_span(const Segment& anchor, double d_c, double d_l,
                           double center_scale = 1.0) {
  const double dl = std::clamp(d_l, -kLogLenClamp, kLogLenClamp);
  return Segment{center_scale * sigmoid(d_c) + anchor.c, anchor.l * std::exp(dl)};
}

// Full detector: extractor -> scale encoder -> two-head predictor, plus the
// anchor set and decode/filter utilities.
struct DetectorModel {
  DetectorConfig cfg;
  AnchorSet anchors;
  Extractor extractor;
  ScaleEncoder encoder;
  PredictionHeads heads;

  DetectorModel() = default;
  explicit DetectorModel(const DetectorConfig& c, AnchorSet a)
      : cfg(c), anchors(std::move(a)),
        extractor(ExtractorConfig{c.width, c.r_ds}),
        encoder(4 * c.width, c.dilation_rates),
        heads(4 * c.width, c.num_anchors, c.num_classes) {
    cfg.validate();
    if (static_cast<int>(anchors.lengths.size()) != cfg.num_anchors)
      throw config_error("detector: anchor set size must match num_anchors");
  }

  void init(std::uint64_t seed) {
    Rng rng = Rng::derive(seed, 0xD0DEULL);
    extractor.init(rng);
    encoder.init(rng);
    heads.init(rng);
  }

  ParamRefs params() {
    ParamRefs out = extractor.params("fe");
    for (auto& p : encoder.params("se")) out.push_back(p);
    for (auto& p : heads.params("head")) out.push_back(p);
    return out;
  }

  // Everything trained in the detection stage (the extractor stays frozen).
  ParamRefs trainable_params() {
    ParamRefs out = encoder.params("se");
    for (auto& p : heads.params("head")) out.push_back(p);
    return out;
  }

  Tensor normalize_input(const std::vector<Burst>& bursts) const {
    return normalize_bursts(bursts, cfg.norm_divisor, cfg.norm_clamp);
  }

  struct ForwardCache {
    Extractor::Cache fe;
    ScaleEncoder::Cache se;
    PredictionHeads::Cache head;
    Tensor features;  // kept when the extractor stage is skipped
    bool from_features = false;
    int m = 0;
  };

  struct Output {
    Tensor scores;       // [m, n, S], sigmoid per class
    Tensor offsets;      // [m, n, 2], raw (d_c, d_l)
    int m = 0;
  };

  Output forward(const std::vector<Burst>& bursts, ForwardCache* cache = nullptr) const {
    const Tensor x = normalize_input(bursts);
    const Tensor f = extractor.forward(x, cache ? &cache->fe : nullptr);
    if (cache) cache->from_features = false;
    return forward_from(f, cache);
  }

  // Frozen-extractor path over precomputed features [C, m].
  Output forward_features(const Tensor& features, ForwardCache* cache = nullptr) const {
    if (cache) {
      cache->features = features;
      cache->from_features = true;
    }
    return forward_from(features, cache);
  }

  // Accumulates parameter gradients from output-space gradients. When the
  // cache came from forward(), `through_extractor` extends the backward pass
  // into the extractor stage.
  void backward(ForwardCache& cache, const Tensor& g_scores, const Tensor& g_offsets,
                bool through_extractor = true) {
    const int m = cache.m;
    const int n = cfg.num_anchors;
    const int S = cfg.num_classes;
    // Map [m, n, *] gradients back to channel-major conv layout, folding the
    // sigmoid derivative into the logit gradient.
    Tensor g_logits({static_cast<std::size_t>(n * S), static_cast<std::size_t>(m)});
    Tensor g_off_raw({static_cast<std::size_t>(2 * n), static_cast<std::size_t>(m)});
    const Tensor& logits = cache.head.logits;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        for (int c = 0; c < S; ++c) {
          const double p = sigmoid(logits.at(j * S + c, i));
          g_logits.at(j * S + c, i) = g_scores.at(i, j, c) * p * (1.0 - p);
        }
        g_off_raw.at(2 * j + 0, i) = g_offsets.at(i, j, 0);
        g_off_raw.at(2 * j + 1, i) = g_offsets.at(i, j, 1);
      }

    Tensor ge = heads.backward(cache.head, g_off_raw, g_logits);
    Tensor gf = encoder.backward(cache.se, ge);
    if (!cache.from_features && through_extractor) extractor.backward(cache.fe, gf);
  }

  std::vector<Segment> anchor_segments(int m) const {
    return build_anchors(m, anchors, cfg.r_ds);
  }

 private:
  Output forward_from(const Tensor& features, ForwardCache* cache) const {
    const Tensor e = encoder.forward(features, cache ? &cache->se : nullptr);
    Tensor offsets_raw, logits;
    PredictionHeads::Cache head_cache;
    heads.forward(e, offsets_raw, logits, cache ? &cache->head : &head_cache);

    const int m = static_cast<int>(e.dim(1));
    const int n = cfg.num_anchors;
    const int S = cfg.num_classes;
    if (cache) cache->m = m;

    Output out;
    out.m = m;
    out.scores = Tensor({static_cast<std::size_t>(m), static_cast<std::size_t>(n),
                         static_cast<std::size_t>(S)});
    out.offsets = Tensor({static_cast<std::size_t>(m), static_cast<std::size_t>(n), 2});
    const Tensor& lg = cache ? cache->head.logits : logits;
    const Tensor& of = offsets_raw;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        for (int c = 0; c < S; ++c)
          out.scores.at(i, j, c) = sigmoid(lg.at(j * S + c, i));
        out.offsets.at(i, j, 0) = of.at(2 * j + 0, i);
        out.offsets.at(i, j, 1) = of.at(2 * j + 1, i);
      }
    return out;
  }
};

// Converts every anchor into exactly one proposal using the predicted
// offsets; scores are copied from the source anchor's classification output.
inline std::vector<Proposal> decode_proposals(const std::vector<Segment>& anchors,
                                              const Tensor& offsets,
                                              const Tensor& scores,
                                              double center_scale = 1.0) {
  const int m = static_cast<int>(scores.dim(0));
  const int n = static_cast<int>(scores.dim(1));
  const int S = static_cast<int>(scores.dim(2));
  if (anchors.size() != static_cast<std::size_t>(m) * n)
    throw data_error("decode_proposals: anchor/output shape mismatch");
  std::vector<Proposal> out;
  out.reserve(anchors.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      Proposal p;
      p.pos_index = i;
      p.anchor_index = j;
      p.span = decode_span(anchors[static_cast<std::size_t>(i) * n + j],
                           offsets.at(i, j, 0), offsets.at(i, j, 1), center_scale);
      p.scores.resize(S);
      for (int c = 0; c < S; ++c) p.scores[c] = scores.at(i, j, c);
      out.push_back(std::move(p));
    }
  return out;
}

// Test-time filtering: drop proposals whose best class score is below
// score_thresh, then per class greedily suppress anything overlapping a
// kept higher-score survivor at IoUT >= overlap_thresh.
inline std::vector<CandidateTrace> nms_filter(const std::vector<Proposal>& proposals,
                                              double score_thresh,
                                              double overlap_thresh) {
  if (score_thresh < 0.0 || score_thresh > 1.0 || overlap_thresh < 0.0 ||
      overlap_thresh > 1.0)
    throw config_error("nms_filter: thresholds must be in [0, 1]");

  struct Entry {
    Segment span;
    int w;
    double score;
    std::size_t order;
  };
  std::vector<Entry> entries;
  for (std::size_t idx = 0; idx < proposals.size(); ++idx) {
    const Proposal& p = proposals[idx];
    int best = 0;
    for (std::size_t c = 1; c < p.scores.size(); ++c)
      if (p.scores[c] > p.scores[best]) best = static_cast<int>(c);
    const double s = p.scores.empty() ? 0.0 : p.scores[best];
    if (s < score_thresh) continue;
    entries.push_back(Entry{p.span, best + 1, s, idx});
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.order < b.order;
  });

  std::vector<CandidateTrace> kept;
  for (const Entry& e : entries) {
    bool suppressed = false;
    for (const CandidateTrace& k : kept) {
      if (k.w != e.w) continue;
      if (iout(k.span, e.span) >= overlap_thresh) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(CandidateTrace{e.span, e.w, e.score});
  }
  return kept;
}

}  // namespace wfd
