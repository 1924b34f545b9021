#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <ostream>
#include <vector>

#include "wfd/detector.hpp"
#include "wfd/extractor.hpp"
#include "wfd/trace.hpp"

namespace wfd {

struct LossConfig {
  double alpha = 0.25;   // focal loss positive weight
  double gamma = 2.0;    // focal loss focusing exponent
  int k_positives = 9;   // nearest proposals kept per ground-truth
  double tau_pos = 0.3;  // minimum IoUT for a valid positive
  double tau_neg = 0.1;  // maximum IoUT for a valid negative

  void validate() const {
    if (!(tau_neg > 0.0 && tau_neg <= tau_pos && tau_pos < 1.0))
      throw config_error("loss: need 0 < tau_neg <= tau_pos < 1");
    if (k_positives < 1) throw config_error("loss: k_positives must be >= 1");
    if (alpha <= 0.0 || alpha >= 1.0) throw config_error("loss: alpha must be in (0, 1)");
    if (gamma < 0.0) throw config_error("loss: gamma must be >= 0");
  }
};

struct TrainConfig {
  double lr = 0.12;
  int batch = 8;        // 48 at full scale
  int iters = 2000;     // 6000 at full scale
  std::uint64_t seed = 0;
  int stage1_epochs = 20;
  // Global-norm gradient clip. Inactive in healthy runs; keeps one oversized
  // focal-loss step from saturating every sigmoid and killing the gradients.
  // 0 disables.
  double clip_norm = 20.0;

  void validate() const {
    if (!(lr > 0.0)) throw config_error("train: learning rate must be > 0");
    if (batch < 1) throw config_error("train: batch size must be >= 1");
    if (iters < 0) throw config_error("train: iterations must be >= 0");
    if (stage1_epochs < 1) throw config_error("train: stage-1 epochs must be >= 1");
    if (clip_norm < 0.0) throw config_error("train: clip norm must be >= 0");
  }
};

// Scales gradients so their global L2 norm is at most max_norm.
inline void clip_gradients(const ParamRefs& params, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (const auto& [name, p] : params)
    for (double g : p->grad.data) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double scale = max_norm / norm;
  for (const auto& [name, p] : params)
    for (double& g : p->grad.data) g *= scale;
}

// Positive/negative/ignored split of one forward pass's proposals. The three
// sets are disjoint and cover all proposals; negatives are pooled across
// ground-truths.
struct MatchResult {
  std::vector<std::vector<int>> positives;  // per ground-truth
  std::vector<int> negatives;
  std::vector<int> ignored;
};

// Assigns proposals to ground-truths: per gt, the k nearest overlapping
// proposals by center L1 distance become positives if their IoUT reaches
// tau_pos; a proposal claimed by two gts goes to the higher-IoUT one.
// Unclaimed proposals are negatives unless some gt overlaps them above
// tau_neg, in which case they are ignored.
inline MatchResult match(const std::vector<Proposal>& proposals,
                         const std::vector<GroundTruth>& gts, const LossConfig& cfg) {
  cfg.validate();
  MatchResult out;
  out.positives.assign(gts.size(), {});

  const int P = static_cast<int>(proposals.size());
  std::vector<double> max_iout(P, 0.0);
  // claimed_by[p] = (gt index, iout) for the current positive assignment.
  std::vector<int> claimed_by(P, -1);
  std::vector<double> claimed_iout(P, 0.0);

  for (std::size_t j = 0; j < gts.size(); ++j) {
    struct Cand {
      int idx;
      double dist;
      double ov;
    };
    std::vector<Cand> cands;
    for (int p = 0; p < P; ++p) {
      const double ov = iout(proposals[p].span, gts[j].span);
      max_iout[p] = std::max(max_iout[p], ov);
      if (ov > 0.0)
        cands.push_back(Cand{p, std::abs(proposals[p].span.c - gts[j].span.c), ov});
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.dist != b.dist) return a.dist < b.dist;
      return a.idx < b.idx;
    });
    const std::size_t k = std::min<std::size_t>(cfg.k_positives, cands.size());
    for (std::size_t t = 0; t < k; ++t) {
      const Cand& c = cands[t];
      if (c.ov < cfg.tau_pos) continue;
      if (claimed_by[c.idx] < 0 || c.ov > claimed_iout[c.idx]) {
        claimed_by[c.idx] = static_cast<int>(j);
        claimed_iout[c.idx] = c.ov;
      }
    }
  }

  for (int p = 0; p < P; ++p)
    if (claimed_by[p] >= 0) out.positives[claimed_by[p]].push_back(p);

  for (int p = 0; p < P; ++p) {
    if (claimed_by[p] >= 0) continue;
    if (max_iout[p] <= cfg.tau_neg)
      out.negatives.push_back(p);
    else
      out.ignored.push_back(p);
  }
  return out;
}

inline constexpr double kScoreEps = 1e-7;

// Focal loss on one class score. p_t = p for positives and 1-p for
// negatives; the weight is alpha for positives and 1-alpha for negatives.
inline double focal_loss(double p, bool is_positive, const LossConfig& cfg) {
  p = std::clamp(p, kScoreEps, 1.0 - kScoreEps);
  const double pt = is_positive ? p : 1.0 - p;
  const double at = is_positive ? cfg.alpha : 1.0 - cfg.alpha;
  return -at * std::pow(1.0 - pt, cfg.gamma) * std::log(pt);
}

// d focal_loss / d p.
inline double focal_loss_dp(double p, bool is_positive, const LossConfig& cfg) {
  const double pc = std::clamp(p, kScoreEps, 1.0 - kScoreEps);
  if (pc != p) return 0.0;  // flat outside the clamp
  const double pt = is_positive ? pc : 1.0 - pc;
  const double at = is_positive ? cfg.alpha : 1.0 - cfg.alpha;
  double d_pt;
  if (cfg.gamma == 0.0) {
    d_pt = -at / pt;
  } else {
    d_pt = -at * (-cfg.gamma * std::pow(1.0 - pt, cfg.gamma - 1.0) * std::log(pt) +
                  std::pow(1.0 - pt, cfg.gamma) / pt);
  }
  return is_positive ? d_pt : -d_pt;
}

// Localization loss for a positive pair: 1 - IoUT.
inline double reg_loss(const Segment& proposal, const Segment& gt) {
  return 1.0 - iout(proposal, gt);
}

// d IoUT(p, g) / d (p.c, p.l). Zero when the segments are disjoint.
inline void iout_grad(const Segment& p, const Segment& g, double& d_c, double& d_l) {
  d_c = 0.0;
  d_l = 0.0;
  const double sp = p.start(), ep = p.end();
  const double sg = g.start(), eg = g.end();
  const double inter = std::min(ep, eg) - std::max(sp, sg);
  if (inter <= 0.0) return;
  const double uni = p.l + g.l - inter;
  const double dI_de = ep < eg ? 1.0 : 0.0;
  const double dI_ds = sp > sg ? -1.0 : 0.0;
  const double dI_dc = dI_de + dI_ds;
  const double dI_dl = 0.5 * dI_de - 0.5 * dI_ds;
  const double u2 = uni * uni;
  d_c = dI_dc * (uni + inter) / u2;
  d_l = (dI_dl * (uni + inter) - inter) / u2;
}

struct LossBreakdown {
  double total = 0.0;
  double cls = 0.0;
  double reg = 0.0;
  int positives = 0;
};

// Batch objective: focal classification loss over valid proposals (one-hot
// targets at the matched gt class for positives, all-negative targets for
// pooled negatives) plus 1-IoUT regression loss over positives, normalized
// by the batch positive count (floor 1). Accumulates parameter gradients;
// pass `features` to reuse precomputed extractor outputs when the extractor
// is frozen.
inline LossBreakdown total_loss(const std::vector<const MultiTabTrace*>& batch,
                                DetectorModel& model, const LossConfig& cfg,
                                bool through_extractor = true,
                                const std::vector<const Tensor*>* features = nullptr) {
  if (batch.empty()) throw data_error("total_loss: empty batch");
  cfg.validate();

  struct TraceState {
    DetectorModel::ForwardCache cache;
    DetectorModel::Output out;
    std::vector<Segment> anchor_segs;
    std::vector<Proposal> proposals;
    MatchResult mr;
  };
  std::vector<TraceState> states(batch.size());

  int batch_positives = 0;
  for (std::size_t t = 0; t < batch.size(); ++t) {
    TraceState& st = states[t];
    if (features)
      st.out = model.forward_features(*(*features)[t], &st.cache);
    else
      st.out = model.forward(batch[t]->bursts, &st.cache);
    st.anchor_segs = model.anchor_segments(st.out.m);
    st.proposals = decode_proposals(st.anchor_segs, st.out.offsets, st.out.scores,
                                    model.cfg.center_scale);
    st.mr = match(st.proposals, batch[t]->gts, cfg);
    for (const auto& pos : st.mr.positives)
      batch_positives += static_cast<int>(pos.size());
  }

  const double scale = 1.0 / std::max(1, batch_positives);
  const int n = model.cfg.num_anchors;
  const int S = model.cfg.num_classes;

  LossBreakdown bd;
  bd.positives = batch_positives;
  for (std::size_t t = 0; t < batch.size(); ++t) {
    TraceState& st = states[t];
    const std::vector<GroundTruth>& gts = batch[t]->gts;
    const int m = st.out.m;
    Tensor g_scores({static_cast<std::size_t>(m), static_cast<std::size_t>(n),
                     static_cast<std::size_t>(S)});
    Tensor g_offsets({static_cast<std::size_t>(m), static_cast<std::size_t>(n), 2});

    auto add_cls = [&](int p, int target_class /* -1 = none */) {
      const Proposal& pr = st.proposals[p];
      const int i = pr.pos_index, j = pr.anchor_index;
      for (int c = 0; c < S; ++c) {
        const bool is_pos = (c == target_class);
        bd.cls += focal_loss(pr.scores[c], is_pos, cfg);
        g_scores.at(i, j, c) += focal_loss_dp(pr.scores[c], is_pos, cfg) * scale;
      }
    };

    for (std::size_t j = 0; j < gts.size(); ++j) {
      for (int p : st.mr.positives[j]) {
        add_cls(p, gts[j].w - 1);
        const Proposal& pr = st.proposals[p];
        bd.reg += reg_loss(pr.span, gts[j].span);
        double d_c, d_l;
        iout_grad(pr.span, gts[j].span, d_c, d_l);
        // reg loss is 1 - IoUT, so flip signs; chain through the decode.
        const int i_idx = pr.pos_index, j_idx = pr.anchor_index;
        const double d_c_raw = st.out.offsets.at(i_idx, j_idx, 0);
        const double d_l_raw = st.out.offsets.at(i_idx, j_idx, 1);
        const double sig = sigmoid(d_c_raw);
        g_offsets.at(i_idx, j_idx, 0) +=
            -d_c * model.cfg.center_scale * sig * (1.0 - sig) * scale;
        const double dl_clamped = std::abs(d_l_raw) < kLogLenClamp ? 1.0 : 0.0;
        g_offsets.at(i_idx, j_idx, 1) += -d_l * pr.span.l * dl_clamped * scale;
      }
    }
    for (int p : st.mr.negatives) add_cls(p, -1);

    model.backward(st.cache, g_scores, g_offsets, through_extractor);
  }

  bd.cls *= scale;
  bd.reg *= scale;
  bd.total = bd.cls + bd.reg;
  return bd;
}

struct PretrainResult {
  double final_accuracy = 0.0;
  int classes = 0;
};

// Stage-1 training: extractor + global-average-pool + linear classifier with
// softmax cross-entropy on single-tab traces. A trace labeled by its single
// ground-truth, or as the shared unmonitored class when it has none.
inline PretrainResult pretrain_extractor(const std::vector<MultiTabTrace>& data,
                                         Extractor& fe, const TrainConfig& cfg,
                                         double norm_divisor = 50.0,
                                         double norm_clamp = 20.0,
                                         std::ostream* log = nullptr) {
  cfg.validate();
  if (data.empty()) throw data_error("pretrain: empty dataset");

  std::vector<int> labels;
  labels.reserve(data.size());
  std::map<int, int> remap;
  for (const MultiTabTrace& tr : data) {
    const int w = tr.gts.empty() ? kUnmonitored : tr.gts.front().w;
    remap.emplace(w, 0);
    labels.push_back(w);
  }
  if (remap.size() < 2)
    throw data_error("pretrain: dataset must contain at least two classes");
  int next = 0;
  for (auto& [w, idx] : remap) idx = next++;
  const int n_classes = next;

  const int C = fe.cfg.out_channels();
  Linear probe(C, n_classes);
  Rng init_rng = Rng::derive(cfg.seed, 0x9E0BEULL);
  probe.init(init_rng);

  ParamRefs params = fe.params("fe");
  for (auto& p : probe.params("probe")) params.push_back(p);

  Rng order_rng = Rng::derive(cfg.seed, 0x5880FULL);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  double accuracy = 0.0;
  for (int epoch = 0; epoch < cfg.stage1_epochs; ++epoch) {
    // Fisher-Yates with the run's own rng keeps epochs reproducible.
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[order_rng.uniform_int(i)]);

    double loss_sum = 0.0;
    int correct = 0;
    std::size_t done = 0;
    while (done < order.size()) {
      const std::size_t take = std::min<std::size_t>(cfg.batch, order.size() - done);
      zero_grads(params);
      for (std::size_t b = 0; b < take; ++b) {
        const MultiTabTrace& tr = data[order[done + b]];
        const int target = remap.at(labels[order[done + b]]);

        Extractor::Cache fe_cache;
        const Tensor x = normalize_bursts(tr.bursts, norm_divisor, norm_clamp);
        const Tensor f = fe.forward(x, &fe_cache);
        const int m = static_cast<int>(f.dim(1));

        Tensor pooled({static_cast<std::size_t>(C)});
        for (int c = 0; c < C; ++c) {
          double acc = 0.0;
          for (int i = 0; i < m; ++i) acc += f.at(c, i);
          pooled.data[c] = acc / m;
        }
        const Tensor logits = probe.forward(pooled);

        double mx = logits.data[0];
        int arg = 0;
        for (int k = 1; k < n_classes; ++k)
          if (logits.data[k] > mx) {
            mx = logits.data[k];
            arg = k;
          }
        if (arg == target) ++correct;

        double z = 0.0;
        for (int k = 0; k < n_classes; ++k) z += std::exp(logits.data[k] - mx);
        loss_sum += -(logits.data[target] - mx - std::log(z));

        Tensor g_logits({static_cast<std::size_t>(n_classes)});
        for (int k = 0; k < n_classes; ++k) {
          const double soft = std::exp(logits.data[k] - mx) / z;
          g_logits.data[k] = (soft - (k == target ? 1.0 : 0.0)) / static_cast<double>(take);
        }
        Tensor g_pooled({static_cast<std::size_t>(C)});
        probe.backward(pooled, g_logits, &g_pooled);
        Tensor g_f(f.shape);
        for (int c = 0; c < C; ++c)
          for (int i = 0; i < m; ++i) g_f.at(c, i) = g_pooled.data[c] / m;
        fe.backward(fe_cache, g_f);
      }
      sgd_step(params, cfg.lr);
      done += take;
    }
    accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    if (log)
      *log << "pretrain epoch " << epoch + 1 << "/" << cfg.stage1_epochs
           << " loss " << loss_sum / static_cast<double>(data.size())
           << " acc " << accuracy << "\n";
  }

  PretrainResult res;
  res.final_accuracy = accuracy;
  res.classes = n_classes;
  return res;
}

// Stage-2 training: the extractor stays frozen (its features are computed
// once per trace and cached); the scale encoder and both heads are updated
// by plain SGD. Writes one CSV line per iteration to `loss_log` when given.
inline void train_detector(const std::vector<MultiTabTrace>& data, DetectorModel& model,
                           const TrainConfig& cfg, const LossConfig& loss_cfg,
                           std::ostream* loss_log = nullptr,
                           std::ostream* warnings = nullptr) {
  cfg.validate();
  loss_cfg.validate();
  if (data.empty()) throw data_error("train: empty dataset");

  if (warnings) {
    for (const MultiTabTrace& tr : data)
      if (static_cast<int>(tr.bursts.size()) < model.cfg.r_ds) {
        *warnings << "warning: trace " << tr.id << " is shorter than the "
                  << "down-sampling rate; padding to one feature position\n";
      }
  }

  std::vector<Tensor> features;
  features.reserve(data.size());
  for (const MultiTabTrace& tr : data)
    features.push_back(model.extractor.forward(model.normalize_input(tr.bursts), nullptr));

  ParamRefs trainable = model.trainable_params();
  Rng batch_rng = Rng::derive(cfg.seed, 0xBA7C4ULL);

  if (loss_log) *loss_log << "iteration,loss,cls,reg\n";
  for (int iter = 0; iter < cfg.iters; ++iter) {
    std::vector<const MultiTabTrace*> batch;
    std::vector<const Tensor*> batch_features;
    for (int b = 0; b < cfg.batch; ++b) {
      const std::size_t idx = batch_rng.uniform_int(data.size());
      batch.push_back(&data[idx]);
      batch_features.push_back(&features[idx]);
    }
    zero_grads(trainable);
    const LossBreakdown bd = total_loss(batch, model, loss_cfg, false, &batch_features);
    clip_gradients(trainable, cfg.clip_norm);
    sgd_step(trainable, cfg.lr);
    if (loss_log)
      *loss_log << iter << "," << bd.total << "," << bd.cls << "," << bd.reg << "\n";
  }
}

}  // namespace wfd
