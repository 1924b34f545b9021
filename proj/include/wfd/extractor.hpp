#pragma once

#include <string>
#include <vector>

#include "wfd/nn.hpp"

namespace wfd {

// Residual 1D feature extractor: a k7/stride-2 stem followed by four stages
// of two residual blocks. Stage widths are [w, 2w, 4w, 4w]; the stem plus
// strided stages realize the configured down-sampling rate (a power of two,
// up to 32).
struct ExtractorConfig {
  int width = 16;
  int r_ds = 16;

  int out_channels() const { return 4 * width; }

  void validate() const {
    if (width < 2) throw config_error("extractor: width must be >= 2");
    int r = r_ds;
    if (r < 2 || r > 32) throw config_error("extractor: r_ds must be in [2, 32]");
    while (r % 2 == 0) r /= 2;
    if (r != 1) throw config_error("extractor: r_ds must be a power of two");
  }
};

struct Extractor {
  ExtractorConfig cfg;
  Conv1d stem;
  std::vector<BasicBlock> blocks;

  Extractor() = default;
  explicit Extractor(const ExtractorConfig& c) : cfg(c) {
    cfg.validate();
    const int w = cfg.width;
    const int widths[4] = {w, 2 * w, 4 * w, 4 * w};
    int halvings = 0;
    for (int r = cfg.r_ds; r > 1; r /= 2) ++halvings;
    // Stem takes the first halving; the rest go to the last stages.
    stem = Conv1d(1, w, 7, 2, 1, 3);
    int in_ch = w;
    for (int stage = 0; stage < 4; ++stage) {
      const int remaining_after = 3 - stage;
      const int stride = (halvings - 1 > remaining_after) ? 2 : 1;
      if (stride == 2) --halvings;
      blocks.emplace_back(in_ch, widths[stage], stride);
      blocks.emplace_back(widths[stage], widths[stage], 1);
      in_ch = widths[stage];
    }
  }

  void init(Rng& rng) {
    stem.init(rng);
    for (BasicBlock& b : blocks) b.init(rng);
  }

  ParamRefs params(const std::string& prefix = "fe") {
    ParamRefs out = stem.params(prefix + ".stem");
    for (std::size_t i = 0; i < blocks.size(); ++i)
      for (auto& p : blocks[i].params(prefix + ".b" + std::to_string(i)))
        out.push_back(p);
    return out;
  }

  struct Cache {
    Tensor x_pad, a0;
    std::vector<BasicBlock::Cache> blocks;
    int raw_len = 0;
    int m = 0;
    int full_m = 0;
  };

  // Feature-sequence length for a raw input length (at least 1 position).
  int feature_len(int raw_len) const {
    const int m = raw_len / cfg.r_ds;
    return m < 1 ? 1 : m;
  }

  // Input [1, L] of normalized signed burst lengths. The sequence is
  // zero-padded up to a multiple of r_ds and the feature sequence trimmed to
  // m = floor(L / r_ds) positions (min 1), so each feature position owns a
  // full input stride.
  Tensor forward(const Tensor& x, Cache* cache) const {
    if (x.rank() != 2 || x.dim(0) != 1 || x.dim(1) == 0)
      throw data_error("extractor: input must be a nonempty [1, L] tensor");
    const int L = static_cast<int>(x.dim(1));
    const int m = feature_len(L);
    const int padded = ((L + cfg.r_ds - 1) / cfg.r_ds) * cfg.r_ds;

    Tensor xp({1, static_cast<std::size_t>(padded)});
    for (int i = 0; i < L; ++i) xp.data[i] = x.data[i];

    Tensor a0 = relu(stem.forward(xp));
    Tensor h = a0;
    if (cache) {
      cache->x_pad = xp;
      cache->a0 = a0;
      cache->blocks.assign(blocks.size(), {});
      cache->raw_len = L;
      cache->m = m;
    }
    for (std::size_t i = 0; i < blocks.size(); ++i)
      h = blocks[i].forward(h, cache ? &cache->blocks[i] : nullptr);

    const int full_m = static_cast<int>(h.dim(1));
    if (cache) cache->full_m = full_m;
    if (full_m == m) return h;
    // Drop the ragged tail position produced by padding.
    Tensor trimmed({h.dim(0), static_cast<std::size_t>(m)});
    for (std::size_t c = 0; c < h.dim(0); ++c)
      for (int i = 0; i < m; ++i) trimmed.at(c, i) = h.at(c, i);
    return trimmed;
  }

  // Returns the gradient w.r.t. the raw [1, L] input.
  Tensor backward(const Cache& cache, const Tensor& g_features) {
    Tensor g({static_cast<std::size_t>(4 * cfg.width),
              static_cast<std::size_t>(cache.full_m)});
    for (std::size_t c = 0; c < g.dim(0); ++c)
      for (int i = 0; i < cache.m; ++i) g.at(c, i) = g_features.at(c, i);

    for (std::size_t i = blocks.size(); i-- > 0;)
      g = blocks[i].backward(cache.blocks[i], g);

    Tensor gpre(cache.a0.shape);
    relu_backward(cache.a0, g, gpre);
    Tensor gx_pad(cache.x_pad.shape);
    stem.backward(cache.x_pad, gpre, &gx_pad);

    Tensor gx({1, static_cast<std::size_t>(cache.raw_len)});
    for (int i = 0; i < cache.raw_len; ++i) gx.data[i] = gx_pad.data[i];
    return gx;
  }
};

}  // namespace wfd
