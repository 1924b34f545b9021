#pragma once

#include <fstream>
#include <string>

#include "json.hpp"
#include "wfd/detector.hpp"
#include "wfd/nn.hpp"

namespace wfd {

inline constexpr int kCheckpointVersion = 1;

// Checkpoint layout: {"version":1, "config":{...},
// "tensors":{name:{"shape":[...],"data":[...]}}}.
inline nlohmann::json checkpoint_to_json(const nlohmann::json& config,
                                         const ParamRefs& params) {
  nlohmann::json doc;
  doc["version"] = kCheckpointVersion;
  doc["config"] = config;
  nlohmann::json tensors = nlohmann::json::object();
  for (const auto& [name, p] : params) {
    nlohmann::json t;
    t["shape"] = p->value.shape;
    t["data"] = p->value.data;
    tensors[name] = std::move(t);
  }
  doc["tensors"] = std::move(tensors);
  return doc;
}

inline void save_checkpoint(const std::string& path, const nlohmann::json& config,
                            const ParamRefs& params) {
  std::ofstream out(path);
  if (!out) throw checkpoint_error("checkpoint: cannot write " + path);
  out << checkpoint_to_json(config, params).dump() << "\n";
}

inline nlohmann::json load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw checkpoint_error("checkpoint: cannot read " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw checkpoint_error(std::string("checkpoint: parse failure: ") + e.what());
  }
  if (!doc.contains("version") || !doc["version"].is_number_integer() ||
      doc["version"].get<int>() != kCheckpointVersion)
    throw checkpoint_error("checkpoint version mismatch in " + path +
                           " (expected " + std::to_string(kCheckpointVersion) + ")");
  if (!doc.contains("config") || !doc.contains("tensors"))
    throw checkpoint_error("checkpoint: missing config or tensors in " + path);
  return doc;
}

// Fills the given parameters from a checkpoint document, by name, with shape
// checks. Missing or mismatched tensors are checkpoint errors.
inline void load_checkpoint_tensors(const nlohmann::json& doc, const ParamRefs& params) {
  const nlohmann::json& tensors = doc.at("tensors");
  for (const auto& [name, p] : params) {
    if (!tensors.contains(name))
      throw checkpoint_error("checkpoint: missing tensor '" + name + "'");
    const nlohmann::json& t = tensors.at(name);
    try {
      const auto shape = t.at("shape").get<std::vector<std::size_t>>();
      const auto data = t.at("data").get<std::vector<double>>();
      if (shape != p->value.shape || data.size() != p->value.data.size())
        throw checkpoint_error("checkpoint: shape mismatch for tensor '" + name + "'");
      p->value.data = data;
    } catch (const nlohmann::json::exception& e) {
      throw checkpoint_error("checkpoint: bad tensor '" + name + "': " + e.what());
    }
  }
}

inline nlohmann::json detector_config_to_json(const DetectorConfig& cfg,
                                              const AnchorSet& anchors) {
  nlohmann::json j;
  j["num_classes"] = cfg.num_classes;
  j["num_anchors"] = cfg.num_anchors;
  j["width"] = cfg.width;
  j["r_ds"] = cfg.r_ds;
  j["dilation_rates"] = cfg.dilation_rates;
  j["norm_divisor"] = cfg.norm_divisor;
  j["norm_clamp"] = cfg.norm_clamp;
  j["center_scale"] = cfg.center_scale;
  j["anchor_lengths"] = anchors.lengths;
  return j;
}

inline void save_detector(const std::string& path, DetectorModel& model) {
  save_checkpoint(path, detector_config_to_json(model.cfg, model.anchors),
                  model.params());
}

inline DetectorModel load_detector(const std::string& path) {
  const nlohmann::json doc = load_checkpoint(path);
  const nlohmann::json& c = doc.at("config");
  DetectorConfig cfg;
  AnchorSet anchors;
  try {
    cfg.num_classes = c.at("num_classes").get<int>();
    cfg.num_anchors = c.at("num_anchors").get<int>();
    cfg.width = c.at("width").get<int>();
    cfg.r_ds = c.at("r_ds").get<int>();
    cfg.dilation_rates = c.at("dilation_rates").get<std::vector<int>>();
    cfg.norm_divisor = c.at("norm_divisor").get<double>();
    cfg.norm_clamp = c.at("norm_clamp").get<double>();
    cfg.center_scale = c.at("center_scale").get<double>();
    anchors.lengths = c.at("anchor_lengths").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw checkpoint_error(std::string("checkpoint: bad detector config: ") + e.what());
  }
  DetectorModel model(cfg, anchors);
  load_checkpoint_tensors(doc, model.params());
  return model;
}

inline nlohmann::json extractor_config_to_json(const ExtractorConfig& cfg,
                                               double norm_divisor, double norm_clamp) {
  nlohmann::json j;
  j["arch"] = "extractor";
  j["width"] = cfg.width;
  j["r_ds"] = cfg.r_ds;
  j["norm_divisor"] = norm_divisor;
  j["norm_clamp"] = norm_clamp;
  return j;
}

inline void save_extractor(const std::string& path, Extractor& fe,
                           double norm_divisor, double norm_clamp) {
  save_checkpoint(path, extractor_config_to_json(fe.cfg, norm_divisor, norm_clamp),
                  fe.params("fe"));
}

struct LoadedExtractor {
  Extractor fe;
  double norm_divisor = 50.0;
  double norm_clamp = 20.0;
};

inline LoadedExtractor load_extractor(const std::string& path) {
  const nlohmann::json doc = load_checkpoint(path);
  const nlohmann::json& c = doc.at("config");
  LoadedExtractor out;
  ExtractorConfig cfg;
  try {
    cfg.width = c.at("width").get<int>();
    cfg.r_ds = c.at("r_ds").get<int>();
    out.norm_divisor = c.at("norm_divisor").get<double>();
    out.norm_clamp = c.at("norm_clamp").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw checkpoint_error(std::string("checkpoint: bad extractor config: ") + e.what());
  }
  out.fe = Extractor(cfg);
  load_checkpoint_tensors(doc, out.fe.params("fe"));
  return out;
}

}  // namespace wfd
