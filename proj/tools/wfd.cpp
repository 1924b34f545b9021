// wfd: one binary for the whole pipeline.
//   synth    generate a seeded synthetic multi-tab dataset
//   pretrain stage-1 feature-extractor training on single-tab traces
//   train    stage-2 detector training with a frozen extractor
//   detect   run the detector over a dataset and write detections
//   eval     score detections against ground truth
//   bench    measure attack throughput in MBps

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "wfd/checkpoint.hpp"
#include "wfd/dataset.hpp"
#include "wfd/detector.hpp"
#include "wfd/eval.hpp"
#include "wfd/generate.hpp"
#include "wfd/parallel.hpp"
#include "wfd/train.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitCheckpoint = 4;

void write_run_config(const std::string& path, const nlohmann::json& cfg) {
  std::ofstream out(path);
  if (!out) throw wfd::data_error("cannot write run config " + path);
  out << cfg.dump(2) << "\n";
}

std::vector<int> parse_tabs(const std::string& spec) {
  std::vector<int> tabs;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    tabs.push_back(std::stoi(item));
  }
  if (tabs.empty()) throw wfd::config_error("synth: empty tab list");
  return tabs;
}

int max_class_label(const std::vector<wfd::MultiTabTrace>& traces) {
  int w = 0;
  for (const wfd::MultiTabTrace& tr : traces)
    for (const wfd::GroundTruth& gt : tr.gts) w = std::max(w, gt.w);
  return w;
}

int manifest_classes(const std::string& data_dir) {
  std::ifstream in(data_dir + "/manifest.json");
  if (!in) return 0;
  try {
    nlohmann::json m;
    in >> m;
    return m.value("classes", 0);
  } catch (...) {
    return 0;
  }
}

struct DetectStats {
  long long cells = 0;
  double seconds = 0.0;
  std::size_t detections = 0;
};

DetectStats run_detect(const wfd::DetectorModel& model,
                       const std::vector<wfd::MultiTabTrace>& traces,
                       double score_thresh, double nms_thresh, int threads,
                       std::vector<wfd::Detection>* out) {
  std::vector<std::vector<wfd::CandidateTrace>> per_trace(traces.size());
  const auto t0 = std::chrono::steady_clock::now();
  wfd::parallel_for(traces.size(), threads, [&](std::size_t i) {
    const wfd::DetectorModel::Output o = model.forward(traces[i].bursts);
    const auto anchors = model.anchor_segments(o.m);
    const auto proposals =
        wfd::decode_proposals(anchors, o.offsets, o.scores, model.cfg.center_scale);
    per_trace[i] = wfd::nms_filter(proposals, score_thresh, nms_thresh);
  });
  const auto t1 = std::chrono::steady_clock::now();

  DetectStats stats;
  stats.seconds = std::chrono::duration<double>(t1 - t0).count();
  for (std::size_t i = 0; i < traces.size(); ++i) {
    stats.cells += traces[i].cells_total;
    for (const wfd::CandidateTrace& c : per_trace[i]) {
      ++stats.detections;
      if (out) out->push_back(wfd::Detection{traces[i].id, c});
    }
  }
  return stats;
}

nlohmann::json report_to_json(const wfd::EvalReport& rep) {
  nlohmann::json j;
  j["lambda_grid"] = rep.lambda_grid;
  nlohmann::json ap = nlohmann::json::object();
  for (std::size_t l = 0; l < rep.lambda_grid.size(); ++l) {
    char key[16];
    std::snprintf(key, sizeof(key), "%.2f", rep.lambda_grid[l]);
    nlohmann::json per_class = nlohmann::json::object();
    for (std::size_t c = 0; c < rep.ap[l].size(); ++c) {
      if (rep.ap[l][c] >= 0.0)
        per_class[std::to_string(c + 1)] = rep.ap[l][c];
      else
        per_class[std::to_string(c + 1)] = nullptr;  // no ground truths
    }
    ap[key] = std::move(per_class);
  }
  j["ap"] = std::move(ap);
  nlohmann::json ml = nlohmann::json::object();
  for (std::size_t l = 0; l < rep.lambda_grid.size(); ++l) {
    char key[16];
    std::snprintf(key, sizeof(key), "%.2f", rep.lambda_grid[l]);
    ml[key] = rep.map_lambda[l];
  }
  j["map_lambda"] = std::move(ml);
  j["map"] = rep.map;
  j["map50"] = rep.map50;
  j["map75"] = rep.map75;
  j["precision"] = rep.precision_at;
  j["recall"] = rep.recall_at;
  j["counts"] = {{"tp", rep.tp}, {"fp", rep.fp}, {"fn", rep.fn}};
  if (rep.throughput_mbps >= 0.0) {
    j["throughput_mbps"] = rep.throughput_mbps;
    j["cells_processed"] = rep.cells_processed;
  }
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-tab trace detection pipeline"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read defaults from an INI config file; flags win");

  // --- synth ---
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  int s_classes = 5;
  double s_base_rate = 10.0;
  std::string s_tabs = "2";
  int s_count = 100;
  std::uint64_t s_seed = 0;
  long long s_sites_seed = -1;
  std::string s_out;
  double s_test_frac = 0.25;
  double s_separability = 1.0;
  int s_cells_min = 300, s_cells_max = 3000;
  bool s_free_overlap = false;
  int s_threads = 1;
  synth->add_option("--classes", s_classes, "Monitored class count")->capture_default_str();
  synth->add_option("--base-rate", s_base_rate, "Unmonitored visits per monitored visit")
      ->capture_default_str();
  synth->add_option("--tabs", s_tabs, "Comma-separated tab counts cycled across traces")
      ->capture_default_str();
  synth->add_option("--count", s_count, "Training traces to generate")->capture_default_str();
  synth->add_option("--seed", s_seed, "Root seed")->capture_default_str();
  synth->add_option("--sites-seed", s_sites_seed,
                    "Monitored-site universe seed (default: --seed)");
  synth->add_option("--out", s_out, "Output directory")->required();
  synth->add_option("--test-frac", s_test_frac, "Held-out traces as a fraction of --count")
      ->capture_default_str();
  synth->add_option("--separability", s_separability, "Spread between class profiles")
      ->capture_default_str();
  synth->add_option("--cells-min", s_cells_min, "Minimum cells per single-tab trace")
      ->capture_default_str();
  synth->add_option("--cells-max", s_cells_max, "Maximum cells per single-tab trace")
      ->capture_default_str();
  synth->add_flag("--free-overlap", s_free_overlap,
                  "Allow overlap fractions outside the 0.10..0.60 grid");
  synth->add_option("--threads", s_threads, "Worker threads")->capture_default_str();

  // --- pretrain ---
  auto* pretrain = app.add_subcommand("pretrain", "Stage-1 extractor training");
  std::string p_data, p_out;
  int p_epochs = 20, p_batch = 8, p_width = 16, p_rds = 16;
  double p_lr = 0.05, p_norm_div = 50.0, p_norm_clamp = 20.0;
  std::uint64_t p_seed = 0;
  pretrain->add_option("--data", p_data, "Dataset directory (uses train.jsonl)")->required();
  pretrain->add_option("--out", p_out, "Extractor checkpoint path")->required();
  pretrain->add_option("--epochs", p_epochs, "Training epochs")->capture_default_str();
  pretrain->add_option("--batch", p_batch, "Batch size")->capture_default_str();
  pretrain->add_option("--lr", p_lr, "Learning rate")->capture_default_str();
  pretrain->add_option("--seed", p_seed, "Seed")->capture_default_str();
  pretrain->add_option("--width", p_width, "Extractor base width")->capture_default_str();
  pretrain->add_option("--rds", p_rds, "Temporal down-sampling rate")->capture_default_str();
  pretrain->add_option("--norm-div", p_norm_div, "Burst length normalization divisor")
      ->capture_default_str();
  pretrain->add_option("--norm-clamp", p_norm_clamp, "Normalized input clamp")
      ->capture_default_str();

  // --- train ---
  auto* train = app.add_subcommand("train", "Stage-2 detector training");
  std::string t_data, t_pretrained, t_out, t_loss_log;
  int t_iters = 2000, t_batch = 8, t_anchors = 8, t_classes = 0;
  double t_lr = 0.12, t_center_scale = 1.0, t_clip = 20.0;
  std::uint64_t t_seed = 0;
  double t_alpha = 0.25, t_gamma = 2.0, t_tau_pos = 0.3, t_tau_neg = 0.1;
  int t_k_positives = 9;
  train->add_option("--data", t_data, "Dataset directory (uses train.jsonl)")->required();
  train->add_option("--pretrained", t_pretrained, "Extractor checkpoint")->required();
  train->add_option("--out", t_out, "Model checkpoint path")->required();
  train->add_option("--iters", t_iters, "SGD iterations")->capture_default_str();
  train->add_option("--lr", t_lr, "Learning rate")->capture_default_str();
  train->add_option("--batch", t_batch, "Batch size")->capture_default_str();
  train->add_option("--seed", t_seed, "Seed")->capture_default_str();
  train->add_option("--anchors", t_anchors, "Anchor lengths (k-means clusters)")
      ->capture_default_str();
  train->add_option("--classes", t_classes,
                    "Monitored class count (default: from manifest or data)");
  train->add_option("--center-scale", t_center_scale, "Center offset scale in decode")
      ->capture_default_str();
  train->add_option("--clip-norm", t_clip, "Gradient norm clip, 0 disables")
      ->capture_default_str();
  train->add_option("--alpha", t_alpha, "Focal loss alpha")->capture_default_str();
  train->add_option("--gamma", t_gamma, "Focal loss gamma")->capture_default_str();
  train->add_option("--k-positives", t_k_positives, "Positives kept per ground truth")
      ->capture_default_str();
  train->add_option("--tau-pos", t_tau_pos, "Minimum IoUT for positives")->capture_default_str();
  train->add_option("--tau-neg", t_tau_neg, "Maximum IoUT for negatives")->capture_default_str();
  train->add_option("--loss-log", t_loss_log, "CSV loss log path");

  // --- detect ---
  auto* detect = app.add_subcommand("detect", "Run detection over a dataset");
  std::string d_model, d_input, d_out;
  double d_score_thresh = 0.05, d_nms_thresh = 0.5;
  int d_threads = 1;
  detect->add_option("--model", d_model, "Model checkpoint")->required();
  detect->add_option("--input", d_input, "Dataset file (jsonl)")->required();
  detect->add_option("--out", d_out, "Detections output (jsonl)")->required();
  detect->add_option("--score-thresh", d_score_thresh, "Minimum best-class score")
      ->capture_default_str();
  detect->add_option("--nms-thresh", d_nms_thresh, "IoUT suppression threshold")
      ->capture_default_str();
  detect->add_option("--threads", d_threads, "Worker threads")->capture_default_str();

  // --- eval ---
  auto* eval = app.add_subcommand("eval", "Score detections against ground truth");
  std::string e_pred, e_gt, e_out;
  double e_lambda_min = 0.5, e_lambda_max = 0.9, e_lambda_step = 0.05, e_tau = 0.5;
  int e_classes = 0;
  eval->add_option("--pred", e_pred, "Detections file (jsonl)")->required();
  eval->add_option("--gt", e_gt, "Ground-truth dataset file (jsonl)")->required();
  eval->add_option("--out", e_out, "Report output (json)")->required();
  eval->add_option("--lambda-min", e_lambda_min, "IoUT grid start")->capture_default_str();
  eval->add_option("--lambda-max", e_lambda_max, "IoUT grid end")->capture_default_str();
  eval->add_option("--lambda-step", e_lambda_step, "IoUT grid step")->capture_default_str();
  eval->add_option("--tau", e_tau, "Operating score threshold for P/R")->capture_default_str();
  eval->add_option("--classes", e_classes, "Monitored class count (default: from data)");

  // --- bench ---
  auto* bench = app.add_subcommand("bench", "Measure attack throughput");
  std::string b_model, b_input;
  int b_threads = 1, b_repeat = 1;
  bench->add_option("--model", b_model, "Model checkpoint")->required();
  bench->add_option("--input", b_input, "Dataset file (jsonl)")->required();
  bench->add_option("--threads", b_threads, "Worker threads")->capture_default_str();
  bench->add_option("--repeat", b_repeat, "Passes over the input")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      wfd::SynthConfig cfg;
      cfg.classes = s_classes;
      cfg.base_rate = s_base_rate;
      cfg.tabs = parse_tabs(s_tabs);
      cfg.count = s_count;
      cfg.test_fraction = s_test_frac;
      cfg.seed = s_seed;
      cfg.sites_seed = s_sites_seed;
      cfg.separability = s_separability;
      cfg.cells_min = s_cells_min;
      cfg.cells_max = s_cells_max;
      cfg.free_overlap = s_free_overlap;
      cfg.threads = s_threads;
      const wfd::DatasetSummary ds = wfd::gen_dataset(cfg);
      wfd::write_dataset_dir(s_out, ds);
      nlohmann::json echo = ds.manifest;
      echo.erase("train");
      echo.erase("test");
      echo["command"] = "synth";
      write_run_config(s_out + "/run_config.json", echo);
      std::cout << "wrote " << ds.train.size() << " train and " << ds.test.size()
                << " test traces to " << s_out << "\n";
    } else if (*pretrain) {
      std::ifstream mf(p_data + "/manifest.json");
      if (mf) {
        nlohmann::json m;
        try {
          mf >> m;
          if (m.contains("tabs"))
            for (int l : m["tabs"].get<std::vector<int>>())
              if (l != 1)
                throw wfd::data_error(
                    "pretrain: dataset is not single-tab (tabs != 1 in manifest)");
        } catch (const nlohmann::json::exception&) {
        }
      }
      const auto data = wfd::read_dataset(p_data + "/train.jsonl");
      wfd::ExtractorConfig fe_cfg{p_width, p_rds};
      wfd::Extractor fe(fe_cfg);
      wfd::Rng init_rng = wfd::Rng::derive(p_seed, 0xFEULL);
      fe.init(init_rng);
      wfd::TrainConfig cfg;
      cfg.lr = p_lr;
      cfg.batch = p_batch;
      cfg.seed = p_seed;
      cfg.stage1_epochs = p_epochs;
      const wfd::PretrainResult res =
          wfd::pretrain_extractor(data, fe, cfg, p_norm_div, p_norm_clamp, &std::cout);
      wfd::save_extractor(p_out, fe, p_norm_div, p_norm_clamp);
      nlohmann::json echo = {
          {"command", "pretrain"}, {"data", p_data},   {"out", p_out},
          {"epochs", p_epochs},    {"batch", p_batch}, {"lr", p_lr},
          {"seed", p_seed},        {"width", p_width}, {"rds", p_rds},
          {"norm_div", p_norm_div}, {"norm_clamp", p_norm_clamp},
          {"final_accuracy", res.final_accuracy}, {"classes", res.classes}};
      write_run_config(p_out + ".run.json", echo);
      std::cout << "pretrained extractor on " << data.size() << " traces ("
                << res.classes << " classes, accuracy " << res.final_accuracy
                << ") -> " << p_out << "\n";
    } else if (*train) {
      const auto data = wfd::read_dataset(t_data + "/train.jsonl");
      if (data.empty()) throw wfd::data_error("train: empty dataset");
      const wfd::LoadedExtractor pre = wfd::load_extractor(t_pretrained);

      int classes = t_classes;
      if (classes <= 0) classes = manifest_classes(t_data);
      if (classes <= 0) classes = max_class_label(data);
      if (classes <= 0) throw wfd::data_error("train: no monitored classes in data");

      std::vector<double> gt_lengths;
      for (const wfd::MultiTabTrace& tr : data)
        for (const wfd::GroundTruth& gt : tr.gts) gt_lengths.push_back(gt.span.l);
      if (gt_lengths.empty()) throw wfd::data_error("train: no ground truths in data");
      const wfd::AnchorSet anchors =
          wfd::kmeans_anchor_lengths(gt_lengths, t_anchors, t_seed);

      wfd::DetectorConfig cfg;
      cfg.num_classes = classes;
      cfg.num_anchors = t_anchors;
      cfg.width = pre.fe.cfg.width;
      cfg.r_ds = pre.fe.cfg.r_ds;
      cfg.norm_divisor = pre.norm_divisor;
      cfg.norm_clamp = pre.norm_clamp;
      cfg.center_scale = t_center_scale;
      wfd::DetectorModel model(cfg, anchors);
      model.init(t_seed);
      // Adopt the pretrained extractor weights; they stay frozen below.
      {
        const nlohmann::json doc = wfd::load_checkpoint(t_pretrained);
        wfd::load_checkpoint_tensors(doc, model.extractor.params("fe"));
      }

      wfd::TrainConfig tcfg;
      tcfg.lr = t_lr;
      tcfg.batch = t_batch;
      tcfg.iters = t_iters;
      tcfg.seed = t_seed;
      tcfg.clip_norm = t_clip;
      wfd::LossConfig lcfg;
      lcfg.alpha = t_alpha;
      lcfg.gamma = t_gamma;
      lcfg.k_positives = t_k_positives;
      lcfg.tau_pos = t_tau_pos;
      lcfg.tau_neg = t_tau_neg;

      std::ofstream loss_log;
      if (!t_loss_log.empty()) {
        loss_log.open(t_loss_log);
        if (!loss_log) throw wfd::data_error("train: cannot write loss log " + t_loss_log);
      }
      wfd::train_detector(data, model, tcfg, lcfg,
                          loss_log.is_open() ? &loss_log : nullptr, &std::cerr);
      wfd::save_detector(t_out, model);
      nlohmann::json echo = {{"command", "train"},
                             {"data", t_data},
                             {"pretrained", t_pretrained},
                             {"out", t_out},
                             {"iters", t_iters},
                             {"lr", t_lr},
                             {"batch", t_batch},
                             {"seed", t_seed},
                             {"anchors", t_anchors},
                             {"classes", classes},
                             {"center_scale", t_center_scale},
                             {"clip_norm", t_clip},
                             {"alpha", t_alpha},
                             {"gamma", t_gamma},
                             {"k_positives", t_k_positives},
                             {"tau_pos", t_tau_pos},
                             {"tau_neg", t_tau_neg},
                             {"anchor_lengths", anchors.lengths}};
      write_run_config(t_out + ".run.json", echo);
      std::cout << "trained detector on " << data.size() << " traces -> " << t_out << "\n";
    } else if (*detect) {
      const wfd::DetectorModel model = wfd::load_detector(d_model);
      const auto traces = wfd::read_dataset(d_input);
      std::vector<wfd::Detection> dets;
      const DetectStats stats =
          run_detect(model, traces, d_score_thresh, d_nms_thresh, d_threads, &dets);
      wfd::write_detections(d_out, dets);
      const double mbps = stats.seconds > 0.0
                              ? wfd::throughput_mbps(stats.cells, stats.seconds)
                              : 0.0;
      nlohmann::json echo = {{"command", "detect"},
                             {"model", d_model},
                             {"input", d_input},
                             {"out", d_out},
                             {"score_thresh", d_score_thresh},
                             {"nms_thresh", d_nms_thresh},
                             {"threads", d_threads},
                             {"cells_processed", stats.cells},
                             {"wall_seconds", stats.seconds},
                             {"mbps", mbps}};
      write_run_config(d_out + ".run.json", echo);
      std::cout << "wrote " << stats.detections << " detections for " << traces.size()
                << " traces; " << wfd::megabytes(stats.cells) << " MB in "
                << stats.seconds << " s (" << mbps << " MBps)\n";
    } else if (*eval) {
      const auto gt_traces = wfd::read_dataset(e_gt);
      const auto dets = wfd::read_detections(e_pred);
      const wfd::EvalInstance inst = wfd::make_eval_instance(gt_traces, dets);
      wfd::EvalConfig cfg;
      cfg.class_count = e_classes > 0 ? e_classes : max_class_label(gt_traces);
      for (double l = e_lambda_min; l <= e_lambda_max + 1e-9; l += e_lambda_step)
        cfg.lambda_grid.push_back(l);
      cfg.tau_operating = e_tau;
      const wfd::EvalReport rep = wfd::map_report(inst, cfg);
      std::ofstream out(e_out);
      if (!out) throw wfd::data_error("eval: cannot write " + e_out);
      out << report_to_json(rep).dump(2) << "\n";
      nlohmann::json echo = {{"command", "eval"},   {"pred", e_pred},
                             {"gt", e_gt},          {"out", e_out},
                             {"classes", cfg.class_count}, {"tau", e_tau},
                             {"lambda_min", e_lambda_min}, {"lambda_max", e_lambda_max},
                             {"lambda_step", e_lambda_step}};
      write_run_config(e_out + ".run.json", echo);
      std::cout << "mAP " << rep.map << "  mAP@.50 " << rep.map50 << "  mAP@.75 "
                << rep.map75 << "  precision " << rep.precision_at << "  recall "
                << rep.recall_at << "\n";
    } else if (*bench) {
      const wfd::DetectorModel model = wfd::load_detector(b_model);
      const auto traces = wfd::read_dataset(b_input);
      long long cells = 0;
      double seconds = 0.0;
      for (int r = 0; r < b_repeat; ++r) {
        const DetectStats stats = run_detect(model, traces, 0.05, 0.5, b_threads, nullptr);
        cells += stats.cells;
        seconds += stats.seconds;
      }
      const double mb = wfd::megabytes(cells);
      const double mbps = seconds > 0.0 ? wfd::throughput_mbps(cells, seconds) : 0.0;
      std::cout << "processed " << mb << " MB (" << cells << " cells) in " << seconds
                << " s\n"
                << "throughput " << mbps << " MBps\n";
    }
  } catch (const wfd::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const wfd::checkpoint_error& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const wfd::data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}
