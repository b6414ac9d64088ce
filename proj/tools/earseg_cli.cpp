// earseg — command-line front end for the ear-segmentation pipeline.
//
// Subcommands: synth, split, train, infer, eval, report. Every run is
// deterministic given its configuration; each output directory receives a
// config_used.txt echo of the effective settings.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "earseg/config.hpp"
#include "earseg/dataset.hpp"
#include "earseg/dataset_io.hpp"
#include "earseg/evaluation.hpp"
#include "earseg/image_io.hpp"
#include "earseg/network.hpp"
#include "earseg/params_io.hpp"
#include "earseg/postprocess.hpp"
#include "earseg/training.hpp"

namespace fs = std::filesystem;
using namespace earseg;

namespace {

// Effective configuration: defaults, overlaid by a config file, overlaid by
// command-line flags. Every value actually consulted is recorded so the
// echo reflects what the run really used.
class Options {
 public:
  void load_file(const std::string& path) { file_ = KeyValueConfig::from_file(path); }
  void override_key(const std::string& key, const std::string& value) { file_.set(key, value); }

  std::string get(const std::string& key, const std::string& fallback) {
    const std::string v = file_.get_string(key, fallback);
    used_[key] = v;
    return v;
  }
  double get_double(const std::string& key, double fallback) {
    const double v = file_.get_double(key, fallback);
    used_[key] = format(v);
    return v;
  }
  long get_long(const std::string& key, long fallback) {
    const long v = file_.get_long(key, fallback);
    used_[key] = std::to_string(v);
    return v;
  }
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
    const auto v = file_.get_u64(key, fallback);
    used_[key] = std::to_string(v);
    return v;
  }
  bool get_bool(const std::string& key, bool fallback) {
    const bool v = file_.get_bool(key, fallback);
    used_[key] = v ? "true" : "false";
    return v;
  }

  void require_known_keys() const { file_.require_known_keys(kKnownKeys); }

  void echo_into(const std::string& dir) const {
    std::ofstream out(fs::path(dir) / "config_used.txt", std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write config echo under '" + dir + "'");
    for (const auto& [k, v] : used_) out << k << "=" << v << "\n";
  }

 private:
  static std::string format(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
  }

  static const std::set<std::string> kKnownKeys;

  KeyValueConfig file_;
  std::map<std::string, std::string> used_;
};

const std::set<std::string> Options::kKnownKeys = {
    "manifest",    "covariates",     "split",          "out",        "weights",
    "width",       "height",         "scale",          "connectivity", "seed",
    "learning_rate", "momentum",     "weight_decay",   "max_iterations", "log_every",
    "batch_size",  "class_balancing", "count",         "ear_low",    "ear_high",
    "train_count", "bins",           "detect_metric",  "detect_threshold", "pred",
    "rects"};

// Wires a flag so that, when given, it overrides the config-file key.
void kv_flag(CLI::App* cmd, Options& opt, const std::string& flag, const std::string& key,
             const std::string& desc) {
  cmd->add_option(flag, desc)->each([&opt, key](const std::string& v) {
    opt.override_key(key, v);
  });
}

void add_config_flag(CLI::App* cmd, Options& opt) {
  cmd->add_option("--config", "key=value configuration file (flags override it)")
      ->each([&opt](const std::string& path) { opt.load_file(path); });
}

Connectivity parse_connectivity(long v) {
  if (v == 4) return Connectivity::Four;
  if (v == 8) return Connectivity::Eight;
  throw std::runtime_error("connectivity must be 4 or 8, got " + std::to_string(v));
}

std::string require_out_dir(Options& opt) {
  const std::string out = opt.get("out", "");
  if (out.empty()) throw std::runtime_error("an output directory is required (--out)");
  fs::create_directories(out);
  return out;
}

std::vector<SampleRecord> load_configured_dataset(Options& opt, bool need_split_file) {
  const std::string manifest = opt.get("manifest", "");
  if (manifest.empty() || !fs::exists(manifest)) {
    throw std::runtime_error("dataset not found ('" + manifest + "'): pass --manifest");
  }
  const std::string covariates = opt.get("covariates", "");
  std::string split = opt.get("split", "");
  if (!split.empty() && !fs::exists(split)) {
    if (need_split_file) throw std::runtime_error("split file not found ('" + split + "')");
    split.clear();
  }
  return load_dataset(manifest, covariates.empty() || !fs::exists(covariates) ? "" : covariates,
                      split);
}

// ---------------------------------------------------------------------------

int cmd_synth(Options& opt) {
  opt.require_known_keys();
  const std::string out = require_out_dir(opt);
  SynthConfig cfg;
  cfg.width = static_cast<int>(opt.get_long("width", cfg.width));
  cfg.height = static_cast<int>(opt.get_long("height", cfg.height));
  cfg.ear_fraction_low = opt.get_double("ear_low", cfg.ear_fraction_low);
  cfg.ear_fraction_high = opt.get_double("ear_high", cfg.ear_fraction_high);
  const long count = opt.get_long("count", 100);
  const std::uint64_t seed = opt.get_u64("seed", 42);

  auto records = generate_synthetic(static_cast<int>(count), cfg, seed);
  save_dataset(out, records);
  opt.echo_into(out);
  std::cout << "generated " << records.size() << " samples under " << out << "\n";
  return 0;
}

int cmd_split(Options& opt) {
  opt.require_known_keys();
  const std::string manifest = opt.get("manifest", "");
  if (manifest.empty() || !fs::exists(manifest)) {
    throw std::runtime_error("dataset not found ('" + manifest + "'): pass --manifest");
  }
  const auto entries = load_manifest_csv(manifest);
  std::vector<std::string> ids;
  for (const auto& e : entries) ids.push_back(e.id);

  const long fallback = static_cast<long>((ids.size() * 3) / 4);
  const long train_count = opt.get_long("train_count", fallback);
  const std::uint64_t seed = opt.get_u64("seed", 42);
  if (train_count < 0) throw std::runtime_error("train_count must be non-negative");
  const auto assignment = split_assignment(ids, static_cast<std::size_t>(train_count), seed);

  std::string out = opt.get("out", "");
  if (out.empty()) out = fs::path(manifest).parent_path().string();
  fs::create_directories(out);
  save_split_csv((fs::path(out) / "split.csv").string(), assignment);
  opt.echo_into(out);

  std::size_t train_n = 0;
  for (const auto& [id, s] : assignment) train_n += (s == "train");
  std::cout << "split " << ids.size() << " samples: " << train_n << " train, "
            << (ids.size() - train_n) << " test\n";
  return 0;
}

int cmd_train(Options& opt) {
  opt.require_known_keys();
  const std::string out = require_out_dir(opt);
  const int width = static_cast<int>(opt.get_long("width", kDefaultTargetWidth));
  const int height = static_cast<int>(opt.get_long("height", kDefaultTargetHeight));
  const double scale = opt.get_double("scale", 1.0);
  const std::uint64_t seed = opt.get_u64("seed", 42);

  TrainConfig cfg;
  cfg.learning_rate = opt.get_double("learning_rate", cfg.learning_rate);
  cfg.momentum = opt.get_double("momentum", cfg.momentum);
  cfg.weight_decay = opt.get_double("weight_decay", cfg.weight_decay);
  cfg.max_iterations = static_cast<int>(opt.get_long("max_iterations", cfg.max_iterations));
  cfg.log_every = static_cast<int>(opt.get_long("log_every", cfg.log_every));
  cfg.batch_size = static_cast<int>(opt.get_long("batch_size", cfg.batch_size));
  cfg.class_balancing = opt.get_bool("class_balancing", cfg.class_balancing);
  cfg.validate();

  auto records = load_configured_dataset(opt, false);
  std::vector<TrainSample<float>> samples;
  for (const auto& rec : records) {
    if (rec.split != "train") continue;
    const SampleRecord sized = resize_record(rec, width, height);
    samples.push_back({image_to_tensor<float>(sized.image), mask_to_tensor(sized.mask)});
  }
  if (samples.empty()) throw std::runtime_error("no training samples in the dataset");

  const NetworkSpec spec = build_default_spec(scale);
  NetworkParams<float> params = init_params<float>(spec, seed);

  std::ofstream log_csv(fs::path(out) / "train_log.csv", std::ios::trunc);
  if (!log_csv) throw std::runtime_error("cannot write train_log.csv under '" + out + "'");
  log_csv << "iteration,loss,accuracy\n";
  log_csv.precision(9);
  const TrainStats stats = train(spec, params, samples, cfg, seed,
                                 [&log_csv](const TrainLogRecord& rec) {
                                   log_csv << rec.iteration << "," << rec.loss << ","
                                           << rec.accuracy << "\n";
                                 });
  log_csv.flush();

  save_params((fs::path(out) / "weights.bin").string(), spec, params);
  opt.echo_into(out);
  std::cout << "trained " << cfg.max_iterations << " iterations on " << samples.size()
            << " samples (class weights " << stats.weights.background << "/" << stats.weights.ear
            << "); final loss " << stats.final_loss << "\n";
  return 0;
}

int cmd_infer(Options& opt, const std::vector<std::string>& inputs) {
  opt.require_known_keys();
  const std::string out = require_out_dir(opt);
  const std::string weights_path = opt.get("weights", "");
  if (weights_path.empty()) throw std::runtime_error("a weights file is required (--weights)");
  const int width = static_cast<int>(opt.get_long("width", kDefaultTargetWidth));
  const int height = static_cast<int>(opt.get_long("height", kDefaultTargetHeight));
  const double scale = opt.get_double("scale", 1.0);
  const Connectivity conn = parse_connectivity(opt.get_long("connectivity", 8));

  const NetworkSpec spec = build_default_spec(scale);
  NetworkParams<float> params = load_params<float>(weights_path, spec);

  struct Item {
    std::string id;
    ImageU8 image;
  };
  std::vector<Item> items;
  if (!inputs.empty()) {
    for (const auto& p : inputs) {
      items.push_back({fs::path(p).stem().string(), load_image_rgb(p)});
    }
  } else {
    for (const auto& rec : load_configured_dataset(opt, false)) {
      items.push_back({rec.id, rec.image});
    }
  }
  if (items.empty()) throw std::runtime_error("no input images given");

  for (const auto& item : items) {
    const ImageU8 sized = resize_bilinear(item.image, width, height);
    const Tensor<float> input = image_to_tensor<float>(sized);
    const Tensor<float> probs = forward(spec, params, input);
    const LabelMask raw = threshold_probabilities(probs);
    const LabelMask post = postprocess_mask(raw, conn);

    // Contract re-check before anything is written.
    const auto labeling = connected_components(post, conn);
    if (labeling.regions.size() > 2) {
      throw std::runtime_error("postprocessed mask for '" + item.id + "' has " +
                               std::to_string(labeling.regions.size()) + " components");
    }
    save_mask((fs::path(out) / (item.id + "_raw.png")).string(), raw);
    save_mask((fs::path(out) / (item.id + "_post.png")).string(), post);
  }
  opt.echo_into(out);
  std::cout << "wrote raw+postprocessed masks for " << items.size() << " images to " << out
            << "\n";
  return 0;
}

// id,left,top,width,height; ids may repeat (several detections per image).
std::map<std::string, std::vector<BoundingBox>> load_rects_csv(const std::string& path) {
  CsvTable table = load_csv(path);
  expect_header(table, {"id", "left", "top", "width", "height"});
  std::map<std::string, std::vector<BoundingBox>> out;
  for (const auto& row : table.rows) {
    BoundingBox box;
    box.left = static_cast<int>(parse_long(row.fields[1], path, row.line));
    box.top = static_cast<int>(parse_long(row.fields[2], path, row.line));
    box.width = static_cast<int>(parse_long(row.fields[3], path, row.line));
    box.height = static_cast<int>(parse_long(row.fields[4], path, row.line));
    if (box.width < 1 || box.height < 1) {
      throw std::runtime_error(path + ": line " + std::to_string(row.line) +
                               ": rectangle must have positive width and height");
    }
    out[row.fields[0]].push_back(box);
  }
  return out;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "id,accuracy,iou,precision,recall,overlap\n";
  out.precision(9);
  for (const auto& r : records) {
    out << csv_escape(r.id) << "," << r.accuracy << "," << r.iou << "," << r.precision << ","
        << r.recall << "," << r.overlap << "\n";
  }
}

void write_histograms_csv(const std::string& path, const AggregateReport& rep) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "metric,bin_low,bin_high,count\n";
  out.precision(9);
  for (const auto& [metric, hist] : rep.histograms) {
    for (int b = 0; b < hist.bins; ++b) {
      out << metric << "," << static_cast<double>(b) / hist.bins << ","
          << static_cast<double>(b + 1) / hist.bins << "," << hist.counts[b] << "\n";
    }
  }
}

void write_covariates_csv(const std::string& dir, const AggregateReport& rep) {
  std::ofstream summary(fs::path(dir) / "covariates_iou.csv", std::ios::trunc);
  std::ofstream values(fs::path(dir) / "covariates_iou_values.csv", std::ios::trunc);
  if (!summary || !values) throw std::runtime_error("cannot write covariate CSVs under '" + dir + "'");
  summary << "covariate,label,n,median,q1,q3,whisker_low,whisker_high\n";
  values << "covariate,label,iou\n";
  summary.precision(9);
  values.precision(9);
  for (const auto& [field, labels] : rep.covariate_iou) {
    for (const auto& [label, box] : labels) {
      summary << field << "," << csv_escape(label) << "," << box.values.size() << ","
              << box.median << "," << box.q1 << "," << box.q3 << "," << box.whisker_low << ","
              << box.whisker_high << "\n";
      for (double v : box.values) values << field << "," << csv_escape(label) << "," << v << "\n";
    }
  }
}

int cmd_eval(Options& opt) {
  opt.require_known_keys();
  const std::string out = require_out_dir(opt);
  const std::string pred_dir = opt.get("pred", "");
  const std::string rects_path = opt.get("rects", "");
  const Connectivity conn = parse_connectivity(opt.get_long("connectivity", 8));
  const int bins = static_cast<int>(opt.get_long("bins", 20));
  const std::string detect_metric = opt.get("detect_metric", "overlap");
  const double detect_threshold = opt.get_double("detect_threshold", 0.5);
  if (pred_dir.empty() == rects_path.empty()) {
    throw std::runtime_error("eval needs exactly one of --pred (mask directory) or --rects");
  }

  auto records = load_configured_dataset(opt, false);
  const bool have_split = [&records] {
    for (const auto& r : records) {
      if (r.split == "test") return true;
    }
    return false;
  }();

  std::map<std::string, Covariates> annotations;
  std::vector<MetricsRecord> metrics;
  std::vector<std::string> unmatched;

  for (const auto& rec : records) {
    if (have_split && rec.split != "test") continue;
    annotations[rec.id] = rec.covariates;
    if (!rects_path.empty()) continue;
    fs::path pred_file = fs::path(pred_dir) / (rec.id + "_post.png");
    if (!fs::exists(pred_file)) pred_file = fs::path(pred_dir) / (rec.id + ".png");
    if (!fs::exists(pred_file)) {
      unmatched.push_back(rec.id);
      continue;
    }
    const LabelMask pred = load_mask(pred_file.string());
    if (pred.width != rec.mask.width || pred.height != rec.mask.height) {
      throw std::runtime_error("sample '" + rec.id + "': prediction is " +
                               std::to_string(pred.width) + "x" + std::to_string(pred.height) +
                               " but ground truth is " + std::to_string(rec.mask.width) + "x" +
                               std::to_string(rec.mask.height));
    }
    metrics.push_back(compute_metrics(rec.id, rec.mask, pred));
  }

  if (!rects_path.empty()) {
    auto rect_map = load_rects_csv(rects_path);
    std::set<std::string> known;
    for (const auto& rec : records) {
      if (have_split && rec.split != "test") continue;
      known.insert(rec.id);
    }
    for (const auto& [id, boxes] : rect_map) {
      if (known.find(id) == known.end()) unmatched.push_back(id);
    }
    if (unmatched.empty()) {
      for (const auto& rec : records) {
        if (have_split && rec.split != "test") continue;
        const auto gt_rects = gt_to_bounding_rects(rec.mask, conn);
        const auto it = rect_map.find(rec.id);
        const std::vector<BoundingBox> detected =
            it == rect_map.end() ? std::vector<BoundingBox>{} : it->second;
        MetricsRecord m =
            evaluate_rect_detections(gt_rects, detected, rec.mask.width, rec.mask.height);
        m.id = rec.id;
        metrics.push_back(std::move(m));
      }
    }
  }

  if (!unmatched.empty()) {
    std::string msg = "unmatched ids:";
    for (const auto& id : unmatched) msg += " " + id;
    throw std::runtime_error(msg);
  }
  if (metrics.empty()) throw std::runtime_error("no images were evaluated");

  const AggregateReport rep = aggregate(metrics, annotations, bins);
  write_metrics_csv((fs::path(out) / "metrics.csv").string(), metrics);
  write_histograms_csv((fs::path(out) / "histograms.csv").string(), rep);
  write_covariates_csv(out, rep);

  DetectionCriterion crit;
  if (detect_metric == "iou") {
    crit.metric = DetectionCriterion::Metric::Iou;
  } else if (detect_metric == "overlap") {
    crit.metric = DetectionCriterion::Metric::Overlap;
  } else {
    throw std::runtime_error("detect_metric must be 'iou' or 'overlap'");
  }
  crit.threshold = detect_threshold;
  const double det_acc = detection_accuracy(metrics, crit);

  std::ostringstream report;
  report << format_report_table({{rects_path.empty() ? "masks" : "rects", rep}});
  report << "\nImages evaluated: " << rep.count << "\n";
  report << "Detection accuracy (" << detect_metric << " >= " << detect_threshold
         << "): " << det_acc << "\n";
  std::ofstream report_file(fs::path(out) / "report.txt", std::ios::trunc);
  report_file << report.str();
  opt.echo_into(out);
  std::cout << report.str();
  return 0;
}

int cmd_report(Options& opt, const std::vector<std::string>& csvs) {
  opt.require_known_keys();
  if (csvs.empty()) throw std::runtime_error("report needs at least one metrics CSV");
  const int bins = static_cast<int>(opt.get_long("bins", 20));

  std::vector<std::pair<std::string, AggregateReport>> methods;
  for (const auto& path : csvs) {
    CsvTable table = load_csv(path);
    expect_header(table, {"id", "accuracy", "iou", "precision", "recall", "overlap"});
    std::vector<MetricsRecord> records;
    for (const auto& row : table.rows) {
      MetricsRecord m;
      m.id = row.fields[0];
      m.accuracy = parse_double(row.fields[1], path, row.line);
      m.iou = parse_double(row.fields[2], path, row.line);
      m.precision = parse_double(row.fields[3], path, row.line);
      m.recall = parse_double(row.fields[4], path, row.line);
      m.overlap = parse_double(row.fields[5], path, row.line);
      records.push_back(std::move(m));
    }
    if (records.empty()) throw std::runtime_error(path + ": no metric rows");
    methods.emplace_back(fs::path(path).stem().string(), aggregate(records, {}, bins));
  }

  const std::string table = format_report_table(methods);
  std::cout << table;
  const std::string out = opt.get("out", "");
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream f(fs::path(out) / "report.txt", std::ios::trunc);
    f << table;
    opt.echo_into(out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pixel-wise ear segmentation: train, infer, evaluate, report"};
  app.require_subcommand(1);

  Options opt;
  std::vector<std::string> infer_inputs;
  std::vector<std::string> report_csvs;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset directory");
  auto* split = app.add_subcommand("split", "Assign train/test splits for a manifest");
  auto* train_cmd = app.add_subcommand("train", "Train a network on the train split");
  auto* infer = app.add_subcommand("infer", "Segment images with trained weights");
  auto* eval = app.add_subcommand("eval", "Score predictions against ground truth");
  auto* report = app.add_subcommand("report", "Side-by-side table from metrics CSVs");

  for (CLI::App* cmd : {synth, split, train_cmd, infer, eval, report}) {
    add_config_flag(cmd, opt);
    kv_flag(cmd, opt, "--out", "out", "output directory");
    kv_flag(cmd, opt, "--seed", "seed", "master seed (all randomness derives from it)");
  }
  for (CLI::App* cmd : {split, train_cmd, infer, eval}) {
    kv_flag(cmd, opt, "--manifest", "manifest", "dataset manifest CSV");
    kv_flag(cmd, opt, "--covariates", "covariates", "covariate annotations CSV");
    kv_flag(cmd, opt, "--split", "split", "split assignment CSV");
  }
  for (CLI::App* cmd : {synth, train_cmd, infer}) {
    kv_flag(cmd, opt, "--width", "width", "working image width");
    kv_flag(cmd, opt, "--height", "height", "working image height");
  }
  for (CLI::App* cmd : {train_cmd, infer}) {
    kv_flag(cmd, opt, "--scale", "scale", "channel scale of the network (0,1]");
  }
  for (CLI::App* cmd : {infer, eval}) {
    kv_flag(cmd, opt, "--connectivity", "connectivity", "region connectivity (4 or 8)");
  }

  kv_flag(synth, opt, "--count", "count", "number of samples");
  kv_flag(synth, opt, "--ear-low", "ear_low", "minimum per-image ear-pixel share");
  kv_flag(synth, opt, "--ear-high", "ear_high", "maximum per-image ear-pixel share");
  kv_flag(split, opt, "--train-count", "train_count", "samples assigned to train");
  kv_flag(train_cmd, opt, "--learning-rate", "learning_rate", "SGD learning rate");
  kv_flag(train_cmd, opt, "--momentum", "momentum", "SGD momentum");
  kv_flag(train_cmd, opt, "--weight-decay", "weight_decay", "L2 decay on conv weights");
  kv_flag(train_cmd, opt, "--max-iterations", "max_iterations", "training iterations");
  kv_flag(train_cmd, opt, "--log-every", "log_every", "log cadence in iterations");
  kv_flag(train_cmd, opt, "--batch-size", "batch_size", "images per iteration");
  kv_flag(train_cmd, opt, "--class-balancing", "class_balancing",
          "median-frequency class weights (true/false)");
  kv_flag(infer, opt, "--weights", "weights", "weights file from train");
  infer->add_option("inputs", infer_inputs, "image files (default: manifest images)");
  kv_flag(eval, opt, "--pred", "pred", "directory of predicted masks");
  kv_flag(eval, opt, "--rects", "rects", "rectangle detections CSV");
  kv_flag(eval, opt, "--bins", "bins", "histogram bin count");
  kv_flag(eval, opt, "--detect-metric", "detect_metric", "detection criterion: iou|overlap");
  kv_flag(eval, opt, "--detect-threshold", "detect_threshold", "detection criterion threshold");
  kv_flag(report, opt, "--bins", "bins", "histogram bin count");
  report->add_option("csvs", report_csvs, "per-method metrics CSVs")->required();

  try {
    app.parse(argc, argv);
    if (synth->parsed()) return cmd_synth(opt);
    if (split->parsed()) return cmd_split(opt);
    if (train_cmd->parsed()) return cmd_train(opt);
    if (infer->parsed()) return cmd_infer(opt, infer_inputs);
    if (eval->parsed()) return cmd_eval(opt);
    if (report->parsed()) return cmd_report(opt, report_csvs);
    return 1;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::cerr << "earseg: error: " << e.what() << "\n";
    return e.get_exit_code();
  } catch (const std::exception& e) {
    std::cerr << "earseg: error: " << e.what() << "\n";
    return 1;
  }
}
