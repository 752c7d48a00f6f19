#include "gbm/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>
#include <thread>

#include "gbm/augment.hpp"
#include "gbm/checkpoint.hpp"
#include "gbm/classical_seg.hpp"
#include "gbm/dataset.hpp"
#include "gbm/hash.hpp"
#include "gbm/image_io.hpp"
#include "gbm/metrics.hpp"
#include "gbm/model.hpp"
#include "gbm/overlay.hpp"
#include "gbm/plot.hpp"
#include "gbm/preprocess.hpp"
#include "gbm/train.hpp"

namespace gbm {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

int num_workers() {
  if (const char* env = std::getenv("GBM_NUM_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1 || v > 4096) {
      throw ConfigError(std::string("GBM_NUM_WORKERS must be a positive integer, got '") + env +
                        "'");
    }
    return static_cast<int>(v);
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc ? static_cast<int>(hc) : 1;
}

namespace {

void ensure_parent_dir(const fs::path& path) {
  const fs::path parent = path.parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) throw IoError("cannot create directory " + parent.string() + ": " + ec.message());
}

void write_text_file(const fs::path& path, const std::string& text) {
  ensure_parent_dir(path);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f << text;
  f.flush();
  if (!f) throw IoError("failed writing: " + path.string());
}

std::string read_text_file(const fs::path& path, const char* what) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(std::string("cannot open ") + what + ": " + path.string());
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

nlohmann::json read_json_file(const fs::path& path, const char* what) {
  const std::string text = read_text_file(path, what);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed ") + what + " (" + path.string() + "): " + e.what());
  }
}

// Reproducibility record written beside every subcommand's outputs: the
// argv, the fully resolved configuration, every seed in play, and an
// FNV-1a fingerprint per artifact. Deliberately timestamp-free so identical
// runs produce identical records.
void write_run_record(const fs::path& record_path, const std::string& command,
                      const std::vector<std::string>& argv, ordered_json config,
                      ordered_json seeds, const std::vector<fs::path>& artifacts) {
  ordered_json rec;
  rec["command"] = command;
  rec["argv"] = argv;
  rec["config"] = std::move(config);
  rec["seeds"] = std::move(seeds);
  ordered_json hashes = ordered_json::object();
  for (const auto& a : artifacts) hashes[a.generic_string()] = hash_file_hex(a);
  rec["artifacts"] = std::move(hashes);
  write_text_file(record_path, rec.dump(2) + "\n");
}

std::string format_metric(const MetricValue& mv) {
  if (mv.value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", *mv.value);
    return buf;
  }
  return "undefined (" + (mv.reason.empty() ? std::string("not computed") : mv.reason) + ")";
}

// ---------------------------------------------------------------------------
// ingest

struct IngestOpts {
  std::string data_dir;
  std::string out = "manifest.json";
  uint64_t seed = 0;
  double train_ratio = 0.70, val_ratio = 0.15, test_ratio = 0.15;
};

int cmd_ingest(const IngestOpts& o, const std::vector<std::string>& argv) {
  const std::array<double, 3> ratios{o.train_ratio, o.val_ratio, o.test_ratio};
  DatasetManifest manifest = scan_dataset(o.data_dir);
  if (manifest.entries.empty()) {
    manifest.seed = o.seed;
    manifest.split_ratios = ratios;
  } else {
    manifest = split_manifest(manifest, ratios, o.seed);
  }
  ensure_parent_dir(o.out);
  save_manifest(manifest, o.out);

  ordered_json config;
  config["data_dir"] = o.data_dir;
  config["split_ratios"] = {o.train_ratio, o.val_ratio, o.test_ratio};
  config["skipped_files"] = manifest.skipped_files;
  ordered_json seeds;
  seeds["split"] = o.seed;
  write_run_record(fs::path(o.out).string() + ".run.json", "ingest", argv, std::move(config),
                   std::move(seeds), {o.out});

  int tumorous = 0;
  for (const auto& e : manifest.entries) tumorous += e.label;
  std::cout << "ingest: " << manifest.entries.size() << " entries (" << tumorous
            << " tumorous), " << manifest.skipped_files << " skipped -> " << o.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// preprocess

struct PreprocessOpts {
  std::string manifest;
  std::string out_dir;
  int side = 256;
  int kernel = 5;
  double sigma = 1.0;
  bool no_sharpen = false;
  bool no_normalize = false;
  int materialize = 0;
  std::uint64_t augment_seed = 0;
};

int cmd_preprocess(const PreprocessOpts& o, const std::vector<std::string>& argv) {
  PreprocessConfig cfg;
  cfg.target_side = o.side;
  cfg.gaussian_kernel = o.kernel;
  cfg.gaussian_sigma = o.sigma;
  cfg.sharpen_enabled = !o.no_sharpen;
  cfg.normalize = !o.no_normalize;
  cfg.validate();

  if (o.materialize < 0) throw ConfigError("--materialize must be >= 0");
  if (o.materialize > 0 && !cfg.normalize) {
    throw ConfigError("--materialize requires normalization (remove --no-normalize)");
  }
  AugmentConfig aug_cfg;
  aug_cfg.seed = o.augment_seed;
  aug_cfg.validate();

  const DatasetManifest manifest = load_manifest(o.manifest);
  const fs::path out_dir(o.out_dir);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string());

  DatasetManifest out_manifest = manifest;
  out_manifest.root = out_dir.generic_string();

  const size_t n = manifest.entries.size();
  std::vector<std::exception_ptr> failures(n);
  std::vector<std::optional<SampleEntry>> aug_entries(n * static_cast<size_t>(o.materialize));
  std::atomic<size_t> cursor{0};
  auto worker = [&] {
    for (size_t i = cursor.fetch_add(1); i < n; i = cursor.fetch_add(1)) {
      try {
        const SampleEntry& entry = manifest.entries[i];
        ImageSample raw = load_sample(entry, manifest.root);
        ImageSample processed = preprocess_pipeline(raw, cfg);

        const fs::path rel = fs::path(entry.id).replace_extension(".png");
        const fs::path dst = out_dir / rel;
        ensure_parent_dir(dst);
        PlaneF plane = processed.channels[0];
        if (processed.normalized) plane *= 255.0f;
        write_png_gray(dst, plane);
        out_manifest.entries[i].path = rel.generic_string();

        if (processed.mask) {
          const fs::path mask_rel = fs::path("masks") / rel;
          const fs::path mask_dst = out_dir / mask_rel;
          ensure_parent_dir(mask_dst);
          write_png_mask(mask_dst, *processed.mask);
          out_manifest.entries[i].mask_path = mask_rel.generic_string();
        }

        if (entry.split == Split::train) {
          for (int k = 1; k <= o.materialize; ++k) {
            const uint64_t s = derive_seed(aug_cfg.seed, entry.id, static_cast<uint64_t>(k));
            std::mt19937 rng(static_cast<uint32_t>(s ^ (s >> 32)));
            ImageSample aug = sample_and_apply(processed, aug_cfg, rng);

            fs::path aug_rel = rel;
            aug_rel.replace_extension();
            aug_rel += ".aug" + std::to_string(k) + ".png";
            PlaneF aug_plane = aug.channels[0] * 255.0f;
            write_png_gray(out_dir / aug_rel, aug_plane);

            SampleEntry extra;
            extra.id = aug_rel.generic_string();
            extra.path = aug_rel.generic_string();
            extra.label = entry.label;
            extra.split = Split::train;
            if (aug.mask) {
              const fs::path mask_rel = fs::path("masks") / aug_rel;
              ensure_parent_dir(out_dir / mask_rel);
              write_png_mask(out_dir / mask_rel, *aug.mask);
              extra.mask_path = mask_rel.generic_string();
            }
            aug_entries[i * static_cast<size_t>(o.materialize) + static_cast<size_t>(k - 1)] =
                std::move(extra);
          }
        }
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  const int workers = std::max(1, std::min<int>(num_workers(), static_cast<int>(n)));
  if (workers <= 1 || n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& failure : failures) {
    if (failure) std::rethrow_exception(failure);
  }
  for (auto& extra : aug_entries) {
    if (extra) out_manifest.entries.push_back(std::move(*extra));
  }

  const fs::path manifest_out = out_dir / "manifest.json";
  save_manifest(out_manifest, manifest_out);

  ordered_json config;
  config["manifest"] = o.manifest;
  config["target_side"] = cfg.target_side;
  config["gaussian_kernel"] = cfg.gaussian_kernel;
  config["gaussian_sigma"] = cfg.gaussian_sigma;
  config["sharpen_enabled"] = cfg.sharpen_enabled;
  config["normalize"] = cfg.normalize;
  config["materialize"] = o.materialize;
  if (o.materialize > 0) config["augment_seed"] = o.augment_seed;
  std::vector<fs::path> artifacts{manifest_out};
  for (const auto& e : out_manifest.entries) {
    artifacts.push_back(out_dir / e.path);
    if (e.mask_path) artifacts.push_back(out_dir / *e.mask_path);
  }
  write_run_record(out_dir / "run_record.json", "preprocess", argv, std::move(config),
                   ordered_json::object(), artifacts);

  std::cout << "preprocess: " << n << " images -> " << out_dir.string() << " (side "
            << cfg.target_side << ")";
  if (out_manifest.entries.size() > n) {
    std::cout << ", +" << (out_manifest.entries.size() - n) << " augmented copies";
  }
  std::cout << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainOpts {
  std::string arch = "unet";
  std::string task = "segment";
  std::string config;
  std::string manifest;
  std::string out_dir;
  std::string resume;
  int epochs_override = -1;
  int batch_override = -1;
  int64_t seed_override = -1;
};

int cmd_train(const TrainOpts& o, const std::vector<std::string>& argv) {
  nlohmann::json cj = nlohmann::json::object();
  if (!o.config.empty()) cj = read_json_file(o.config, "train config");

  TrainConfig cfg = TrainConfig::from_json(cj);
  if (o.epochs_override >= 0) cfg.epochs = o.epochs_override;
  if (o.batch_override >= 0) cfg.batch_size = o.batch_override;
  if (o.seed_override >= 0) cfg.seed = static_cast<uint64_t>(o.seed_override);

  ModelSpec spec;
  spec.arch = o.arch;
  spec.task = o.task;
  spec.seed = derive_seed(cfg.seed, "model-init");
  if (cj.contains("model")) {
    const auto& mj = cj.at("model");
    try {
      if (mj.contains("in_channels")) spec.in_channels = mj.at("in_channels").get<int>();
      if (mj.contains("num_classes")) spec.num_classes = mj.at("num_classes").get<int>();
      if (mj.contains("base_channels")) spec.base_channels = mj.at("base_channels").get<int>();
      if (mj.contains("depth")) spec.depth = mj.at("depth").get<int>();
      if (mj.contains("atrous_rates")) {
        spec.atrous_rates = mj.at("atrous_rates").get<std::vector<int>>();
      }
      if (mj.contains("input_side")) spec.input_side = mj.at("input_side").get<int>();
      if (mj.contains("seed")) spec.seed = mj.at("seed").get<uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("invalid model section in train config: ") + e.what());
    }
  }
  spec.validate();
  cfg.validate();

  const fs::path out_dir(o.out_dir);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string());
  if (cfg.checkpoint_dir.empty()) cfg.checkpoint_dir = out_dir / "checkpoints";

  const DatasetManifest manifest = load_manifest(o.manifest);
  const auto train_set = load_split_samples(manifest, Split::train);
  const auto val_set = load_split_samples(manifest, Split::validation);

  std::unique_ptr<Model<float>> model;
  TrainHistory history;
  int prior_epochs = 0;
  if (!o.resume.empty()) {
    auto loaded = load_checkpoint<float>(o.resume);
    if (loaded.spec.arch != o.arch || loaded.spec.task != o.task) {
      throw ConfigError("resume checkpoint is " + loaded.spec.arch + "/" + loaded.spec.task +
                        ", requested " + o.arch + "/" + o.task);
    }
    spec = loaded.spec;
    model = std::move(loaded.model);
    prior_epochs = loaded.trained_epochs;
    history = fine_tune(*model, prior_epochs, train_set, val_set, cfg);
  } else {
    model = build_model<float>(spec);
    history = train(*model, train_set, val_set, cfg);
  }

  const int total_epochs = history.records.empty() ? prior_epochs : history.records.back().epoch;
  const fs::path history_csv = out_dir / "history.csv";
  const fs::path history_json = out_dir / "history.json";
  const fs::path final_ckpt = out_dir / "final.ckpt";
  history.save_csv(history_csv);
  write_text_file(history_json, history.to_json().dump(2) + "\n");
  save_checkpoint(final_ckpt, *model, total_epochs);

  ordered_json config;
  config["train"] = cfg.to_json();
  config["model"] = spec.to_json();
  config["manifest"] = o.manifest;
  config["resume"] = o.resume;
  ordered_json seeds;
  seeds["train"] = cfg.seed;
  seeds["model_init"] = spec.seed;
  std::vector<fs::path> artifacts{history_csv, history_json, final_ckpt};
  const fs::path best_ckpt = cfg.checkpoint_dir / "best.ckpt";
  if (fs::exists(best_ckpt)) artifacts.push_back(best_ckpt);
  write_run_record(out_dir / "run_record.json", "train", argv, std::move(config),
                   std::move(seeds), artifacts);

  std::cout << "train: " << o.arch << "/" << o.task << ", " << history.records.size()
            << " epochs run (model at epoch " << total_epochs << ")";
  if (!history.records.empty()) {
    const auto& last = history.records.back();
    std::cout << ", final val_loss " << last.val_loss << ", val_acc " << last.val_acc;
  }
  std::cout << " -> " << out_dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateOpts {
  std::string checkpoint;
  std::string manifest;
  std::string split = "test";
  std::string out = "report.json";
  double threshold = 0.5;
  int batch_size = 16;
};

int cmd_evaluate(const EvaluateOpts& o, const std::vector<std::string>& argv) {
  const Split split = split_from_string(o.split);
  auto loaded = load_checkpoint<float>(o.checkpoint);
  const DatasetManifest manifest = load_manifest(o.manifest);
  const auto samples = load_split_samples(manifest, split);
  if (samples.empty()) {
    throw ConfigError("evaluate: split '" + o.split + "' has no samples in " + o.manifest);
  }

  MetricsReport report = evaluate_model(*loaded.model, samples, o.threshold, o.batch_size);
  report.checkpoint_id = hash_file_hex(o.checkpoint);
  report.manifest_hash = hash_file_hex(o.manifest);

  ensure_parent_dir(o.out);
  write_text_file(o.out, report.to_json().dump(2) + "\n");

  ordered_json config;
  config["checkpoint"] = o.checkpoint;
  config["manifest"] = o.manifest;
  config["split"] = o.split;
  config["threshold"] = o.threshold;
  config["batch_size"] = o.batch_size;
  write_run_record(fs::path(o.out).string() + ".run.json", "evaluate", argv, std::move(config),
                   ordered_json::object(), {o.out});

  std::cout << "evaluate: " << report.num_samples << " samples, accuracy "
            << format_metric(report.accuracy) << ", f1 " << format_metric(report.f1) << " -> "
            << o.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// segment

struct SegmentOpts {
  std::string method = "kmeans";
  int k = 4;
  std::string image;
  std::string overlay;
  std::string mask;
  std::string tumor;
  std::string checkpoint;
  uint64_t seed = 0;
  int min_area = 50;
  int ae_epochs = 0;
};

int cmd_segment(const SegmentOpts& o, const std::vector<std::string>& argv) {
  if (o.method != "kmeans" && o.method != "model") {
    throw ConfigError("segment method must be 'kmeans' or 'model', got '" + o.method + "'");
  }
  const std::vector<PlaneF> channels = read_image(o.image);
  PlaneF gray = to_grayscale(channels);
  gray /= 255.0f;

  SegmentationMask seg;
  SegmentationMask display;
  if (o.method == "kmeans") {
    std::optional<ConvAutoencoder<float>> encoder;
    if (o.ae_epochs > 0) {
      if (gray.rows() != gray.cols()) {
        throw ConfigError("segment --ae-epochs requires a square image");
      }
      AutoencoderSpec aspec;
      aspec.input_side = static_cast<int>(gray.rows());
      aspec.seed = o.seed;
      AutoencoderTrainConfig acfg;
      acfg.epochs = o.ae_epochs;
      acfg.batch_size = 1;
      acfg.seed = o.seed;
      encoder = train_autoencoder<float>({gray}, aspec, acfg);
    }
    seg = kmeans_segment(gray, encoder ? &*encoder : nullptr, o.k, o.seed);
    // Cluster ids are ordered brightest-first, so cluster k-1 — typically the
    // scan's black background — maps to the overlay's unpainted class and the
    // brightest region takes the first palette color.
    display = seg;
    for (Eigen::Index r = 0; r < seg.rows(); ++r) {
      for (Eigen::Index c = 0; c < seg.cols(); ++c) {
        display(r, c) = seg(r, c) == o.k - 1 ? 0 : seg(r, c) + 1;
      }
    }
  } else {
    if (o.checkpoint.empty()) throw ConfigError("segment --method model requires --checkpoint");
    auto loaded = load_checkpoint<float>(o.checkpoint);
    if (loaded.spec.task != "segment") {
      throw ConfigError("checkpoint task is '" + loaded.spec.task + "', need 'segment'");
    }
    Tensor<float> x(1, 1, static_cast<int>(gray.rows()), static_cast<int>(gray.cols()));
    x.plane(0, 0) = gray;
    const auto out = loaded.model->forward(make_input(std::move(x)));
    const auto& logits = out->value;
    seg = SegmentationMask(logits.h, logits.w);
    for (int r = 0; r < logits.h; ++r) {
      for (int c = 0; c < logits.w; ++c) {
        int best = 0;
        float bv = logits.at(0, 0, r, c);
        for (int cls = 1; cls < logits.c; ++cls) {
          if (logits.at(0, cls, r, c) > bv) {
            bv = logits.at(0, cls, r, c);
            best = cls;
          }
        }
        seg(r, c) = best;
      }
    }
    display = seg;  // class 0 is background by training convention
  }

  std::vector<fs::path> artifacts;
  if (!o.mask.empty()) {
    ensure_parent_dir(o.mask);
    write_png_mask(o.mask, seg);
    artifacts.emplace_back(o.mask);
  }
  if (!o.overlay.empty()) {
    ensure_parent_dir(o.overlay);
    write_png_rgb(o.overlay, render_overlay(gray, display));
    artifacts.emplace_back(o.overlay);
  }
  if (!o.tumor.empty()) {
    if (o.method != "kmeans") {
      throw ConfigError("--tumor-mask extraction applies to --method kmeans only");
    }
    ensure_parent_dir(o.tumor);
    write_png_mask(o.tumor, extract_tumor_mask(seg, gray, o.min_area));
    artifacts.emplace_back(o.tumor);
  }
  if (artifacts.empty()) {
    throw ConfigError("segment: provide at least one of --mask, --overlay, --tumor-mask");
  }

  ordered_json config;
  config["method"] = o.method;
  config["image"] = o.image;
  config["k"] = o.k;
  config["min_area"] = o.min_area;
  config["ae_epochs"] = o.ae_epochs;
  config["checkpoint"] = o.checkpoint;
  ordered_json seeds;
  seeds["kmeans"] = o.seed;
  write_run_record(artifacts.front().string() + ".run.json", "segment", argv, std::move(config),
                   std::move(seeds), artifacts);

  std::cout << "segment: " << o.method << " on " << o.image << " -> "
            << artifacts.front().string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// report

struct ReportOpts {
  std::string report_json;
  std::string history_csv;
  std::string out_dir = ".";
};

int cmd_report(const ReportOpts& o, const std::vector<std::string>& argv) {
  if (o.report_json.empty() && o.history_csv.empty()) {
    throw ConfigError("report: provide --report and/or --history");
  }
  const fs::path out_dir(o.out_dir);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string());

  std::vector<fs::path> artifacts;
  if (!o.report_json.empty()) {
    const std::string text = format_report_text(read_text_file(o.report_json, "report JSON"));
    const fs::path out_txt = out_dir / "confusion.txt";
    write_text_file(out_txt, text);
    std::cout << text;
    artifacts.push_back(out_txt);
  }
  if (!o.history_csv.empty()) {
    const fs::path out_png = out_dir / "history.png";
    const PlotInfo info = render_history_plot(fs::path(o.history_csv), out_png);
    std::cout << "history plot: " << info.epochs << " epochs, final val_acc "
              << info.final_val_acc << " -> " << out_png.string() << "\n";
    artifacts.push_back(out_png);
  }

  ordered_json config;
  config["report"] = o.report_json;
  config["history"] = o.history_csv;
  write_run_record(out_dir / "run_record.json", "report", argv, std::move(config),
                   ordered_json::object(), artifacts);
  return 0;
}

}  // namespace

std::string format_report_text(const std::string& report_json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(report_json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed report JSON: ") + e.what());
  }
  const MetricsReport rep = MetricsReport::from_json(j);

  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof(buf), "task: %s   samples: %d   threshold: %.2f\n", rep.task.c_str(),
                rep.num_samples, rep.threshold);
  out += buf;
  out += rep.task == "segment" ? "confusion matrix (tumor pixels):\n"
                               : "confusion matrix (samples):\n";
  std::snprintf(buf, sizeof(buf), "%-18s%12s%12s\n", "", "pred pos", "pred neg");
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-18s%12lld%12lld\n", "actual positive",
                static_cast<long long>(rep.confusion.tp), static_cast<long long>(rep.confusion.fn));
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-18s%12lld%12lld\n", "actual negative",
                static_cast<long long>(rep.confusion.fp), static_cast<long long>(rep.confusion.tn));
  out += buf;
  out += "\n";
  const std::pair<const char*, const MetricValue*> rows[] = {
      {"accuracy", &rep.accuracy},
      {"precision", &rep.precision},
      {"sensitivity", &rep.sensitivity},
      {"f1", &rep.f1},
  };
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof(buf), "%-12s %s\n", row.first, format_metric(*row.second).c_str());
    out += buf;
  }
  if (rep.task == "segment") {
    std::snprintf(buf, sizeof(buf), "%-12s %s\n", "dice", format_metric(rep.dice).c_str());
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-12s %s\n", "iou", format_metric(rep.iou).c_str());
    out += buf;
  }
  if (!rep.checkpoint_id.empty()) out += "checkpoint:  " + rep.checkpoint_id + "\n";
  if (!rep.manifest_hash.empty()) out += "manifest:    " + rep.manifest_hash + "\n";
  return out;
}

int run_command(const std::vector<std::string>& args) {
  CLI::App app{"Glioblastoma MRI detection and segmentation pipeline"};
  app.require_subcommand(1);

  IngestOpts ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Scan a yes/no dataset tree into a split manifest");
  c_ingest->add_option("--data-dir", ingest.data_dir, "Dataset root containing yes/ and no/")
      ->required();
  c_ingest->add_option("--out", ingest.out, "Output manifest JSON path")->required();
  c_ingest->add_option("--seed", ingest.seed, "Split shuffle seed");
  c_ingest->add_option("--train-ratio", ingest.train_ratio, "Train split fraction");
  c_ingest->add_option("--val-ratio", ingest.val_ratio, "Validation split fraction");
  c_ingest->add_option("--test-ratio", ingest.test_ratio, "Test split fraction");

  PreprocessOpts preprocess;
  auto* c_pre = app.add_subcommand("preprocess", "Resize, filter, and normalize manifest images");
  c_pre->add_option("--manifest", preprocess.manifest, "Input manifest JSON")->required();
  c_pre->add_option("--out", preprocess.out_dir, "Output directory")->required();
  c_pre->add_option("--side", preprocess.side, "Target square side in pixels");
  c_pre->add_option("--kernel", preprocess.kernel, "Gaussian kernel size (odd)");
  c_pre->add_option("--sigma", preprocess.sigma, "Gaussian sigma");
  c_pre->add_flag("--no-sharpen", preprocess.no_sharpen, "Skip the sharpening pass");
  c_pre->add_flag("--no-normalize", preprocess.no_normalize, "Keep 0-255 intensities");
  c_pre->add_option("--materialize", preprocess.materialize,
                    "Write N augmented copies of each training image");
  c_pre->add_option("--augment-seed", preprocess.augment_seed,
                    "Seed for materialized augmentations");

  TrainOpts train;
  auto* c_train = app.add_subcommand("train", "Train a model on a preprocessed manifest");
  c_train->add_option("--arch", train.arch, "Architecture: unet | deeplabv3");
  c_train->add_option("--task", train.task, "Task: classify | segment");
  c_train->add_option("--config", train.config, "Train config JSON file");
  c_train->add_option("--manifest", train.manifest, "Preprocessed manifest JSON")->required();
  c_train->add_option("--out", train.out_dir, "Output directory")->required();
  c_train->add_option("--resume", train.resume, "Checkpoint to fine-tune from");
  c_train->add_option("--epochs", train.epochs_override, "Override config epochs");
  c_train->add_option("--batch-size", train.batch_override, "Override config batch size");
  c_train->add_option("--seed", train.seed_override, "Override config seed");

  EvaluateOpts evaluate;
  auto* c_eval = app.add_subcommand("evaluate", "Score a checkpoint against a manifest split");
  c_eval->add_option("--checkpoint", evaluate.checkpoint, "Model checkpoint")->required();
  c_eval->add_option("--manifest", evaluate.manifest, "Preprocessed manifest JSON")->required();
  c_eval->add_option("--split", evaluate.split, "Split: train | validation | test");
  c_eval->add_option("--out", evaluate.out, "Output report JSON path");
  c_eval->add_option("--threshold", evaluate.threshold, "Classification threshold");
  c_eval->add_option("--batch-size", evaluate.batch_size, "Inference batch size");

  SegmentOpts segment;
  auto* c_seg = app.add_subcommand("segment", "Segment one image via k-means or a checkpoint");
  c_seg->add_option("--method", segment.method, "kmeans | model");
  c_seg->add_option("--k", segment.k, "Cluster count for k-means");
  c_seg->add_option("--image", segment.image, "Input image")->required();
  c_seg->add_option("--overlay", segment.overlay, "Overlay PNG output");
  c_seg->add_option("--mask", segment.mask, "Class-index mask PNG output");
  c_seg->add_option("--tumor-mask", segment.tumor, "Denoised binary tumor mask PNG output");
  c_seg->add_option("--checkpoint", segment.checkpoint, "Checkpoint for --method model");
  c_seg->add_option("--seed", segment.seed, "K-means seed");
  c_seg->add_option("--min-area", segment.min_area, "Minimum connected-component area");
  c_seg->add_option("--ae-epochs", segment.ae_epochs,
                    "Train an autoencoder this many epochs for extra k-means features");

  ReportOpts report;
  auto* c_rep = app.add_subcommand("report", "Render a report as text and plot training history");
  c_rep->add_option("--report", report.report_json, "Report JSON from evaluate");
  c_rep->add_option("--history", report.history_csv, "Training history CSV");
  c_rep->add_option("--out", report.out_dir, "Output directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (c_ingest->parsed()) return cmd_ingest(ingest, args);
    if (c_pre->parsed()) return cmd_preprocess(preprocess, args);
    if (c_train->parsed()) return cmd_train(train, args);
    if (c_eval->parsed()) return cmd_evaluate(evaluate, args);
    if (c_seg->parsed()) return cmd_segment(segment, args);
    if (c_rep->parsed()) return cmd_report(report, args);
    std::cerr << "error: no subcommand given\n";
    return 1;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

int run_command(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_command(args);
}

}  // namespace gbm
