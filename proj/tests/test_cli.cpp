#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <json.hpp>

#include "gbm/cli.hpp"
#include "gbm/dataset.hpp"
#include "gbm/image_io.hpp"
#include "gbm/metrics.hpp"
#include "gbm/train.hpp"
#include "support.hpp"

using namespace gbm;
using testsupport::TempDir;

namespace {

std::string path_str(const std::filesystem::path& p) { return p.string(); }

void write_micro_train_config(const std::filesystem::path& path) {
  nlohmann::json j;
  j["epochs"] = 2;
  j["batch_size"] = 4;
  j["learning_rate"] = 0.01;
  j["seed"] = 5;
  j["augment"] = nullptr;
  j["model"] = {{"base_channels", 2}, {"depth", 1}, {"input_side", 16}};
  std::ofstream(path) << j.dump(2);
}

nlohmann::json read_json(const std::filesystem::path& p) {
  std::ifstream f(p);
  REQUIRE(f.good());
  return nlohmann::json::parse(f);
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("parse failures exit with code 1") {
    CHECK(run_command({"frobnicate"}) == 1);
    CHECK(run_command({}) == 1);
    CHECK(run_command({"ingest", "--no-such-flag"}) == 1);
    CHECK(run_command({"ingest"}) == 1);  // missing required options
  }

  TEST_CASE("missing input files exit with code 2") {
    TempDir tmp("cli2");
    CHECK(run_command({"evaluate", "--checkpoint", path_str(tmp.path() / "nope.ckpt"),
                       "--manifest", path_str(tmp.path() / "nope.json")}) == 2);
    CHECK(run_command({"preprocess", "--manifest", path_str(tmp.path() / "gone.json"), "--out",
                       path_str(tmp.path() / "out")}) == 2);
  }

  TEST_CASE("GBM_NUM_WORKERS is validated before any work") {
    setenv("GBM_NUM_WORKERS", "not-a-number", 1);
    CHECK_THROWS_AS(num_workers(), ConfigError);
    setenv("GBM_NUM_WORKERS", "0", 1);
    CHECK_THROWS_AS(num_workers(), ConfigError);
    setenv("GBM_NUM_WORKERS", "3", 1);
    CHECK(num_workers() == 3);
    unsetenv("GBM_NUM_WORKERS");
    CHECK(num_workers() >= 1);
  }

  TEST_CASE("ingest writes a manifest plus a reproducibility record") {
    TempDir tmp("cli_ingest");
    const auto root = tmp.path() / "data";
    testsupport::write_dataset_tree(root, 2, 1, 24);
    const auto manifest_path = tmp.path() / "m.json";
    CHECK(run_command({"ingest", "--data-dir", path_str(root), "--out", path_str(manifest_path),
                       "--train-ratio", "1", "--val-ratio", "0", "--test-ratio", "0"}) == 0);

    const DatasetManifest m = load_manifest(manifest_path);
    CHECK(m.entries.size() == 3);

    const auto rec = read_json(tmp.path() / "m.json.run.json");
    CHECK(rec.at("command") == "ingest");
    REQUIRE(rec.at("argv").is_array());
    CHECK(rec.at("argv").at(0) == "ingest");
    CHECK(rec.at("config").contains("split_ratios"));
    CHECK(rec.at("seeds").contains("split"));
    const auto& artifacts = rec.at("artifacts");
    REQUIRE(artifacts.is_object());
    REQUIRE(artifacts.size() == 1);
    for (const auto& [path, digest] : artifacts.items()) {
      CHECK(path.find("m.json") != std::string::npos);
      const auto d = digest.get<std::string>();
      CHECK(d.rfind("fnv1a64:", 0) == 0);
      CHECK(d.size() == std::string("fnv1a64:").size() + 16);  // 64-bit hash in hex
    }
  }

  TEST_CASE("full pipeline: ingest, preprocess, train, evaluate, report") {
    TempDir tmp("cli_e2e");
    const auto root = tmp.path() / "data";
    testsupport::write_dataset_tree(root, 6, 6, 24);
    const auto manifest = tmp.path() / "m.json";
    REQUIRE(run_command({"ingest", "--data-dir", path_str(root), "--out", path_str(manifest),
                         "--seed", "4", "--train-ratio", "0.6", "--val-ratio", "0.2",
                         "--test-ratio", "0.2"}) == 0);

    const auto pre = tmp.path() / "pre";
    REQUIRE(run_command({"preprocess", "--manifest", path_str(manifest), "--out", path_str(pre),
                         "--side", "16"}) == 0);
    const auto pre_manifest = pre / "manifest.json";
    REQUIRE(std::filesystem::exists(pre_manifest));
    const DatasetManifest pm = load_manifest(pre_manifest);
    CHECK(pm.entries.size() == 12);
    // Every processed image is readable, grayscale, and 16x16.
    const ImageSample probe = load_sample(pm.entries.front(), pm.root);
    CHECK(probe.height() == 16);
    CHECK(probe.width() == 16);
    CHECK(probe.channels.size() == 1);

    const auto cfg = tmp.path() / "cfg.json";
    write_micro_train_config(cfg);
    const auto run_dir = tmp.path() / "run";
    REQUIRE(run_command({"train", "--arch", "unet", "--task", "classify", "--config",
                         path_str(cfg), "--manifest", path_str(pre_manifest), "--out",
                         path_str(run_dir)}) == 0);
    CHECK(std::filesystem::exists(run_dir / "final.ckpt"));
    CHECK(std::filesystem::exists(run_dir / "checkpoints" / "best.ckpt"));
    const TrainHistory hist = TrainHistory::load_csv(run_dir / "history.csv");
    REQUIRE(hist.records.size() == 2);
    CHECK(hist.records[1].epoch == 2);

    const auto report_json = tmp.path() / "report.json";
    REQUIRE(run_command({"evaluate", "--checkpoint", path_str(run_dir / "final.ckpt"),
                         "--manifest", path_str(pre_manifest), "--split", "test", "--out",
                         path_str(report_json)}) == 0);
    const MetricsReport rep = MetricsReport::from_json(read_json(report_json));
    CHECK(rep.task == "classify");
    int64_t test_count = 0;
    for (const auto& e : pm.entries) test_count += e.split == Split::test;
    CHECK(rep.num_samples == test_count);
    CHECK(test_count >= 1);
    CHECK_FALSE(rep.checkpoint_id.empty());
    CHECK_FALSE(rep.manifest_hash.empty());

    const auto report_dir = tmp.path() / "report";
    REQUIRE(run_command({"report", "--report", path_str(report_json), "--history",
                         path_str(run_dir / "history.csv"), "--out", path_str(report_dir)}) == 0);
    CHECK(std::filesystem::exists(report_dir / "history.png"));
    CHECK(std::filesystem::exists(report_dir / "run_record.json"));

    // Evaluation is re-runnable byte for byte.
    const auto report2 = tmp.path() / "report2.json";
    REQUIRE(run_command({"evaluate", "--checkpoint", path_str(run_dir / "final.ckpt"),
                         "--manifest", path_str(pre_manifest), "--split", "test", "--out",
                         path_str(report2)}) == 0);
    CHECK(testsupport::read_file_bytes(report_json) == testsupport::read_file_bytes(report2));

    // Training is reproducible: a second run from the same config and
    // manifest yields an identical checkpoint.
    const auto run_dir2 = tmp.path() / "run2";
    REQUIRE(run_command({"train", "--arch", "unet", "--task", "classify", "--config",
                         path_str(cfg), "--manifest", path_str(pre_manifest), "--out",
                         path_str(run_dir2)}) == 0);
    CHECK(testsupport::read_file_bytes(run_dir / "final.ckpt") ==
          testsupport::read_file_bytes(run_dir2 / "final.ckpt"));
    CHECK(testsupport::read_file_bytes(run_dir / "history.csv") ==
          testsupport::read_file_bytes(run_dir2 / "history.csv"));
  }

  TEST_CASE("train rejects resuming across architectures") {
    TempDir tmp("cli_resume");
    const auto root = tmp.path() / "data";
    testsupport::write_dataset_tree(root, 3, 3, 24);
    const auto manifest = tmp.path() / "m.json";
    REQUIRE(run_command({"ingest", "--data-dir", path_str(root), "--out", path_str(manifest),
                         "--train-ratio", "0.67", "--val-ratio", "0.17", "--test-ratio",
                         "0.16"}) == 0);
    const auto pre = tmp.path() / "pre";
    REQUIRE(run_command({"preprocess", "--manifest", path_str(manifest), "--out", path_str(pre),
                         "--side", "16"}) == 0);
    const auto cfg = tmp.path() / "cfg.json";
    write_micro_train_config(cfg);
    const auto run_dir = tmp.path() / "run";
    REQUIRE(run_command({"train", "--arch", "unet", "--task", "classify", "--config",
                         path_str(cfg), "--manifest", path_str(pre / "manifest.json"), "--out",
                         path_str(run_dir)}) == 0);
    // Same checkpoint, different arch: config error (exit 1).
    CHECK(run_command({"train", "--arch", "deeplabv3", "--task", "classify", "--config",
                       path_str(cfg), "--manifest", path_str(pre / "manifest.json"), "--out",
                       path_str(tmp.path() / "run2"), "--resume",
                       path_str(run_dir / "final.ckpt")}) == 1);
  }

  TEST_CASE("preprocess --materialize appends augmented train copies") {
    TempDir tmp("cli_mat");
    const auto root = tmp.path() / "data";
    testsupport::write_dataset_tree(root, 4, 2, 24);
    const auto manifest = tmp.path() / "m.json";
    REQUIRE(run_command({"ingest", "--data-dir", path_str(root), "--out", path_str(manifest),
                         "--seed", "2", "--train-ratio", "0.5", "--val-ratio", "0.25",
                         "--test-ratio", "0.25"}) == 0);
    const DatasetManifest base = load_manifest(manifest);
    int64_t train_count = 0;
    for (const auto& e : base.entries) train_count += e.split == Split::train;

    const auto pre = tmp.path() / "pre";
    REQUIRE(run_command({"preprocess", "--manifest", path_str(manifest), "--out", path_str(pre),
                         "--side", "16", "--materialize", "2", "--augment-seed", "9"}) == 0);
    const DatasetManifest out = load_manifest(pre / "manifest.json");
    CHECK(static_cast<int64_t>(out.entries.size()) ==
          static_cast<int64_t>(base.entries.size()) + 2 * train_count);
    int64_t augmented = 0;
    for (const auto& e : out.entries) {
      if (e.id.find(".aug") != std::string::npos) {
        ++augmented;
        CHECK(e.split == Split::train);
        const ImageSample s = load_sample(e, out.root);
        CHECK(s.height() == 16);
        REQUIRE(s.mask.has_value());
      }
    }
    CHECK(augmented == 2 * train_count);
    CHECK(run_command({"preprocess", "--manifest", path_str(manifest), "--out",
                       path_str(tmp.path() / "bad"), "--side", "16", "--materialize", "-1"}) == 1);
    CHECK(run_command({"preprocess", "--manifest", path_str(manifest), "--out",
                       path_str(tmp.path() / "bad2"), "--side", "16", "--materialize", "1",
                       "--no-normalize"}) == 1);
  }

  TEST_CASE("segment produces deterministic kmeans artifacts") {
    TempDir tmp("cli_seg");
    const PlaneF disk = testsupport::disk_plane(32, 16, 16, 7, 0.9f, 0.1f);
    const auto img_path = tmp.path() / "scan.png";
    write_png_gray(img_path, disk * 255.0f);

    auto run_into = [&](const std::filesystem::path& dir) {
      std::filesystem::create_directories(dir);
      return run_command({"segment", "--method", "kmeans", "--k", "2", "--image",
                          path_str(img_path), "--mask", path_str(dir / "mask.png"), "--overlay",
                          path_str(dir / "overlay.png"), "--tumor-mask",
                          path_str(dir / "tumor.png"), "--seed", "3"});
    };
    REQUIRE(run_into(tmp.path() / "a") == 0);
    REQUIRE(run_into(tmp.path() / "b") == 0);
    for (const char* name : {"mask.png", "overlay.png", "tumor.png"}) {
      CAPTURE(name);
      CHECK(std::filesystem::exists(tmp.path() / "a" / name));
      CHECK(testsupport::read_file_bytes(tmp.path() / "a" / name) ==
            testsupport::read_file_bytes(tmp.path() / "b" / name));
    }
    const SegmentationMask mask = read_png_mask(tmp.path() / "a" / "mask.png");
    CHECK(mask.rows() == 32);
    CHECK(mask.maxCoeff() <= 1);  // k = 2
    const SegmentationMask tumor = read_png_mask(tmp.path() / "a" / "tumor.png");
    CHECK(((tumor == 0) || (tumor == 1)).all());
    CHECK((tumor != 0).count() > 0);
    CHECK(std::filesystem::exists(tmp.path() / "a" / "mask.png.run.json"));
  }

  TEST_CASE("format_report_text lays out the confusion grid and metrics") {
    ConfusionMatrix cm;
    cm.tp = 1185;
    cm.tn = 11;
    cm.fp = 56;
    cm.fn = 70;
    MetricsReport rep = report_from_confusion(cm, 0.5);
    rep.checkpoint_id = "final.ckpt";
    const std::string text = format_report_text(rep.to_json().dump());
    CHECK(text.find("actual positive") != std::string::npos);
    CHECK(text.find("pred pos") != std::string::npos);
    CHECK(text.find("1185") != std::string::npos);
    CHECK(text.find("70") != std::string::npos);
    CHECK(text.find("accuracy") != std::string::npos);
    CHECK(text.find("0.904690") != std::string::npos);
    CHECK(text.find("0.954875") != std::string::npos);
    CHECK(text.find("0.944223") != std::string::npos);
    CHECK(text.find("0.949519") != std::string::npos);
    CHECK(text.find("final.ckpt") != std::string::npos);
    CHECK_THROWS_AS(format_report_text("{not json"), ConfigError);

    // Undefined metrics render with their reason instead of a number.
    ConfusionMatrix none;
    none.tn = 4;
    const std::string undef = format_report_text(report_from_confusion(none, 0.5).to_json().dump());
    CHECK(undef.find("undefined") != std::string::npos);
  }
}
