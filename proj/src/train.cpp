#include "gbm/train.hpp"

#include <cinttypes>
#include <cstdio>

#include "gbm/preprocess.hpp"

namespace gbm {

nlohmann::ordered_json augment_config_to_json(const AugmentConfig& c) {
  nlohmann::ordered_json j;
  j["rotation_max_deg"] = c.rotation_max_deg;
  j["scale_range"] = c.scale_range;
  j["flip_horizontal_prob"] = c.flip_horizontal_prob;
  j["shear_max_deg"] = c.shear_max_deg;
  j["noise_sigma"] = c.noise_sigma;
  j["contrast_range"] = c.contrast_range;
  j["seed"] = c.seed;
  return j;
}

AugmentConfig augment_config_from_json(const nlohmann::json& j) {
  AugmentConfig c;
  try {
    if (j.contains("rotation_max_deg")) c.rotation_max_deg = j.at("rotation_max_deg").get<double>();
    if (j.contains("scale_range")) c.scale_range = j.at("scale_range").get<std::array<double, 2>>();
    if (j.contains("flip_horizontal_prob")) {
      c.flip_horizontal_prob = j.at("flip_horizontal_prob").get<double>();
    }
    if (j.contains("shear_max_deg")) c.shear_max_deg = j.at("shear_max_deg").get<double>();
    if (j.contains("noise_sigma")) c.noise_sigma = j.at("noise_sigma").get<double>();
    if (j.contains("contrast_range")) {
      c.contrast_range = j.at("contrast_range").get<std::array<double, 2>>();
    }
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid augment config JSON: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::ordered_json TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["learning_rate"] = learning_rate;
  j["adam_beta1"] = adam_beta1;
  j["adam_beta2"] = adam_beta2;
  j["adam_epsilon"] = adam_epsilon;
  j["seed"] = seed;
  j["augment"] = augment ? augment_config_to_json(*augment) : nlohmann::ordered_json(nullptr);
  j["early_stop_patience"] =
      early_stop_patience ? nlohmann::ordered_json(*early_stop_patience) : nullptr;
  j["checkpoint_dir"] = checkpoint_dir.generic_string();
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
    if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("adam_beta1")) c.adam_beta1 = j.at("adam_beta1").get<double>();
    if (j.contains("adam_beta2")) c.adam_beta2 = j.at("adam_beta2").get<double>();
    if (j.contains("adam_epsilon")) c.adam_epsilon = j.at("adam_epsilon").get<double>();
    if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
    if (j.contains("augment")) {
      if (j.at("augment").is_null()) c.augment.reset();
      else c.augment = augment_config_from_json(j.at("augment"));
    }
    if (j.contains("early_stop_patience") && !j.at("early_stop_patience").is_null()) {
      c.early_stop_patience = j.at("early_stop_patience").get<int>();
    }
    if (j.contains("checkpoint_dir")) {
      c.checkpoint_dir = j.at("checkpoint_dir").get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid train config JSON: ") + e.what());
  }
  c.validate();
  return c;
}

std::string TrainHistory::to_csv() const {
  std::string out = "epoch,train_loss,val_loss,train_acc,val_acc\n";
  char line[192];
  for (const auto& r : records) {
    std::snprintf(line, sizeof(line), "%d,%.9g,%.9g,%.9g,%.9g\n", r.epoch, r.train_loss,
                  r.val_loss, r.train_acc, r.val_acc);
    out += line;
  }
  return out;
}

void TrainHistory::save_csv(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open history CSV for writing: " + path.string());
  f << to_csv();
  f.flush();
  if (!f) throw IoError("failed writing history CSV: " + path.string());
}

TrainHistory TrainHistory::parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("history CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "epoch,train_loss,val_loss,train_acc,val_acc") {
    throw ValidationError("history CSV line 1: unexpected header '" + line + "'");
  }
  TrainHistory hist;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    EpochRecord r;
    char trailing;
    const int got = std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf%c", &r.epoch, &r.train_loss,
                                &r.val_loss, &r.train_acc, &r.val_acc, &trailing);
    if (got != 5) {
      throw ValidationError("history CSV line " + std::to_string(lineno) + ": malformed row '" +
                            line + "'");
    }
    if (!std::isfinite(r.train_loss) || !std::isfinite(r.val_loss) ||
        !std::isfinite(r.train_acc) || !std::isfinite(r.val_acc)) {
      throw ValidationError("history CSV line " + std::to_string(lineno) +
                            ": non-finite value");
    }
    hist.records.push_back(r);
  }
  if (hist.records.empty()) throw ValidationError("history CSV has a header but no data rows");
  return hist;
}

TrainHistory TrainHistory::load_csv(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open history CSV: " + path.string());
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_csv(text);
}

nlohmann::ordered_json TrainHistory::to_json() const {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["phase"] = r.phase;
    j["train_loss"] = r.train_loss;
    j["val_loss"] = r.val_loss;
    j["train_acc"] = r.train_acc;
    j["val_acc"] = r.val_acc;
    arr.push_back(std::move(j));
  }
  return arr;
}

std::vector<ImageSample> load_split_samples(const DatasetManifest& manifest, Split split) {
  std::vector<ImageSample> out;
  for (const auto& entry : manifest.entries) {
    if (entry.split != split) continue;
    ImageSample s = detail::to_unit(load_sample(entry, manifest.root));
    if (s.needs_grayscale()) {
      PlaneF g = to_grayscale(s.channels);
      s.channels.clear();
      s.channels.push_back(std::move(g));
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace gbm
