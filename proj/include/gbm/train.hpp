#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <json.hpp>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gbm/augment.hpp"
#include "gbm/checkpoint.hpp"
#include "gbm/dataset.hpp"
#include "gbm/model.hpp"
#include "gbm/optimizer.hpp"

namespace gbm {

nlohmann::ordered_json augment_config_to_json(const AugmentConfig& c);
AugmentConfig augment_config_from_json(const nlohmann::json& j);

struct TrainConfig {
  int epochs = 50;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  uint64_t seed = 0;
  std::optional<AugmentConfig> augment = AugmentConfig{};  // train split only; nullopt disables
  std::optional<int> early_stop_patience;                  // epochs without val-loss improvement
  std::filesystem::path checkpoint_dir;                    // empty: no checkpoints written

  void validate() const {
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    AdamConfig{learning_rate, adam_beta1, adam_beta2, adam_epsilon}.validate();
    if (augment) augment->validate();
    if (early_stop_patience && *early_stop_patience < 1) {
      throw ConfigError("early_stop_patience must be >= 1 when set");
    }
  }

  AdamConfig adam() const { return {learning_rate, adam_beta1, adam_beta2, adam_epsilon}; }

  nlohmann::ordered_json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochRecord {
  int epoch = 0;  // 1-based, cumulative across fine-tune phases
  double train_loss = 0, val_loss = 0, train_acc = 0, val_acc = 0;
  int phase = 0;  // 0 = initial training; increments per fine-tune round
};

struct TrainHistory {
  std::vector<EpochRecord> records;

  void append(const TrainHistory& other) {
    records.insert(records.end(), other.records.begin(), other.records.end());
  }

  std::string to_csv() const;
  void save_csv(const std::filesystem::path& path) const;
  static TrainHistory parse_csv(const std::string& text);
  static TrainHistory load_csv(const std::filesystem::path& path);

  nlohmann::ordered_json to_json() const;  // includes the phase marker per record
};

// Mean of −[y·ln p + (1−y)·ln(1−p)] with p clamped to [eps, 1−eps].
inline double bce_loss(const std::vector<double>& probabilities, const std::vector<int>& targets,
                       double eps = 1e-7) {
  if (probabilities.size() != targets.size()) {
    throw ValidationError("bce_loss: probability/target length mismatch");
  }
  if (probabilities.empty()) throw ValidationError("bce_loss: empty input");
  double total = 0.0;
  for (size_t i = 0; i < probabilities.size(); ++i) {
    if (targets[i] != 0 && targets[i] != 1) throw ValidationError("bce_loss: targets must be 0/1");
    const double p = std::min(std::max(probabilities[i], eps), 1.0 - eps);
    total += targets[i] ? -std::log(p) : -std::log(1.0 - p);
  }
  return total / static_cast<double>(probabilities.size());
}

namespace detail {

// Rescales a stored 0..255 sample to the unit interval when needed.
inline ImageSample to_unit(ImageSample s) {
  if (!s.normalized) {
    for (auto& ch : s.channels) ch /= 255.0f;
    s.normalized = true;
  }
  return s;
}

template <typename S>
struct CleanStats {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Inference pass without augmentation: mean loss plus sample accuracy
// (classification) or pixel accuracy (segmentation).
template <typename S>
CleanStats<S> clean_pass(Model<S>& model, const std::vector<ImageSample>& set, int batch_size) {
  const std::string& task = model.spec().task;
  double loss_sum = 0.0;
  int64_t denominator = 0;
  int64_t correct = 0, units = 0;
  for (size_t start = 0; start < set.size(); start += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(set.size(), start + static_cast<size_t>(batch_size));
    const int bsz = static_cast<int>(end - start);
    Tensor<S> x(bsz, 1, static_cast<int>(set[start].height()),
                static_cast<int>(set[start].width()));
    std::vector<int> labels;
    std::vector<SegmentationMask> masks;
    for (int i = 0; i < bsz; ++i) {
      const auto& s = set[start + static_cast<size_t>(i)];
      x.plane(i, 0) = s.gray().template cast<S>();
      labels.push_back(s.label);
      if (task == "segment") masks.push_back(*s.mask);
    }
    auto out = model.forward(make_input(std::move(x)));
    NodePtr<S> loss = task == "classify" ? bce_with_logits(out, labels)
                                         : softmax_cross_entropy(out, masks);
    loss_sum += loss->scalar * bsz;
    denominator += bsz;
    const auto& ov = out->value;
    if (task == "classify") {
      for (int i = 0; i < bsz; ++i) {
        const int pred = sigmoid(static_cast<double>(ov.at(i, 0, 0, 0))) >= 0.5 ? 1 : 0;
        correct += pred == labels[static_cast<size_t>(i)];
        ++units;
      }
    } else {
      for (int i = 0; i < bsz; ++i) {
        for (int r = 0; r < ov.h; ++r) {
          for (int cc = 0; cc < ov.w; ++cc) {
            int best = 0;
            S bv = ov.at(i, 0, r, cc);
            for (int c2 = 1; c2 < ov.c; ++c2) {
              if (ov.at(i, c2, r, cc) > bv) {
                bv = ov.at(i, c2, r, cc);
                best = c2;
              }
            }
            correct += best == masks[static_cast<size_t>(i)](r, cc);
            ++units;
          }
        }
      }
    }
  }
  return {loss_sum / static_cast<double>(denominator),
          static_cast<double>(correct) / static_cast<double>(units)};
}

template <typename S>
void validate_training_set(const Model<S>& model, const std::vector<ImageSample>& set,
                           const char* which) {
  if (set.empty()) throw ConfigError(std::string("training: ") + which + " split is empty");
  const auto h = set[0].height(), w = set[0].width();
  for (const auto& s : set) {
    if (s.channels.size() != 1) {
      throw ValidationError("training: sample '" + s.id + "' is not single-channel grayscale");
    }
    if (!s.normalized) {
      throw ValidationError("training: sample '" + s.id + "' is not unit-interval normalized");
    }
    if (s.height() != h || s.width() != w) {
      throw ValidationError("training: sample '" + s.id + "' size differs from the rest");
    }
    if (model.spec().task == "segment") {
      if (!s.mask) throw ValidationError("training: segmentation sample '" + s.id + "' lacks a mask");
      if (s.mask->rows() != h || s.mask->cols() != w) {
        throw ValidationError("training: mask size mismatch for sample '" + s.id + "'");
      }
    } else if (s.label != 0 && s.label != 1) {
      throw ValidationError("training: sample '" + s.id + "' has a non-binary label");
    }
  }
}

}  // namespace detail

// Core loop shared by train and fine_tune. Shuffled mini-batches with
// per-sample seeded online augmentation (train split only), per-epoch clean
// evaluation of both splits, per-epoch + best-validation checkpoints, and
// optional early stopping on validation loss.
template <typename S>
TrainHistory run_training(Model<S>& model, const std::vector<ImageSample>& train_set,
                          const std::vector<ImageSample>& val_set, const TrainConfig& config,
                          int phase = 0, int start_epoch = 0) {
  config.validate();
  detail::validate_training_set(model, train_set, "train");
  detail::validate_training_set(model, val_set, "validation");
  const std::string& task = model.spec().task;

  Adam<S> opt(model.params(), config.adam());
  std::mt19937 shuffle_rng(
      static_cast<uint32_t>(derive_seed(config.seed, "epoch-shuffle", phase, 0)));
  if (!config.checkpoint_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(config.checkpoint_dir, ec);
    if (ec) throw IoError("cannot create checkpoint dir: " + config.checkpoint_dir.string());
  }

  TrainHistory history;
  double best_val = std::numeric_limits<double>::infinity();
  int epochs_since_best = 0;

  std::vector<size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), size_t{0});

  for (int e = 0; e < config.epochs; ++e) {
    const int epoch = start_epoch + e + 1;
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    int64_t seen = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
      const int bsz = static_cast<int>(end - start);
      std::vector<ImageSample> batch;
      batch.reserve(static_cast<size_t>(bsz));
      for (size_t i = start; i < end; ++i) {
        const size_t si = order[i];
        if (config.augment) {
          // Seed depends on (epoch, sample), not batch order, so batching
          // strategy cannot change the augmentation stream.
          std::mt19937 arng(static_cast<uint32_t>(
              derive_seed(config.seed, "augment", static_cast<uint64_t>(epoch), si)));
          batch.push_back(sample_and_apply(train_set[si], *config.augment, arng));
        } else {
          batch.push_back(train_set[si]);
        }
      }
      Tensor<S> x(bsz, 1, static_cast<int>(batch[0].height()),
                  static_cast<int>(batch[0].width()));
      std::vector<int> labels;
      std::vector<SegmentationMask> masks;
      for (int i = 0; i < bsz; ++i) {
        x.plane(i, 0) = batch[static_cast<size_t>(i)].gray().template cast<S>();
        labels.push_back(batch[static_cast<size_t>(i)].label);
        if (task == "segment") masks.push_back(*batch[static_cast<size_t>(i)].mask);
      }
      model.zero_grad();
      auto out = model.forward(make_input(std::move(x)));
      NodePtr<S> loss = task == "classify" ? bce_with_logits(out, labels)
                                           : softmax_cross_entropy(out, masks);
      if (!std::isfinite(loss->scalar)) {
        throw TrainingError("training aborted at epoch " + std::to_string(epoch) +
                            ": non-finite loss (last good checkpoint retained)");
      }
      backward(loss);
      opt.step();
      loss_sum += loss->scalar * bsz;
      seen += bsz;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.phase = phase;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    const auto train_stats = detail::clean_pass(model, train_set, config.batch_size);
    const auto val_stats = detail::clean_pass(model, val_set, config.batch_size);
    rec.train_acc = train_stats.accuracy;
    rec.val_loss = val_stats.loss;
    rec.val_acc = val_stats.accuracy;
    if (!std::isfinite(rec.val_loss) || !std::isfinite(rec.train_loss)) {
      throw TrainingError("training aborted at epoch " + std::to_string(epoch) +
                          ": non-finite epoch metrics (last good checkpoint retained)");
    }
    history.records.push_back(rec);

    if (!config.checkpoint_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch-%04d.ckpt", epoch);
      save_checkpoint(config.checkpoint_dir / name, model, epoch);
    }
    if (rec.val_loss < best_val) {
      best_val = rec.val_loss;
      epochs_since_best = 0;
      if (!config.checkpoint_dir.empty()) {
        save_checkpoint(config.checkpoint_dir / "best.ckpt", model, epoch);
      }
    } else {
      ++epochs_since_best;
    }
    if (config.early_stop_patience && epochs_since_best >= *config.early_stop_patience) break;
  }
  return history;
}

template <typename S>
TrainHistory train(Model<S>& model, const std::vector<ImageSample>& train_set,
                   const std::vector<ImageSample>& val_set, const TrainConfig& config) {
  return run_training(model, train_set, val_set, config, /*phase=*/0, /*start_epoch=*/0);
}

// Continues from already-trained parameters with fresh optimizer state and a
// phase marker in the history; trained_epochs is the precondition witness.
template <typename S>
TrainHistory fine_tune(Model<S>& model, int trained_epochs,
                       const std::vector<ImageSample>& train_set,
                       const std::vector<ImageSample>& val_set, const TrainConfig& config,
                       int phase = 1) {
  if (trained_epochs < 1) {
    throw ValidationError("fine_tune requires a previously trained model (trained_epochs >= 1)");
  }
  if (phase < 1) throw ValidationError("fine_tune phase must be >= 1");
  return run_training(model, train_set, val_set, config, phase, trained_epochs);
}

// Loads a manifest split from disk as unit-interval grayscale samples.
std::vector<ImageSample> load_split_samples(const DatasetManifest& manifest, Split split);

template <typename S>
TrainHistory train(Model<S>& model, const DatasetManifest& manifest, const TrainConfig& config) {
  return train(model, load_split_samples(manifest, Split::train),
               load_split_samples(manifest, Split::validation), config);
}

}  // namespace gbm
