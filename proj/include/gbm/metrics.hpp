#pragma once

#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "gbm/image.hpp"
#include "gbm/model.hpp"

namespace gbm {

struct ConfusionMatrix {
  int64_t tp = 0, tn = 0, fp = 0, fn = 0;

  int64_t total() const { return tp + tn + fp + fn; }

  void validate() const {
    if (tp < 0 || tn < 0 || fp < 0 || fn < 0) {
      throw ValidationError("confusion matrix counts must be non-negative");
    }
  }
};

// prediction = 1 iff probability >= threshold.
ConfusionMatrix confusion_matrix(const std::vector<double>& probabilities,
                                 const std::vector<int>& labels, double threshold = 0.5);

// The four ratio metrics throw UndefinedMetricError on a zero denominator;
// callers that render reports convert that into an explicit null + reason.
double accuracy(const ConfusionMatrix& cm);
double precision(const ConfusionMatrix& cm);
double sensitivity(const ConfusionMatrix& cm);
double f1(const ConfusionMatrix& cm);

// Overlap scores for one class id; both-empty is defined as 1.0.
double dice(const SegmentationMask& pred, const SegmentationMask& truth, int class_id);
double iou(const SegmentationMask& pred, const SegmentationMask& truth, int class_id);

// A metric that may be undefined; `reason` explains a missing value.
struct MetricValue {
  std::optional<double> value;
  std::string reason;
};

struct MetricsReport {
  std::string task;  // "classify" | "segment"
  double threshold = 0.5;
  ConfusionMatrix confusion;  // sample-level (classify) or tumor-pixel-level (segment)
  MetricValue accuracy, precision, sensitivity, f1;
  // Segmentation only: micro-averaged over all pixels of the split.
  std::vector<MetricValue> per_class_dice, per_class_iou;
  MetricValue dice, iou;  // tumor class (class id 1)
  int num_samples = 0;
  std::string checkpoint_id;  // filled by callers that know the artifact
  std::string manifest_hash;

  nlohmann::ordered_json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
};

namespace detail {

template <typename F>
MetricValue guarded_metric(F&& fn) {
  MetricValue mv;
  try {
    mv.value = fn();
  } catch (const UndefinedMetricError& e) {
    mv.reason = e.what();
  }
  return mv;
}

}  // namespace detail

MetricsReport report_from_confusion(const ConfusionMatrix& cm, double threshold);

// Batched clean inference over a sample set. Classification thresholds
// sigmoid probabilities; segmentation argmaxes per-pixel logits and
// micro-averages Dice/IoU per class, with the tumor class (1) also scored as
// a pixel-level confusion matrix.
template <typename S>
MetricsReport evaluate_model(Model<S>& model, const std::vector<ImageSample>& samples,
                             double threshold = 0.5, int batch_size = 16) {
  if (samples.empty()) throw ConfigError("evaluate_model: empty split");
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ValidationError("threshold must lie in (0, 1)");
  }
  if (batch_size < 1) throw ConfigError("evaluate_model: batch_size must be >= 1");
  const std::string& task = model.spec().task;
  const int side_h = static_cast<int>(samples[0].height());
  const int side_w = static_cast<int>(samples[0].width());

  std::vector<double> probs;
  std::vector<int> labels;
  const int k = model.spec().num_classes;
  std::vector<int64_t> inter(static_cast<size_t>(k), 0), pred_area(static_cast<size_t>(k), 0),
      true_area(static_cast<size_t>(k), 0);
  ConfusionMatrix pixel_cm;

  for (size_t start = 0; start < samples.size(); start += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(samples.size(), start + static_cast<size_t>(batch_size));
    const int bsz = static_cast<int>(end - start);
    Tensor<S> x(bsz, 1, side_h, side_w);
    for (int i = 0; i < bsz; ++i) {
      const auto& s = samples[start + static_cast<size_t>(i)];
      if (s.height() != side_h || s.width() != side_w) {
        throw ValidationError("evaluate_model: samples have mixed sizes ('" + s.id + "')");
      }
      x.plane(i, 0) = s.gray().template cast<S>();
    }
    auto out = model.forward(make_input(std::move(x)));
    const auto& ov = out->value;
    if (task == "classify") {
      for (int i = 0; i < bsz; ++i) {
        probs.push_back(sigmoid(static_cast<double>(ov.at(i, 0, 0, 0))));
        labels.push_back(samples[start + static_cast<size_t>(i)].label);
      }
    } else {
      for (int i = 0; i < bsz; ++i) {
        const auto& s = samples[start + static_cast<size_t>(i)];
        if (!s.mask) {
          throw ValidationError("evaluate_model: segmentation sample '" + s.id + "' has no mask");
        }
        const auto& truth = *s.mask;
        if (truth.rows() != ov.h || truth.cols() != ov.w) {
          throw ValidationError("evaluate_model: mask size mismatch for '" + s.id + "'");
        }
        for (int r = 0; r < ov.h; ++r) {
          for (int cc = 0; cc < ov.w; ++cc) {
            int best = 0;
            S best_v = ov.at(i, 0, r, cc);
            for (int c2 = 1; c2 < k; ++c2) {
              if (ov.at(i, c2, r, cc) > best_v) {
                best_v = ov.at(i, c2, r, cc);
                best = c2;
              }
            }
            const int t = truth(r, cc);
            if (t < 0 || t >= k) {
              throw ValidationError("evaluate_model: mask class out of range in '" + s.id + "'");
            }
            ++pred_area[static_cast<size_t>(best)];
            ++true_area[static_cast<size_t>(t)];
            if (best == t) ++inter[static_cast<size_t>(best)];
            const bool pt = t == 1, pp = best == 1;
            if (pp && pt) ++pixel_cm.tp;
            else if (pp && !pt) ++pixel_cm.fp;
            else if (!pp && pt) ++pixel_cm.fn;
            else ++pixel_cm.tn;
          }
        }
      }
    }
  }

  MetricsReport rep;
  rep.task = task;
  rep.threshold = threshold;
  rep.num_samples = static_cast<int>(samples.size());
  if (task == "classify") {
    rep.confusion = confusion_matrix(probs, labels, threshold);
    rep.accuracy = detail::guarded_metric([&] { return gbm::accuracy(rep.confusion); });
    rep.precision = detail::guarded_metric([&] { return gbm::precision(rep.confusion); });
    rep.sensitivity = detail::guarded_metric([&] { return gbm::sensitivity(rep.confusion); });
    rep.f1 = detail::guarded_metric([&] { return gbm::f1(rep.confusion); });
  } else {
    rep.confusion = pixel_cm;
    rep.accuracy = detail::guarded_metric([&] { return gbm::accuracy(pixel_cm); });
    rep.precision = detail::guarded_metric([&] { return gbm::precision(pixel_cm); });
    rep.sensitivity = detail::guarded_metric([&] { return gbm::sensitivity(pixel_cm); });
    rep.f1 = detail::guarded_metric([&] { return gbm::f1(pixel_cm); });
    for (int c = 0; c < k; ++c) {
      const int64_t i2 = inter[static_cast<size_t>(c)];
      const int64_t pa = pred_area[static_cast<size_t>(c)], ta = true_area[static_cast<size_t>(c)];
      MetricValue d, j;
      if (pa + ta == 0) {
        d.value = 1.0;
        j.value = 1.0;
      } else {
        d.value = 2.0 * static_cast<double>(i2) / static_cast<double>(pa + ta);
        j.value = static_cast<double>(i2) / static_cast<double>(pa + ta - i2);
      }
      rep.per_class_dice.push_back(d);
      rep.per_class_iou.push_back(j);
    }
    rep.dice = rep.per_class_dice[1];
    rep.iou = rep.per_class_iou[1];
  }
  return rep;
}

}  // namespace gbm
