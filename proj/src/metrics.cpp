#include "gbm/metrics.hpp"

namespace gbm {

ConfusionMatrix confusion_matrix(const std::vector<double>& probabilities,
                                 const std::vector<int>& labels, double threshold) {
  if (probabilities.size() != labels.size()) {
    throw ValidationError("confusion_matrix: probability/label length mismatch");
  }
  if (probabilities.empty()) throw ValidationError("confusion_matrix: empty input");
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ValidationError("confusion_matrix: threshold must lie in (0, 1)");
  }
  ConfusionMatrix cm;
  for (size_t i = 0; i < probabilities.size(); ++i) {
    const double p = probabilities[i];
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ValidationError("confusion_matrix: probabilities must lie in [0, 1]");
    }
    if (labels[i] != 0 && labels[i] != 1) {
      throw ValidationError("confusion_matrix: labels must be 0/1");
    }
    const bool pred = p >= threshold;
    if (pred && labels[i] == 1) ++cm.tp;
    else if (pred && labels[i] == 0) ++cm.fp;
    else if (!pred && labels[i] == 1) ++cm.fn;
    else ++cm.tn;
  }
  return cm;
}

double accuracy(const ConfusionMatrix& cm) {
  cm.validate();
  if (cm.total() == 0) throw UndefinedMetricError("accuracy undefined: confusion matrix is empty");
  return static_cast<double>(cm.tn + cm.tp) / static_cast<double>(cm.total());
}

double precision(const ConfusionMatrix& cm) {
  cm.validate();
  if (cm.tp + cm.fp == 0) {
    throw UndefinedMetricError("precision undefined: no positive predictions (tp + fp = 0)");
  }
  return static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
}

double sensitivity(const ConfusionMatrix& cm) {
  cm.validate();
  if (cm.tp + cm.fn == 0) {
    throw UndefinedMetricError("sensitivity undefined: no positive ground truth (tp + fn = 0)");
  }
  return static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
}

double f1(const ConfusionMatrix& cm) {
  cm.validate();
  if (2 * cm.tp + cm.fp + cm.fn == 0) {
    throw UndefinedMetricError("f1 undefined: no positive samples or predictions");
  }
  return 2.0 * static_cast<double>(cm.tp) / static_cast<double>(2 * cm.tp + cm.fp + cm.fn);
}

namespace {

struct Overlap {
  int64_t inter = 0, a = 0, b = 0;
};

Overlap class_overlap(const SegmentationMask& pred, const SegmentationMask& truth, int class_id) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
    throw ValidationError("mask shape mismatch");
  }
  Overlap o;
  for (Eigen::Index r = 0; r < pred.rows(); ++r) {
    for (Eigen::Index c = 0; c < pred.cols(); ++c) {
      const bool pa = pred(r, c) == class_id, pb = truth(r, c) == class_id;
      o.a += pa;
      o.b += pb;
      o.inter += pa && pb;
    }
  }
  return o;
}

}  // namespace

double dice(const SegmentationMask& pred, const SegmentationMask& truth, int class_id) {
  const Overlap o = class_overlap(pred, truth, class_id);
  if (o.a + o.b == 0) return 1.0;
  return 2.0 * static_cast<double>(o.inter) / static_cast<double>(o.a + o.b);
}

double iou(const SegmentationMask& pred, const SegmentationMask& truth, int class_id) {
  const Overlap o = class_overlap(pred, truth, class_id);
  const int64_t uni = o.a + o.b - o.inter;
  if (uni == 0) return 1.0;
  return static_cast<double>(o.inter) / static_cast<double>(uni);
}

MetricsReport report_from_confusion(const ConfusionMatrix& cm, double threshold) {
  MetricsReport rep;
  rep.task = "classify";
  rep.threshold = threshold;
  rep.confusion = cm;
  rep.num_samples = static_cast<int>(cm.total());
  rep.accuracy = detail::guarded_metric([&] { return accuracy(cm); });
  rep.precision = detail::guarded_metric([&] { return precision(cm); });
  rep.sensitivity = detail::guarded_metric([&] { return sensitivity(cm); });
  rep.f1 = detail::guarded_metric([&] { return f1(cm); });
  return rep;
}

namespace {

nlohmann::ordered_json metric_json(const MetricValue& mv) {
  if (mv.value) return *mv.value;
  return nullptr;
}

MetricValue metric_from_json(const nlohmann::json& j, const nlohmann::json& reasons,
                             const std::string& key) {
  MetricValue mv;
  if (!j.is_null()) mv.value = j.get<double>();
  else if (reasons.contains(key)) mv.reason = reasons.at(key).get<std::string>();
  return mv;
}

}  // namespace

nlohmann::ordered_json MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["task"] = task;
  j["threshold"] = threshold;
  j["num_samples"] = num_samples;
  j["confusion"] = {{"tp", confusion.tp}, {"tn", confusion.tn}, {"fp", confusion.fp},
                    {"fn", confusion.fn}};
  j["accuracy"] = metric_json(accuracy);
  j["precision"] = metric_json(precision);
  j["sensitivity"] = metric_json(sensitivity);
  j["f1"] = metric_json(f1);
  nlohmann::ordered_json reasons = nlohmann::ordered_json::object();
  for (const auto& [key, mv] : {std::pair<const char*, const MetricValue&>{"accuracy", accuracy},
                                {"precision", precision},
                                {"sensitivity", sensitivity},
                                {"f1", f1},
                                {"dice", dice},
                                {"iou", iou}}) {
    if (!mv.value && !mv.reason.empty()) reasons[key] = mv.reason;
  }
  if (task == "segment") {
    auto dump_list = [](const std::vector<MetricValue>& vs) {
      nlohmann::ordered_json arr = nlohmann::ordered_json::array();
      for (const auto& v : vs) arr.push_back(metric_json(v));
      return arr;
    };
    j["dice"] = metric_json(dice);
    j["iou"] = metric_json(iou);
    j["per_class_dice"] = dump_list(per_class_dice);
    j["per_class_iou"] = dump_list(per_class_iou);
  }
  if (!reasons.empty()) j["undefined_reasons"] = reasons;
  if (!checkpoint_id.empty()) j["checkpoint"] = checkpoint_id;
  if (!manifest_hash.empty()) j["manifest_hash"] = manifest_hash;
  return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport rep;
  try {
    rep.task = j.at("task").get<std::string>();
    rep.threshold = j.at("threshold").get<double>();
    rep.num_samples = j.at("num_samples").get<int>();
    const auto& cm = j.at("confusion");
    rep.confusion = {cm.at("tp").get<int64_t>(), cm.at("tn").get<int64_t>(),
                     cm.at("fp").get<int64_t>(), cm.at("fn").get<int64_t>()};
    const nlohmann::json reasons =
        j.contains("undefined_reasons") ? j.at("undefined_reasons") : nlohmann::json::object();
    rep.accuracy = metric_from_json(j.at("accuracy"), reasons, "accuracy");
    rep.precision = metric_from_json(j.at("precision"), reasons, "precision");
    rep.sensitivity = metric_from_json(j.at("sensitivity"), reasons, "sensitivity");
    rep.f1 = metric_from_json(j.at("f1"), reasons, "f1");
    if (rep.task == "segment") {
      rep.dice = metric_from_json(j.at("dice"), reasons, "dice");
      rep.iou = metric_from_json(j.at("iou"), reasons, "iou");
      for (const auto& v : j.at("per_class_dice")) {
        rep.per_class_dice.push_back(metric_from_json(v, nlohmann::json::object(), ""));
      }
      for (const auto& v : j.at("per_class_iou")) {
        rep.per_class_iou.push_back(metric_from_json(v, nlohmann::json::object(), ""));
      }
    }
    if (j.contains("checkpoint")) rep.checkpoint_id = j.at("checkpoint").get<std::string>();
    if (j.contains("manifest_hash")) rep.manifest_hash = j.at("manifest_hash").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid metrics report JSON: ") + e.what());
  }
  return rep;
}

}  // namespace gbm
