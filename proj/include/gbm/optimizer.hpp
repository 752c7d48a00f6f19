#pragma once

#include <cmath>
#include <vector>

#include "gbm/nn.hpp"

namespace gbm {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("adam_beta1 must lie in (0, 1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("adam_beta2 must lie in (0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("adam_epsilon must be > 0");
  }
};

// Adam with bias correction. Moments live beside the parameters they track;
// step() consumes whatever gradients have been accumulated since zero_grad.
template <typename S>
class Adam {
 public:
  Adam(std::vector<Param<S>> params, AdamConfig config) : config_(config) {
    config_.validate();
    for (auto& p : params) {
      Slot slot;
      slot.param = std::move(p);
      const Eigen::Index n = slot.param.value().size();
      slot.m = Eigen::Array<S, Eigen::Dynamic, 1>::Zero(n);
      slot.v = Eigen::Array<S, Eigen::Dynamic, 1>::Zero(n);
      slots_.push_back(std::move(slot));
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (auto& slot : slots_) {
      const auto& g = slot.param.grad().data;
      if (!g.isFinite().all()) {
        throw TrainingError("non-finite gradient in parameter '" + slot.param.name + "'");
      }
      const S b1 = static_cast<S>(config_.beta1), b2 = static_cast<S>(config_.beta2);
      slot.m = b1 * slot.m + (S(1) - b1) * g;
      slot.v = b2 * slot.v + (S(1) - b2) * g * g;
      slot.param.value().data -=
          static_cast<S>(config_.learning_rate) *
          (slot.m / static_cast<S>(bc1)) /
          ((slot.v / static_cast<S>(bc2)).sqrt() + static_cast<S>(config_.epsilon));
    }
  }

  void zero_grad() {
    for (auto& slot : slots_) slot.param.grad().setZero();
  }

  int64_t step_count() const { return t_; }

 private:
  struct Slot {
    Param<S> param;
    Eigen::Array<S, Eigen::Dynamic, 1> m, v;
  };
  AdamConfig config_;
  std::vector<Slot> slots_;
  int64_t t_ = 0;
};

}  // namespace gbm
