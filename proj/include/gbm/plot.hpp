#pragma once

#include <filesystem>

#include "gbm/train.hpp"

namespace gbm {

// Facts about a rendered history plot, exposed so tests and callers can
// verify axis ranges and final curve values without decoding the PNG.
struct PlotInfo {
  int width = 0, height = 0;
  int epochs = 0;
  double acc_min = 0.0, acc_max = 1.0;
  double loss_min = 0.0, loss_max = 0.0;
  double final_train_acc = 0.0, final_val_acc = 0.0;
  double final_train_loss = 0.0, final_val_loss = 0.0;
};

// Two stacked panels (accuracy on a fixed [0, 1] axis, loss autoscaled from
// zero) with train/validation curves, ticks, and labels.
PlotInfo render_history_plot(const TrainHistory& history, const std::filesystem::path& out_png);
PlotInfo render_history_plot(const std::filesystem::path& history_csv,
                             const std::filesystem::path& out_png);

}  // namespace gbm
