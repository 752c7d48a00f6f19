#include "gbm/plot.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <unordered_map>

#include "gbm/image_io.hpp"

namespace gbm {

namespace {

// 5x7 uppercase bitmap font; each row is 5 bits, MSB on the left.
const std::unordered_map<char, std::array<uint8_t, 7>>& font() {
  static const std::unordered_map<char, std::array<uint8_t, 7>> glyphs = {
      {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
      {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
      {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
      {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
      {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
      {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
      {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
      {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
      {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
      {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
      {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
      {'D', {0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E}},
      {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
      {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
      {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
      {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
      {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
      {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
      {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
      {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
      {'N', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}},
      {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
      {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
      {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
      {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
      {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
      {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
      {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
      {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
      {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x1B, 0x11}},
      {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
      {'Y', {0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04}},
      {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
      {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
      {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
      {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}},
      {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
  };
  return glyphs;
}

struct Canvas {
  RgbImage img;

  Canvas(int w, int h) {
    img.width = w;
    img.height = h;
    img.data.assign(static_cast<size_t>(w) * h * 3, 255);
  }

  void put(int x, int y, unsigned char r, unsigned char g, unsigned char b) {
    if (x < 0 || x >= img.width || y < 0 || y >= img.height) return;
    img.at(y, x, 0) = r;
    img.at(y, x, 1) = g;
    img.at(y, x, 2) = b;
  }

  void rect(int x0, int y0, int x1, int y1, unsigned char r, unsigned char g, unsigned char b) {
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) put(x, y, r, g, b);
    }
  }

  void line(int x0, int y0, int x1, int y1, unsigned char r, unsigned char g, unsigned char b) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      put(x0, y0, r, g, b);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  void marker(int x, int y, unsigned char r, unsigned char g, unsigned char b) {
    rect(x - 1, y - 1, x + 1, y + 1, r, g, b);
  }

  void text(int x, int y, std::string s, int scale, unsigned char r, unsigned char g,
            unsigned char b) {
    for (auto& ch : s) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    int cx = x;
    const auto& glyphs = font();
    for (char ch : s) {
      auto it = glyphs.find(ch);
      if (it == glyphs.end()) it = glyphs.find(' ');
      for (int row = 0; row < 7; ++row) {
        for (int col = 0; col < 5; ++col) {
          if (!((it->second[static_cast<size_t>(row)] >> (4 - col)) & 1)) continue;
          rect(cx + col * scale, y + row * scale, cx + col * scale + scale - 1,
               y + row * scale + scale - 1, r, g, b);
        }
      }
      cx += 6 * scale;
    }
  }

  static int text_width(const std::string& s, int scale) {
    return static_cast<int>(s.size()) * 6 * scale - scale;
  }
};

struct Rgb {
  unsigned char r, g, b;
};
constexpr Rgb kBlack{20, 20, 20};
constexpr Rgb kGrid{220, 220, 220};
constexpr Rgb kTrain{38, 110, 210};
constexpr Rgb kVal{210, 70, 50};

struct PanelLayout {
  int left, top, right, bottom;
  int plot_w() const { return right - left; }
  int plot_h() const { return bottom - top; }
};

std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

void draw_panel(Canvas& cv, const PanelLayout& p, const std::string& label,
                const TrainHistory& hist, double lo, double hi,
                double (*train_of)(const EpochRecord&), double (*val_of)(const EpochRecord&)) {
  const int n = static_cast<int>(hist.records.size());
  const int first_epoch = hist.records.front().epoch;
  const int last_epoch = hist.records.back().epoch;

  auto x_of = [&](int epoch) {
    if (last_epoch == first_epoch) return p.left + p.plot_w() / 2;
    return p.left + static_cast<int>(std::lround(static_cast<double>(epoch - first_epoch) /
                                                 (last_epoch - first_epoch) * p.plot_w()));
  };
  auto y_of = [&](double v) {
    const double t = (v - lo) / (hi - lo);
    return p.bottom - static_cast<int>(std::lround(t * p.plot_h()));
  };

  // Horizontal grid + y tick labels.
  for (int tick = 0; tick <= 4; ++tick) {
    const double v = lo + (hi - lo) * tick / 4.0;
    const int y = y_of(v);
    cv.line(p.left, y, p.right, y, kGrid.r, kGrid.g, kGrid.b);
    const std::string t = fmt_num(v);
    cv.text(p.left - Canvas::text_width(t, 1) - 8, y - 3, t, 1, kBlack.r, kBlack.g, kBlack.b);
  }
  // X ticks at a readable integer step.
  const int span = std::max(1, last_epoch - first_epoch);
  const int step = std::max(1, (span + 7) / 8);
  for (int epoch = first_epoch; epoch <= last_epoch; epoch += step) {
    const int x = x_of(epoch);
    cv.line(x, p.bottom, x, p.bottom + 4, kBlack.r, kBlack.g, kBlack.b);
    const std::string t = std::to_string(epoch);
    cv.text(x - Canvas::text_width(t, 1) / 2, p.bottom + 7, t, 1, kBlack.r, kBlack.g, kBlack.b);
  }
  // Axes frame.
  cv.line(p.left, p.top, p.left, p.bottom, kBlack.r, kBlack.g, kBlack.b);
  cv.line(p.left, p.bottom, p.right, p.bottom, kBlack.r, kBlack.g, kBlack.b);
  cv.text(p.left, p.top - 14, label, 1, kBlack.r, kBlack.g, kBlack.b);

  // Curves with markers.
  for (int pass = 0; pass < 2; ++pass) {
    const Rgb col = pass == 0 ? kTrain : kVal;
    auto value = pass == 0 ? train_of : val_of;
    for (int i = 0; i < n; ++i) {
      const auto& rec = hist.records[static_cast<size_t>(i)];
      const int x = x_of(rec.epoch), y = y_of(value(rec));
      if (i > 0) {
        const auto& prev = hist.records[static_cast<size_t>(i - 1)];
        cv.line(x_of(prev.epoch), y_of(value(prev)), x, y, col.r, col.g, col.b);
      }
      cv.marker(x, y, col.r, col.g, col.b);
    }
  }
  // Legend, top-right inside the panel.
  const int lx = p.right - 90, ly = p.top + 6;
  cv.line(lx, ly + 3, lx + 16, ly + 3, kTrain.r, kTrain.g, kTrain.b);
  cv.text(lx + 20, ly, "train", 1, kBlack.r, kBlack.g, kBlack.b);
  cv.line(lx, ly + 15, lx + 16, ly + 15, kVal.r, kVal.g, kVal.b);
  cv.text(lx + 20, ly + 12, "val", 1, kBlack.r, kBlack.g, kBlack.b);
}

}  // namespace

PlotInfo render_history_plot(const TrainHistory& history, const std::filesystem::path& out_png) {
  if (history.records.empty()) throw ValidationError("history has no epochs to plot");
  for (size_t i = 1; i < history.records.size(); ++i) {
    if (history.records[i].epoch <= history.records[i - 1].epoch) {
      throw ValidationError("history epochs must be strictly increasing (record " +
                            std::to_string(i + 1) + " has epoch " +
                            std::to_string(history.records[i].epoch) + " after " +
                            std::to_string(history.records[i - 1].epoch) + ")");
    }
  }

  PlotInfo info;
  info.width = 960;
  info.height = 640;
  info.epochs = history.records.back().epoch;
  info.acc_min = 0.0;
  info.acc_max = 1.0;
  double loss_hi = 0.0;
  for (const auto& r : history.records) loss_hi = std::max({loss_hi, r.train_loss, r.val_loss});
  info.loss_min = 0.0;
  info.loss_max = loss_hi > 0.0 ? loss_hi * 1.05 : 1.0;
  const auto& last = history.records.back();
  info.final_train_acc = last.train_acc;
  info.final_val_acc = last.val_acc;
  info.final_train_loss = last.train_loss;
  info.final_val_loss = last.val_loss;

  Canvas cv(info.width, info.height);
  const PanelLayout acc_panel{80, 40, info.width - 30, 290};
  const PanelLayout loss_panel{80, 360, info.width - 30, 590};
  draw_panel(cv, acc_panel, "accuracy", history, info.acc_min, info.acc_max,
             [](const EpochRecord& r) { return r.train_acc; },
             [](const EpochRecord& r) { return r.val_acc; });
  draw_panel(cv, loss_panel, "loss", history, info.loss_min, info.loss_max,
             [](const EpochRecord& r) { return r.train_loss; },
             [](const EpochRecord& r) { return r.val_loss; });
  const std::string xlabel = "epoch";
  cv.text((info.width - Canvas::text_width(xlabel, 2)) / 2, info.height - 24, xlabel, 2, kBlack.r,
          kBlack.g, kBlack.b);

  write_png_rgb(out_png, cv.img);
  return info;
}

PlotInfo render_history_plot(const std::filesystem::path& history_csv,
                             const std::filesystem::path& out_png) {
  return render_history_plot(TrainHistory::load_csv(history_csv), out_png);
}

}  // namespace gbm
