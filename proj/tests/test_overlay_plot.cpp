#include <doctest.h>

#include <cmath>
#include <fstream>

#include "gbm/image_io.hpp"
#include "gbm/overlay.hpp"
#include "gbm/plot.hpp"
#include "support.hpp"

using namespace gbm;
using testsupport::TempDir;

namespace {

unsigned char blend(double unit_value, unsigned char color, double alpha) {
  return static_cast<unsigned char>(
      std::lround((1.0 - alpha) * unit_value * 255.0 + alpha * color));
}

TrainHistory sample_history() {
  TrainHistory h;
  h.records.push_back({1, 0.9, 1.0, 0.55, 0.50, 0});
  h.records.push_back({2, 0.6, 0.8, 0.70, 0.65, 0});
  h.records.push_back({3, 0.4, 0.7, 0.85, 0.75, 0});
  return h;
}

}  // namespace

TEST_SUITE("overlay_plot") {
  TEST_CASE("an empty mask renders the plain grayscale image as RGB") {
    const PlaneF img = testsupport::smooth_bump_plane(24);
    const SegmentationMask mask = SegmentationMask::Zero(24, 24);
    const RgbImage out = render_overlay(img, mask);
    REQUIRE(out.height == 24);
    REQUIRE(out.width == 24);
    for (int r = 0; r < 24; ++r) {
      for (int c = 0; c < 24; ++c) {
        const unsigned char g =
            static_cast<unsigned char>(std::lround(static_cast<double>(img(r, c)) * 255.0));
        CHECK(out.at(r, c, 0) == g);
        CHECK(out.at(r, c, 1) == g);
        CHECK(out.at(r, c, 2) == g);
      }
    }
  }

  TEST_CASE("a full single-class mask tints every pixel with the exact blend") {
    PlaneF img(4, 4);
    img.setConstant(0.5f);
    const SegmentationMask mask = SegmentationMask::Constant(4, 4, 1);
    const RgbImage out = render_overlay(img, mask);
    const ClassColor& red = default_palette()[0];
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) {
        CHECK(out.at(r, c, 0) == blend(0.5, red.r, 0.4));
        CHECK(out.at(r, c, 1) == blend(0.5, red.g, 0.4));
        CHECK(out.at(r, c, 2) == blend(0.5, red.b, 0.4));
      }
    }
  }

  TEST_CASE("exactly the nonzero mask pixels are painted") {
    const PlaneF img = testsupport::disk_plane(32, 16, 16, 6, 0.6f, 0.3f);
    const SegmentationMask mask = testsupport::disk_mask(32, 10, 20, 5, 2);
    const RgbImage out = render_overlay(img, mask);
    for (int r = 0; r < 32; ++r) {
      for (int c = 0; c < 32; ++c) {
        const bool gray =
            out.at(r, c, 0) == out.at(r, c, 1) && out.at(r, c, 1) == out.at(r, c, 2);
        if (mask(r, c) == 0) {
          CHECK(gray);
        } else {
          CHECK_FALSE(gray);  // the blue tint breaks the gray balance
        }
      }
    }
  }

  TEST_CASE("palette cycles past its last color") {
    PlaneF img(1, 1);
    img.setConstant(0.5f);
    const SegmentationMask seven = SegmentationMask::Constant(1, 1, 7);
    const RgbImage a = render_overlay(img, seven);
    const SegmentationMask one = SegmentationMask::Constant(1, 1, 1);
    const RgbImage b = render_overlay(img, one);
    CHECK(a.data == b.data);  // 6-color palette: class 7 wraps to class 1's color
  }

  TEST_CASE("alpha 0 leaves the base image; alpha 1 paints pure color") {
    PlaneF img(2, 2);
    img.setConstant(0.25f);
    const SegmentationMask mask = SegmentationMask::Constant(2, 2, 1);
    const RgbImage keep = render_overlay(img, mask, default_palette(), 0.0);
    const unsigned char g = static_cast<unsigned char>(std::lround(0.25 * 255.0));
    CHECK(keep.at(0, 0, 0) == g);
    CHECK(keep.at(0, 0, 1) == g);
    const RgbImage pure = render_overlay(img, mask, default_palette(), 1.0);
    CHECK(pure.at(1, 1, 0) == default_palette()[0].r);
    CHECK(pure.at(1, 1, 1) == default_palette()[0].g);
    CHECK(pure.at(1, 1, 2) == default_palette()[0].b);
  }

  TEST_CASE("render_overlay validates shapes, palette, alpha, and labels") {
    PlaneF img(4, 4);
    img.setZero();
    CHECK_THROWS_AS(render_overlay(img, SegmentationMask::Zero(4, 5)), ValidationError);
    CHECK_THROWS_AS(render_overlay(img, SegmentationMask::Zero(4, 4), {}), ValidationError);
    CHECK_THROWS_AS(render_overlay(img, SegmentationMask::Zero(4, 4), default_palette(), 1.5),
                    ValidationError);
    CHECK_THROWS_AS(render_overlay(img, SegmentationMask::Constant(4, 4, -1)), ValidationError);
  }

  TEST_CASE("overlay round-trips through PNG bytes") {
    TempDir tmp("ovl");
    const PlaneF img = testsupport::disk_plane(16, 8, 8, 4, 0.8f, 0.2f);
    const RgbImage out = render_overlay(img, testsupport::disk_mask(16, 8, 8, 4));
    const auto path = tmp.path() / "overlay.png";
    write_png_rgb(path, out);
    const std::vector<PlaneF> planes = read_image(path);
    REQUIRE(planes.size() == 3);
    REQUIRE(planes[0].rows() == 16);
    REQUIRE(planes[0].cols() == 16);
    for (int r = 0; r < 16; ++r) {
      for (int c = 0; c < 16; ++c) {
        for (int ch = 0; ch < 3; ++ch) {
          CHECK(planes[static_cast<size_t>(ch)](r, c) == static_cast<float>(out.at(r, c, ch)));
        }
      }
    }
  }

  TEST_CASE("history plot reports axes and final values") {
    TempDir tmp("plot");
    const auto out = tmp.path() / "history.png";
    const PlotInfo info = render_history_plot(sample_history(), out);
    CHECK(info.epochs == 3);
    CHECK(info.acc_min == 0.0);
    CHECK(info.acc_max == 1.0);
    CHECK(info.loss_min == 0.0);
    CHECK(info.loss_max >= 1.0);  // covers the worst observed loss
    CHECK(info.final_train_acc == doctest::Approx(0.85));
    CHECK(info.final_val_acc == doctest::Approx(0.75));
    CHECK(info.final_train_loss == doctest::Approx(0.4));
    CHECK(info.final_val_loss == doctest::Approx(0.7));
    REQUIRE(std::filesystem::exists(out));
    const std::vector<PlaneF> planes = read_image(out);
    REQUIRE(planes.size() == 3);
    CHECK(planes[0].cols() == info.width);
    CHECK(planes[0].rows() == info.height);
    CHECK(info.width > 100);
    // Not every pixel is background: the curves and axes leave ink.
    CHECK(planes[0].minCoeff() < 100.0f);
  }

  TEST_CASE("a single-epoch history still renders") {
    TempDir tmp("plot1");
    TrainHistory h;
    h.records.push_back({1, 0.7, 0.75, 0.6, 0.55, 0});
    const auto out = tmp.path() / "one.png";
    const PlotInfo info = render_history_plot(h, out);
    CHECK(info.epochs == 1);
    CHECK(std::filesystem::exists(out));
  }

  TEST_CASE("plotting from CSV matches plotting from records") {
    TempDir tmp("plotcsv");
    const TrainHistory h = sample_history();
    const auto csv = tmp.path() / "history.csv";
    h.save_csv(csv);
    const auto png_a = tmp.path() / "a.png";
    const auto png_b = tmp.path() / "b.png";
    const PlotInfo ia = render_history_plot(h, png_a);
    const PlotInfo ib = render_history_plot(csv, png_b);
    CHECK(ia.final_val_loss == ib.final_val_loss);
    CHECK(testsupport::read_file_bytes(png_a) == testsupport::read_file_bytes(png_b));
  }

  TEST_CASE("plot rejects an empty history and malformed CSV") {
    TempDir tmp("plotbad");
    const auto out = tmp.path() / "x.png";
    CHECK_THROWS_AS(render_history_plot(TrainHistory{}, out), ValidationError);

    const auto csv = tmp.path() / "bad.csv";
    std::ofstream(csv) << "epoch,train_loss,val_loss,train_acc,val_acc\n1,0.5,oops,0.5,0.5\n";
    CHECK_THROWS_WITH_AS(render_history_plot(csv, out), doctest::Contains("line 2"),
                         ValidationError);
    const auto header_only = tmp.path() / "header.csv";
    std::ofstream(header_only) << "epoch,train_loss,val_loss,train_acc,val_acc\n";
    CHECK_THROWS_AS(render_history_plot(header_only, out), ValidationError);
  }

  TEST_CASE("plot requires strictly increasing epochs") {
    TempDir tmp("plotmono");
    TrainHistory h = sample_history();
    h.records[2].epoch = 2;  // duplicate
    const auto out = tmp.path() / "mono.png";
    CHECK_THROWS_WITH_AS(render_history_plot(h, out), doctest::Contains("strictly increasing"),
                         ValidationError);
    h.records[2].epoch = 1;  // decreasing
    CHECK_THROWS_AS(render_history_plot(h, out), ValidationError);
  }
}
