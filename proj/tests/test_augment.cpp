#include <doctest.h>

#include <random>

#include "gbm/augment.hpp"
#include "support.hpp"

using namespace gbm;

namespace {

PlaneF random_unit_plane(int h, int w, uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  PlaneF p(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) p(r, c) = dist(rng);
  }
  return p;
}

int64_t nonzero_count(const SegmentationMask& m) { return (m != 0).count(); }

}  // namespace

TEST_SUITE("augment") {
  TEST_CASE("rotate by 0 degrees is an exact identity") {
    const PlaneF img = random_unit_plane(9, 9, 1);
    const SegmentationMask m = testsupport::disk_mask(9, 4, 4, 2);
    auto [out, mout] = rotate(img, std::optional<SegmentationMask>(m), 0.0);
    CHECK((out == img).all());
    REQUIRE(mout.has_value());
    CHECK((*mout == m).all());
  }

  TEST_CASE("rotate 90 degrees is the exact right-angle permutation") {
    const int side = 8;
    const PlaneF img = random_unit_plane(side, side, 2);
    SegmentationMask m(side, side);
    for (int r = 0; r < side; ++r) {
      for (int c = 0; c < side; ++c) m(r, c) = (r * side + c) % 5;
    }
    auto [out, mout] = rotate(img, std::optional<SegmentationMask>(m), 90.0);
    REQUIRE(mout.has_value());
    // Input pixel (r, c) lands at output (c, H-1-r), with no interpolation.
    for (int r = 0; r < side; ++r) {
      for (int c = 0; c < side; ++c) {
        CHECK(out(c, side - 1 - r) == img(r, c));
        CHECK((*mout)(c, side - 1 - r) == m(r, c));
      }
    }
  }

  TEST_CASE("rotate 30 then -30 nearly round-trips a smooth image") {
    const PlaneF img = testsupport::smooth_bump_plane(64);
    auto [mid, m1] = rotate(img, std::nullopt, 30.0);
    auto [back, m2] = rotate(mid, std::nullopt, -30.0);
    const double mad = (back - img).abs().mean();
    CHECK(mad < 0.02);
  }

  TEST_CASE("rotate rejects angles beyond 180 degrees") {
    const PlaneF img = random_unit_plane(4, 4, 3);
    CHECK_THROWS_AS(rotate(img, std::nullopt, 180.5), ValidationError);
    CHECK_NOTHROW(rotate(img, std::nullopt, 180.0));
    CHECK_NOTHROW(rotate(img, std::nullopt, -180.0));
  }

  TEST_CASE("scale 1.0 is an exact identity") {
    const PlaneF img = random_unit_plane(11, 11, 4);
    auto [out, mout] = scale(img, std::nullopt, 1.0);
    CHECK((out == img).all());
  }

  TEST_CASE("scale 2.0 grows a centered square's area by about 4x") {
    const int side = 64;
    PlaneF img(side, side);
    img.setZero();
    SegmentationMask m = SegmentationMask::Zero(side, side);
    for (int r = 27; r < 37; ++r) {
      for (int c = 27; c < 37; ++c) {
        img(r, c) = 1.0f;
        m(r, c) = 1;
      }
    }
    const int64_t before = nonzero_count(m);
    auto [out, mout] = scale(img, std::optional<SegmentationMask>(m), 2.0);
    REQUIRE(mout.has_value());
    const int64_t after = nonzero_count(*mout);
    CHECK(after >= static_cast<int64_t>(before * 4 * 0.9));
    CHECK(after <= static_cast<int64_t>(before * 4 * 1.1));
  }

  TEST_CASE("scale 0.5 shrinks content and zero-fills the border ring") {
    const int side = 16;
    PlaneF img(side, side);
    img.setConstant(1.0f);
    auto [out, mout] = scale(img, std::nullopt, 0.5);
    CHECK(out(0, 0) == 0.0f);
    CHECK(out(0, side - 1) == 0.0f);
    CHECK(out(side - 1, 0) == 0.0f);
    CHECK(out(side / 2, side / 2) == doctest::Approx(1.0f));
    CHECK((out != 0.0f).count() < side * side);
  }

  TEST_CASE("scale rejects non-positive factors") {
    const PlaneF img = random_unit_plane(4, 4, 5);
    CHECK_THROWS_AS(scale(img, std::nullopt, 0.0), ValidationError);
    CHECK_THROWS_AS(scale(img, std::nullopt, -2.0), ValidationError);
  }

  TEST_CASE("flip_horizontal matches the 2x2 example and is an involution") {
    PlaneF img(2, 2);
    img << 1, 2, 3, 4;
    auto [out, mout] = flip_horizontal(img, std::nullopt);
    CHECK(out(0, 0) == 2.0f);
    CHECK(out(0, 1) == 1.0f);
    CHECK(out(1, 0) == 4.0f);
    CHECK(out(1, 1) == 3.0f);

    const PlaneF big = random_unit_plane(13, 7, 6);
    const SegmentationMask m = testsupport::disk_mask(13, 5, 2, 2).topRows(13).leftCols(7);
    auto [once, m1] = flip_horizontal(big, std::optional<SegmentationMask>(m));
    auto [twice, m2] = flip_horizontal(once, m1);
    CHECK((twice == big).all());
    REQUIRE(m2.has_value());
    CHECK((*m2 == m).all());
  }

  TEST_CASE("flip_horizontal fixes column-symmetric images") {
    PlaneF img(3, 5);
    img << 1, 2, 3, 2, 1, 4, 5, 6, 5, 4, 7, 8, 9, 8, 7;
    auto [out, mout] = flip_horizontal(img, std::nullopt);
    CHECK((out == img).all());
  }

  TEST_CASE("shear 0 is identity; valid range enforced; shape preserved") {
    const PlaneF img = random_unit_plane(10, 14, 7);
    auto [out, mout] = shear(img, std::nullopt, 0.0);
    CHECK((out == img).all());
    CHECK_THROWS_AS(shear(img, std::nullopt, 45.0), ValidationError);
    CHECK_THROWS_AS(shear(img, std::nullopt, -45.0), ValidationError);
    auto [sheared, sm] = shear(img, std::nullopt, 30.0);
    CHECK(sheared.rows() == 10);
    CHECK(sheared.cols() == 14);
  }

  TEST_CASE("shear displaces a vertical line's endpoints in opposite directions") {
    const int side = 33;
    PlaneF img(side, side);
    img.setZero();
    for (int r = 0; r < side; ++r) img(r, 16) = 1.0f;
    auto [out, mout] = shear(img, std::nullopt, 10.0);

    auto argmax_col = [&](int row) {
      int best = 0;
      for (int c = 1; c < side; ++c) {
        if (out(row, c) > out(row, best)) best = c;
      }
      return best;
    };
    const int top = argmax_col(0);
    const int bottom = argmax_col(side - 1);
    CHECK((top - 16) * (bottom - 16) < 0);  // opposite sides of center
    CHECK(argmax_col(16) == 16);            // center row pinned
  }

  TEST_CASE("add_noise with sigma 0 returns the image unchanged") {
    const PlaneF img = random_unit_plane(6, 6, 8);
    std::mt19937 rng(1);
    const PlaneF out = add_noise(img, 0.0, rng);
    CHECK((out == img).all());
  }

  TEST_CASE("add_noise statistics match sigma on a constant image") {
    PlaneF img(256, 256);
    img.setConstant(0.5f);
    std::mt19937 rng(99);
    const PlaneF out = add_noise(img, 0.02, rng);
    const double mean = out.cast<double>().mean();
    const double stddev = std::sqrt((out.cast<double>() - mean).square().mean());
    CHECK(std::abs(mean - 0.5) < 0.001);
    CHECK(std::abs(stddev - 0.02) < 0.002);
    CHECK(out.minCoeff() >= 0.0f);
    CHECK(out.maxCoeff() <= 1.0f);
  }

  TEST_CASE("add_noise is reproducible for a fixed seed") {
    const PlaneF img = random_unit_plane(16, 16, 9);
    std::mt19937 r1(7), r2(7);
    const PlaneF a = add_noise(img, 0.05, r1);
    const PlaneF b = add_noise(img, 0.05, r2);
    CHECK((a == b).all());
  }

  TEST_CASE("adjust_contrast identity cases and hand example") {
    const PlaneF img = random_unit_plane(5, 5, 10);
    CHECK((adjust_contrast(img, 1.0) == img).all());

    PlaneF constant(4, 4);
    constant.setConstant(0.37f);
    const PlaneF out = adjust_contrast(constant, 3.0);
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) CHECK(out(r, c) == doctest::Approx(0.37f).epsilon(1e-6));
    }

    PlaneF two(1, 2);
    two << 0.4f, 0.6f;
    const PlaneF stretched = adjust_contrast(two, 2.0);
    CHECK(stretched(0, 0) == doctest::Approx(0.3f).epsilon(1e-6));
    CHECK(stretched(0, 1) == doctest::Approx(0.7f).epsilon(1e-6));
  }

  TEST_CASE("adjust_contrast rejects non-positive factors and clamps output") {
    const PlaneF img = random_unit_plane(5, 5, 11);
    CHECK_THROWS_AS(adjust_contrast(img, 0.0), ValidationError);
    const PlaneF out = adjust_contrast(img, 10.0);
    CHECK(out.minCoeff() >= 0.0f);
    CHECK(out.maxCoeff() <= 1.0f);
  }

  TEST_CASE("sample_and_apply with an identity config returns the input exactly") {
    ImageSample s = testsupport::make_disk_sample(32, 0);
    std::mt19937 rng(5);
    const ImageSample out = sample_and_apply(s, AugmentConfig::identity(), rng);
    CHECK((out.channels[0] == s.channels[0]).all());
    REQUIRE(out.mask.has_value());
    CHECK((*out.mask == *s.mask).all());
    CHECK(out.label == s.label);
  }

  TEST_CASE("sample_and_apply is reproducible for a fixed seed") {
    ImageSample s = testsupport::make_disk_sample(32, 1);
    AugmentConfig cfg;
    std::mt19937 r1(123), r2(123);
    const ImageSample a = sample_and_apply(s, cfg, r1);
    const ImageSample b = sample_and_apply(s, cfg, r2);
    CHECK((a.channels[0] == b.channels[0]).all());
    CHECK((*a.mask == *b.mask).all());
  }

  TEST_CASE("default augmentations keep the mask area within 30 percent") {
    ImageSample s = testsupport::make_disk_sample(64, 2);
    const int64_t base = nonzero_count(*s.mask);
    AugmentConfig cfg;
    for (uint32_t seed = 0; seed < 100; ++seed) {
      std::mt19937 rng(seed);
      const ImageSample out = sample_and_apply(s, cfg, rng);
      REQUIRE(out.mask.has_value());
      const int64_t area = nonzero_count(*out.mask);
      CHECK(area >= static_cast<int64_t>(base * 0.7));
      CHECK(area <= static_cast<int64_t>(base * 1.3));
      CHECK(out.label == s.label);
      CHECK(out.channels[0].minCoeff() >= 0.0f);
      CHECK(out.channels[0].maxCoeff() <= 1.0f);
      CHECK(out.channels[0].rows() == 64);
      CHECK(out.channels[0].cols() == 64);
    }
  }

  TEST_CASE("labels survive 1000 random augmentations") {
    ImageSample yes = testsupport::make_disk_sample(24, 3);
    ImageSample no = testsupport::make_blob_sample(24, 4, 0);
    AugmentConfig cfg;
    for (uint32_t seed = 0; seed < 500; ++seed) {
      std::mt19937 r1(seed), r2(seed + 1000);
      CHECK(sample_and_apply(yes, cfg, r1).label == 1);
      CHECK(sample_and_apply(no, cfg, r2).label == 0);
    }
  }

  TEST_CASE("geometric ops commute with mask binarization") {
    // Nearest-neighbor mask warping never invents labels: warping a binary
    // mask then thresholding equals thresholding then warping.
    const int side = 32;
    const SegmentationMask m = testsupport::disk_mask(side, 14, 17, 6);
    const PlaneF img = testsupport::smooth_bump_plane(side);
    for (double deg : {17.0, -41.0, 90.0}) {
      auto [o1, m1] = rotate(img, std::optional<SegmentationMask>(m), deg);
      REQUIRE(m1.has_value());
      CHECK(((*m1 == 0) || (*m1 == 1)).all());
    }
    auto [o2, m2] = scale(img, std::optional<SegmentationMask>(m), 1.37);
    REQUIRE(m2.has_value());
    CHECK(((*m2 == 0) || (*m2 == 1)).all());
    auto [o3, m3] = shear(img, std::optional<SegmentationMask>(m), 12.0);
    REQUIRE(m3.has_value());
    CHECK(((*m3 == 0) || (*m3 == 1)).all());
  }

  TEST_CASE("augment config validation") {
    AugmentConfig cfg;
    cfg.rotation_max_deg = 181.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = AugmentConfig{};
    cfg.scale_range = {1.2, 0.9};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = AugmentConfig{};
    cfg.flip_horizontal_prob = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = AugmentConfig{};
    cfg.shear_max_deg = 45.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = AugmentConfig{};
    cfg.noise_sigma = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK_NOTHROW(AugmentConfig{}.validate());
    CHECK_NOTHROW(AugmentConfig::identity().validate());
  }
}
