#pragma once

// Shared fixtures and independent oracles for the test suite. Everything in
// here is deliberately naive: the oracles recompute results with the most
// direct formulation available so the optimized library paths are checked
// against something that cannot share their bugs.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gbm/dataset.hpp"
#include "gbm/image.hpp"
#include "gbm/image_io.hpp"
#include "gbm/nn.hpp"
#include "gbm/tensor.hpp"

namespace testsupport {

namespace fs = std::filesystem;

// Unique scratch directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "gbmtest") {
    static std::atomic<uint64_t> counter{0};
    const auto base = fs::temp_directory_path();
    path_ = base / (tag + "-" + std::to_string(::getpid()) + "-" +
                    std::to_string(counter.fetch_add(1)));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

inline std::string read_file_bytes(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// ---- synthetic images -------------------------------------------------------

// Circle of `inside` intensity on an `outside` field. Values are raw 0..255
// unless the caller passes unit-interval levels.
inline gbm::PlaneF disk_plane(int side, double cy, double cx, double radius, float inside,
                              float outside) {
  gbm::PlaneF p(side, side);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      const double dy = r - cy, dx = c - cx;
      p(r, c) = (dy * dy + dx * dx <= radius * radius) ? inside : outside;
    }
  }
  return p;
}

inline gbm::SegmentationMask disk_mask(int side, double cy, double cx, double radius,
                                       int cls = 1) {
  gbm::SegmentationMask m = gbm::SegmentationMask::Zero(side, side);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      const double dy = r - cy, dx = c - cx;
      if (dy * dy + dx * dx <= radius * radius) m(r, c) = cls;
    }
  }
  return m;
}

// Unit-interval sample with a bright disk and its matching 0/1 mask. The
// index moves the disk around deterministically so samples differ.
inline gbm::ImageSample make_disk_sample(int side, int index, bool normalized = true) {
  std::mt19937 rng(0xd15cu + static_cast<uint32_t>(index));
  std::uniform_real_distribution<double> center(side * 0.3, side * 0.7);
  std::uniform_real_distribution<double> rad(side * 0.12, side * 0.2);
  const double cy = center(rng), cx = center(rng), radius = rad(rng);
  gbm::ImageSample s;
  s.id = "disk" + std::to_string(index);
  s.path = s.id + ".png";
  s.label = 1;
  s.normalized = normalized;
  const float hi = normalized ? 0.9f : 230.0f;
  const float lo = normalized ? 0.1f : 25.0f;
  s.channels.push_back(disk_plane(side, cy, cx, radius, hi, lo));
  s.mask = disk_mask(side, cy, cx, radius);
  return s;
}

// Classification pair: label 1 is a bright blob, label 0 is a dark field with
// mild texture. Unit interval.
inline gbm::ImageSample make_blob_sample(int side, int index, int label) {
  std::mt19937 rng(0xb10bu + static_cast<uint32_t>(index) * 2654435761u +
                   static_cast<uint32_t>(label));
  std::uniform_real_distribution<float> noise(0.0f, 0.15f);
  gbm::ImageSample s;
  s.id = std::string(label ? "yes" : "no") + std::to_string(index);
  s.path = s.id + ".png";
  s.label = label;
  s.normalized = true;
  gbm::PlaneF p(side, side);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) p(r, c) = 0.1f + noise(rng);
  }
  if (label == 1) {
    std::uniform_real_distribution<double> center(side * 0.3, side * 0.7);
    const double cy = center(rng), cx = center(rng);
    const double radius = side * 0.18;
    for (int r = 0; r < side; ++r) {
      for (int c = 0; c < side; ++c) {
        const double dy = r - cy, dx = c - cx;
        if (dy * dy + dx * dx <= radius * radius) p(r, c) = 0.85f;
      }
    }
  }
  s.channels.push_back(std::move(p));
  s.mask = gbm::SegmentationMask::Zero(side, side);
  return s;
}

// Writes a scannable dataset tree: root/yes, root/no, root/masks/{yes,no}.
// Tumor images carry a disk; normals are textured noise. Returns image count.
inline int write_dataset_tree(const fs::path& root, int n_yes, int n_no, int side) {
  fs::create_directories(root / "yes");
  fs::create_directories(root / "no");
  fs::create_directories(root / "masks" / "yes");
  fs::create_directories(root / "masks" / "no");
  char name[32];
  for (int i = 0; i < n_yes; ++i) {
    std::snprintf(name, sizeof(name), "img%03d.png", i);
    gbm::ImageSample s = make_disk_sample(side, i, /*normalized=*/false);
    gbm::write_png_gray(root / "yes" / name, s.channels[0]);
    gbm::write_png_mask(root / "masks" / "yes" / name, *s.mask);
  }
  for (int i = 0; i < n_no; ++i) {
    std::snprintf(name, sizeof(name), "img%03d.png", i);
    gbm::ImageSample s = make_blob_sample(side, i, 0);
    gbm::PlaneF raw = s.channels[0] * 255.0f;
    gbm::write_png_gray(root / "no" / name, raw);
    gbm::write_png_mask(root / "masks" / "no" / name,
                        gbm::SegmentationMask::Zero(side, side));
  }
  return n_yes + n_no;
}

// ---- oracles ----------------------------------------------------------------

// Direct quadruple-loop convolution; no im2col, no GEMM.
template <typename S>
gbm::Tensor<S> naive_conv2d(const gbm::Tensor<S>& x, const gbm::Tensor<S>& w,
                            const gbm::Tensor<S>* bias, int stride, int pad, int dil) {
  const int k = w.h;
  const int eff = dil * (k - 1) + 1;
  const int oh = (x.h + 2 * pad - eff) / stride + 1;
  const int ow = (x.w + 2 * pad - eff) / stride + 1;
  gbm::Tensor<S> y(x.n, w.n, oh, ow);
  for (int ni = 0; ni < x.n; ++ni) {
    for (int oc = 0; oc < w.n; ++oc) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          double acc = bias ? static_cast<double>(bias->data[oc]) : 0.0;
          for (int ic = 0; ic < x.c; ++ic) {
            for (int ky = 0; ky < k; ++ky) {
              const int sy = oy * stride - pad + ky * dil;
              if (sy < 0 || sy >= x.h) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int sx = ox * stride - pad + kx * dil;
                if (sx < 0 || sx >= x.w) continue;
                acc += static_cast<double>(x.at(ni, ic, sy, sx)) *
                       static_cast<double>(w.at(oc, ic, ky, kx));
              }
            }
          }
          y.at(ni, oc, oy, ox) = static_cast<S>(acc);
        }
      }
    }
  }
  return y;
}

// Central-difference gradient check in double precision. `make_loss` must
// build a fresh tape each call and return the loss node; the analytic
// gradient comes from one backward pass, the numeric one from re-evaluating
// the loss at theta +/- h. Checks `picks` parameter entries chosen by `rng`.
struct GradCheck {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  int checked = 0;
};

inline GradCheck check_gradients(const std::vector<gbm::Param<double>>& params,
                                 const std::function<gbm::NodePtr<double>()>& make_loss,
                                 int picks, std::mt19937& rng, double h = 1e-5,
                                 double denom_floor = 1e-3) {
  for (const auto& p : params) p.grad().setZero();
  auto loss = make_loss();
  gbm::backward(loss);

  GradCheck result;
  std::uniform_int_distribution<size_t> pick_param(0, params.size() - 1);
  for (int i = 0; i < picks; ++i) {
    const auto& p = params[pick_param(rng)];
    if (p.value().size() == 0) continue;
    std::uniform_int_distribution<Eigen::Index> pick_elem(0, p.value().size() - 1);
    const Eigen::Index e = pick_elem(rng);
    const double analytic = p.grad().data[e];

    double* slot = &p.value().data[e];
    const double orig = *slot;
    *slot = orig + h;
    const double lp = make_loss()->scalar;
    *slot = orig - h;
    const double lm = make_loss()->scalar;
    *slot = orig;
    const double numeric = (lp - lm) / (2.0 * h);

    // The floor turns the relative test into an absolute one for tiny
    // gradients, where central differences are dominated by cancellation.
    const double denom = std::max({std::abs(analytic), std::abs(numeric), denom_floor});
    result.max_rel_err = std::max(result.max_rel_err, std::abs(analytic - numeric) / denom);
    result.max_abs_err = std::max(result.max_abs_err, std::abs(analytic - numeric));
    ++result.checked;
  }
  return result;
}

// Exhaustive optimal 2-means inertia over all nonempty bipartitions.
inline double brute_force_kmeans2(const Eigen::MatrixXd& points) {
  const int n = static_cast<int>(points.rows());
  double best = std::numeric_limits<double>::infinity();
  for (uint32_t mask = 1; mask + 1 < (1u << n); ++mask) {
    Eigen::RowVectorXd c0 = Eigen::RowVectorXd::Zero(points.cols());
    Eigen::RowVectorXd c1 = Eigen::RowVectorXd::Zero(points.cols());
    int n0 = 0, n1 = 0;
    for (int i = 0; i < n; ++i) {
      if (mask & (1u << i)) {
        c1 += points.row(i);
        ++n1;
      } else {
        c0 += points.row(i);
        ++n0;
      }
    }
    c0 /= n0;
    c1 /= n1;
    double inertia = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto& c = (mask & (1u << i)) ? c1 : c0;
      inertia += (points.row(i) - c).squaredNorm();
    }
    best = std::min(best, inertia);
  }
  return best;
}

// Dice overlap between two 0/1 masks for class 1 computed the long way.
inline double naive_dice(const gbm::SegmentationMask& a, const gbm::SegmentationMask& b) {
  int64_t inter = 0, asum = 0, bsum = 0;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      const bool av = a(r, c) == 1, bv = b(r, c) == 1;
      inter += av && bv;
      asum += av;
      bsum += bv;
    }
  }
  if (asum + bsum == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(asum + bsum);
}

// Smooth radial gradient that fades toward the border, so the zero-fill
// annulus introduced by rotation round-trips carries almost no intensity.
inline gbm::PlaneF smooth_bump_plane(int side) {
  gbm::PlaneF p(side, side);
  const double cy = (side - 1) / 2.0, cx = (side - 1) / 2.0;
  const double denom = 2.0 * std::pow(side / 4.0, 2);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      const double d2 = (r - cy) * (r - cy) + (c - cx) * (c - cx);
      p(r, c) = static_cast<float>(0.8 * std::exp(-d2 / denom));
    }
  }
  return p;
}

}  // namespace testsupport
