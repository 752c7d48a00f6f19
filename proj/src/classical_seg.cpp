#include "gbm/classical_seg.hpp"

#include <numeric>
#include <vector>

namespace gbm {

SegmentationMask kmeans_segment(const PlaneF& image, const ConvAutoencoder<float>* encoder, int k,
                                uint64_t seed, double coord_weight) {
  if (k < 2) throw ValidationError("kmeans_segment: k must be >= 2 (1 cluster is vacuous)");
  const Eigen::Index h = image.rows(), w = image.cols();
  if (h < 1 || w < 1) throw ValidationError("kmeans_segment: empty image");
  if (!all_finite(image)) throw ValidationError("kmeans_segment: image has non-finite values");

  int latent = 0;
  std::vector<PlaneF> latent_planes;
  if (encoder) {
    const auto& spec = encoder->spec();
    if (h != spec.input_side || w != spec.input_side) {
      throw ValidationError("kmeans_segment: image size does not match encoder input_side");
    }
    Tensor<float> x(1, 1, static_cast<int>(h), static_cast<int>(w));
    x.plane(0, 0) = image;
    auto z = encoder->encode(make_input(std::move(x)));
    auto up = resize_bilinear(z, static_cast<int>(h), static_cast<int>(w));
    latent = up->value.c;
    for (int c = 0; c < latent; ++c) latent_planes.emplace_back(up->value.plane(0, c));
  }

  const Eigen::Index n = h * w;
  Eigen::MatrixXd points(n, 3 + latent);
  const double side = static_cast<double>(std::max(h, w));
  for (Eigen::Index r = 0; r < h; ++r) {
    for (Eigen::Index c = 0; c < w; ++c) {
      const Eigen::Index i = r * w + c;
      points(i, 0) = static_cast<double>(image(r, c));
      points(i, 1) = coord_weight * static_cast<double>(r) / side;
      points(i, 2) = coord_weight * static_cast<double>(c) / side;
      for (int l = 0; l < latent; ++l) {
        points(i, 3 + l) = static_cast<double>(latent_planes[static_cast<size_t>(l)](r, c));
      }
    }
  }

  const KMeansResult res = kmeans(points, k, seed);

  // Relabel clusters by descending mean intensity: label 0 = brightest.
  std::vector<double> sum(static_cast<size_t>(k), 0.0);
  std::vector<int64_t> count(static_cast<size_t>(k), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto c = static_cast<size_t>(res.assignments[static_cast<size_t>(i)]);
    sum[c] += points(i, 0);
    ++count[c];
  }
  std::vector<int> by_brightness(static_cast<size_t>(k));
  std::iota(by_brightness.begin(), by_brightness.end(), 0);
  std::sort(by_brightness.begin(), by_brightness.end(), [&](int a, int b) {
    const double ma = count[static_cast<size_t>(a)]
                          ? sum[static_cast<size_t>(a)] / count[static_cast<size_t>(a)]
                          : -1.0;
    const double mb = count[static_cast<size_t>(b)]
                          ? sum[static_cast<size_t>(b)] / count[static_cast<size_t>(b)]
                          : -1.0;
    if (ma != mb) return ma > mb;
    return a < b;  // deterministic tiebreak
  });
  std::vector<int> relabel(static_cast<size_t>(k));
  for (int rank = 0; rank < k; ++rank) relabel[static_cast<size_t>(by_brightness[rank])] = rank;

  SegmentationMask mask(h, w);
  for (Eigen::Index r = 0; r < h; ++r) {
    for (Eigen::Index c = 0; c < w; ++c) {
      mask(r, c) = relabel[static_cast<size_t>(res.assignments[static_cast<size_t>(r * w + c)])];
    }
  }
  return mask;
}

SegmentationMask extract_tumor_mask(const SegmentationMask& seg, const PlaneF& image,
                                    int min_area) {
  if (seg.rows() != image.rows() || seg.cols() != image.cols()) {
    throw ValidationError("extract_tumor_mask: segmentation/image shape mismatch");
  }
  if (min_area < 0) throw ValidationError("extract_tumor_mask: min_area must be >= 0");
  const Eigen::Index h = seg.rows(), w = seg.cols();

  // Brightest-mean cluster is the tumor candidate.
  const int k = seg.maxCoeff() + 1;
  std::vector<double> sum(static_cast<size_t>(k), 0.0);
  std::vector<int64_t> count(static_cast<size_t>(k), 0);
  for (Eigen::Index r = 0; r < h; ++r) {
    for (Eigen::Index c = 0; c < w; ++c) {
      const int lab = seg(r, c);
      if (lab < 0) throw ValidationError("extract_tumor_mask: negative class label");
      sum[static_cast<size_t>(lab)] += static_cast<double>(image(r, c));
      ++count[static_cast<size_t>(lab)];
    }
  }
  int tumor = 0, populated = 0;
  double best = -1.0;
  for (int c = 0; c < k; ++c) {
    if (count[static_cast<size_t>(c)] == 0) continue;
    ++populated;
    const double mean = sum[static_cast<size_t>(c)] / count[static_cast<size_t>(c)];
    if (mean > best) {
      best = mean;
      tumor = c;
    }
  }
  // A single populated class means nothing stands out from the background.
  if (populated < 2) return SegmentationMask::Zero(h, w);

  SegmentationMask out = SegmentationMask::Zero(h, w);
  SegmentationMask visited = SegmentationMask::Zero(h, w);
  std::vector<Eigen::Index> stack, component;
  for (Eigen::Index r0 = 0; r0 < h; ++r0) {
    for (Eigen::Index c0 = 0; c0 < w; ++c0) {
      if (seg(r0, c0) != tumor || visited(r0, c0)) continue;
      component.clear();
      stack.assign(1, r0 * w + c0);
      visited(r0, c0) = 1;
      while (!stack.empty()) {
        const Eigen::Index cur = stack.back();
        stack.pop_back();
        component.push_back(cur);
        const Eigen::Index r = cur / w, c = cur % w;
        const Eigen::Index nbr[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
        for (const auto& nb : nbr) {
          if (nb[0] < 0 || nb[0] >= h || nb[1] < 0 || nb[1] >= w) continue;
          if (visited(nb[0], nb[1]) || seg(nb[0], nb[1]) != tumor) continue;
          visited(nb[0], nb[1]) = 1;
          stack.push_back(nb[0] * w + nb[1]);
        }
      }
      if (static_cast<int>(component.size()) >= min_area) {
        for (Eigen::Index idx : component) out(idx / w, idx % w) = 1;
      }
    }
  }
  return out;
}

}  // namespace gbm
