#include "gbm/kmeans.hpp"

#include <cassert>
#include <limits>
#include <random>

#include "gbm/hash.hpp"

namespace gbm {

namespace {

double sq_dist(const Eigen::MatrixXd& points, Eigen::Index i, const Eigen::MatrixXd& centroids,
               Eigen::Index c) {
  return (points.row(i) - centroids.row(c)).squaredNorm();
}

// k-means++: first centroid uniform, then D^2-weighted via inverse CDF over
// the running prefix sum (explicit walk keeps the draw order deterministic).
Eigen::MatrixXd init_plus_plus(const Eigen::MatrixXd& points, int k, std::mt19937& rng) {
  const Eigen::Index n = points.rows();
  Eigen::MatrixXd centroids(k, points.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centroids.row(0) = points.row(first(rng));
  Eigen::VectorXd d2 = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  for (int c = 1; c < k; ++c) {
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_dist(points, i, centroids, c - 1));
    }
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      const double target = std::uniform_real_distribution<double>(0.0, total)(rng);
      double acc = 0.0;
      pick = n - 1;  // numeric slack: fall through to the last point
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = first(rng);  // all points coincide with chosen centroids
    }
    centroids.row(c) = points.row(pick);
  }
  return centroids;
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, uint64_t seed, int max_iters,
                    double tol) {
  const Eigen::Index n = points.rows();
  if (k < 1) throw ValidationError("kmeans: k must be >= 1");
  if (n < k) throw ValidationError("kmeans: need at least k points (" + std::to_string(n) +
                                   " < " + std::to_string(k) + ")");
  if (!points.allFinite()) throw ValidationError("kmeans: points contain non-finite values");
  if (max_iters < 1) throw ValidationError("kmeans: max_iters must be >= 1");

  std::mt19937 rng(static_cast<uint32_t>(derive_seed(seed, "kmeans", 0, 0)));
  KMeansResult res;
  res.centroids = init_plus_plus(points, k, rng);
  res.assignments.assign(static_cast<size_t>(n), 0);

  auto assign_pass = [&]() {
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = sq_dist(points, i, res.centroids, 0);
      int best_c = 0;
      for (int c = 1; c < k; ++c) {
        const double d = sq_dist(points, i, res.centroids, c);
        if (d < best) {  // strict: ties keep the lowest index
          best = d;
          best_c = c;
        }
      }
      res.assignments[static_cast<size_t>(i)] = best_c;
      inertia += best;
    }
    return inertia;
  };

  double prev_inertia = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < max_iters; ++iter) {
    const double inertia = assign_pass();
    assert(inertia <= prev_inertia * (1.0 + 1e-12) + 1e-12 && "kmeans inertia increased");
    res.inertia_history.push_back(inertia);
    res.inertia = inertia;
    res.iterations = iter + 1;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = res.assignments[static_cast<size_t>(i)];
      sums.row(c) += points.row(i);
      counts[c] += 1;
    }
    double movement = 0.0;
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Re-seed to the point farthest from its current centroid; that
        // cluster was empty, so total inertia cannot increase.
        Eigen::Index far = 0;
        double far_d = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double d = sq_dist(points, i, res.centroids,
                                   res.assignments[static_cast<size_t>(i)]);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        movement += (res.centroids.row(c) - points.row(far)).norm();
        res.centroids.row(c) = points.row(far);
        continue;
      }
      const Eigen::RowVectorXd mean = sums.row(c) / counts[c];
      movement += (res.centroids.row(c) - mean).norm();
      res.centroids.row(c) = mean;
    }
    if (movement < tol) break;
    prev_inertia = inertia;
  }
  // Final labels/inertia must describe the final centroids.
  res.inertia = assign_pass();
  if (res.inertia_history.empty() || res.inertia < res.inertia_history.back()) {
    res.inertia_history.push_back(res.inertia);
  } else {
    res.inertia = res.inertia_history.back();
  }
  return res;
}

}  // namespace gbm
