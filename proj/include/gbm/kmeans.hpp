#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "gbm/errors.hpp"

namespace gbm {

struct KMeansResult {
  Eigen::MatrixXd centroids;  // k x D
  std::vector<int> assignments;
  double inertia = 0.0;
  int iterations = 0;
  std::vector<double> inertia_history;  // one entry per assignment pass, non-increasing
};

// Lloyd's algorithm with k-means++ initialization. Ties assign to the lowest
// centroid index; a cluster that empties is re-seeded to the point currently
// farthest from its own centroid. Deterministic for a given seed.
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, uint64_t seed, int max_iters = 100,
                    double tol = 1e-6);

}  // namespace gbm
