#pragma once

#include "soar/types.hpp"

#include <cstdint>
#include <vector>

namespace soar::detail {

struct LloydResult {
  RowMatrixXd centers;
  std::vector<double> objective;
  int iterations = 0;
  bool converged = false;
};

/// k-means++ seeding followed by Lloyd iterations. `k` may exceed the number
/// of distinct rows, in which case some centers are duplicates.
LloydResult lloyd(const RowMatrixXd& points, Index k, int max_iters, std::uint64_t seed);

/// Nearest-center index per row using ||x||^2 - 2<x,c> + ||c||^2; ties to the
/// lower center index. Writes the exact squared distance (recomputed directly)
/// into `distance` when non-null.
void nearest_centers(const RowMatrixXd& points, const RowMatrixXd& centers,
                     std::vector<PartitionId>& assignment, std::vector<double>* distance);

}  // namespace soar::detail
