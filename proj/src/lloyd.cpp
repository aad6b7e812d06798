#include "lloyd.hpp"

#include "soar/core.hpp"

#include <algorithm>
#include <limits>
#include <random>

namespace soar::detail {

namespace {

constexpr Index kBlockRows = 4096;

double row_distance(const RowMatrixXd& points, Index i, const RowMatrixXd& centers, Index j) {
  return squared_distance(points.row(i), centers.row(j));
}

// D^2 sampling. Returns -1 when every weight is zero.
Index sample_weighted(const std::vector<double>& weight, std::mt19937_64& rng) {
  double total = 0.0;
  for (double w : weight) total += w;
  if (!(total > 0.0)) return -1;
  const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
  double acc = 0.0;
  Index last_positive = -1;
  for (std::size_t i = 0; i < weight.size(); ++i) {
    if (weight[i] <= 0.0) continue;
    acc += weight[i];
    last_positive = static_cast<Index>(i);
    if (acc > u) return last_positive;
  }
  return last_positive;
}

RowMatrixXd seed_plus_plus(const RowMatrixXd& points, Index k, std::mt19937_64& rng) {
  const Index n = points.rows();
  RowMatrixXd centers(k, points.cols());
  std::uniform_int_distribution<Index> pick(0, n - 1);
  centers.row(0) = points.row(pick(rng));
  std::vector<double> best(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) best[i] = row_distance(points, i, centers, 0);
  for (Index j = 1; j < k; ++j) {
    Index chosen = sample_weighted(best, rng);
    if (chosen < 0) chosen = pick(rng);
    centers.row(j) = points.row(chosen);
    for (Index i = 0; i < n; ++i) best[i] = std::min(best[i], row_distance(points, i, centers, j));
  }
  return centers;
}

}  // namespace

void nearest_centers(const RowMatrixXd& points, const RowMatrixXd& centers,
                     std::vector<PartitionId>& assignment, std::vector<double>* distance) {
  const Index n = points.rows();
  const Index k = centers.rows();
  assignment.resize(static_cast<std::size_t>(n));
  if (distance) distance->resize(static_cast<std::size_t>(n));
  const Eigen::VectorXd center_norms = centers.rowwise().squaredNorm();
  Eigen::MatrixXd block;
  for (Index lo = 0; lo < n; lo += kBlockRows) {
    const Index rows = std::min(kBlockRows, n - lo);
    block.noalias() = points.middleRows(lo, rows) * centers.transpose();
    for (Index r = 0; r < rows; ++r) {
      Index arg = 0;
      double best = std::numeric_limits<double>::infinity();
      for (Index j = 0; j < k; ++j) {
        const double d = center_norms[j] - 2.0 * block(r, j);
        if (d < best) {
          best = d;
          arg = j;
        }
      }
      assignment[static_cast<std::size_t>(lo + r)] = static_cast<PartitionId>(arg);
      if (distance) (*distance)[lo + r] = row_distance(points, lo + r, centers, arg);
    }
  }
}

LloydResult lloyd(const RowMatrixXd& points, Index k, int max_iters, std::uint64_t seed) {
  require(points.rows() >= 1 && k >= 1, "lloyd: need points and k >= 1");
  require(max_iters >= 1, "lloyd: max_iters must be >= 1");
  std::mt19937_64 rng(seed);
  LloydResult out;
  out.centers = seed_plus_plus(points, k, rng);

  const Index n = points.rows();
  std::vector<PartitionId> assignment;
  std::vector<PartitionId> previous;
  std::vector<double> distance;
  std::vector<Index> counts(static_cast<std::size_t>(k));

  for (int iter = 0; iter < max_iters; ++iter) {
    nearest_centers(points, out.centers, assignment, &distance);
    double objective = 0.0;
    for (double d : distance) objective += d;
    out.objective.push_back(objective);
    out.iterations = iter + 1;
    if (assignment == previous) {
      out.converged = true;
      break;
    }
    previous = assignment;

    RowMatrixXd sums = RowMatrixXd::Zero(k, points.cols());
    std::fill(counts.begin(), counts.end(), 0);
    for (Index i = 0; i < n; ++i) {
      sums.row(assignment[i]) += points.row(i);
      ++counts[assignment[i]];
    }
    for (Index j = 0; j < k; ++j) {
      if (counts[j] > 0) {
        out.centers.row(j) = sums.row(j) / static_cast<double>(counts[j]);
        continue;
      }
      // Empty cluster: move it onto the worst-quantized point.
      const auto far = std::max_element(distance.begin(), distance.end());
      if (*far <= 0.0) continue;
      const Index i = far - distance.begin();
      out.centers.row(j) = points.row(i);
      *far = 0.0;
    }
  }
  return out;
}

}  // namespace soar::detail
