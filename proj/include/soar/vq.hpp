#pragma once

#include "soar/core.hpp"
#include "soar/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace soar {

inline constexpr float kDefaultLambda = 1.0f;
/// Suggested for datasets far beyond a million points.
inline constexpr float kLargeDatasetLambda = 1.5f;
inline constexpr int kDefaultKMeansIters = 25;
inline constexpr Index kPointsPerPartition = 400;

/// c x d partition centers. No two centers are bit-identical.
class Codebook {
 public:
  Codebook() = default;
  explicit Codebook(RowMatrixXf centers);

  Index size() const noexcept { return centers_.rows(); }
  Index dims() const noexcept { return centers_.cols(); }
  auto center(Index i) const { return centers_.row(i); }
  const RowMatrixXf& matrix() const noexcept { return centers_; }

  /// The centers viewed as a dataset, for rank() against the codebook.
  Dataset as_dataset() const { return Dataset(centers_); }

  friend bool operator==(const Codebook& a, const Codebook& b) {
    return a.centers_.rows() == b.centers_.rows() && a.centers_.cols() == b.centers_.cols() &&
           a.centers_ == b.centers_;
  }

 private:
  RowMatrixXf centers_;
};

/// Spilled assignment keeps exactly two assignments per datapoint: the
/// primary partition plus one spilled partition.
struct SoarParams {
  static constexpr int kAssignments = 2;
  float lambda = kDefaultLambda;
};

struct SpillPolicy {
  enum class Kind : std::uint8_t { none = 0, naive = 1, soar = 2 };

  Kind kind = Kind::none;
  SoarParams soar{};

  static SpillPolicy None() { return {Kind::none, {0.0f}}; }
  static SpillPolicy Naive() { return {Kind::naive, {0.0f}}; }
  static SpillPolicy Soar(float lambda = kDefaultLambda) { return {Kind::soar, {lambda}}; }

  bool spills() const noexcept { return kind != Kind::none; }
  float lambda() const noexcept { return soar.lambda; }
  std::string name() const;

  /// Parses "none", "naive" or "soar".
  static SpillPolicy parse(const std::string& name, float lambda = kDefaultLambda);

  friend bool operator==(const SpillPolicy& a, const SpillPolicy& b) {
    return a.kind == b.kind && a.soar.lambda == b.soar.lambda;
  }
};

/// Per-datapoint partition ids. `spilled` is empty when the policy is none,
/// otherwise spilled[i] != primary[i] for every i.
struct AssignmentTable {
  std::vector<PartitionId> primary;
  std::vector<PartitionId> spilled;
  SpillPolicy policy;

  std::size_t size() const noexcept { return primary.size(); }
  bool has_spill() const noexcept { return !spilled.empty(); }
  std::optional<PartitionId> spilled_of(std::size_t i) const {
    if (spilled.empty()) return std::nullopt;
    return spilled[i];
  }

  friend bool operator==(const AssignmentTable&, const AssignmentTable&) = default;
};

struct KMeansTrace {
  /// Objective sum ||x - C_pi(x)||^2 after each assignment step.
  std::vector<double> objective;
  int iterations = 0;
  bool converged = false;
};

/// Lloyd's algorithm with k-means++ seeding. Empty clusters are re-seeded
/// from the point farthest from its center; bit-identical centers are nudged
/// apart afterwards. Deterministic for fixed arguments.
Codebook train_kmeans(const Dataset& X, Index partitions, int max_iters, std::uint64_t seed,
                      KMeansTrace* trace = nullptr);

/// Nearest center by squared Euclidean distance, ties to the lower id.
AssignmentTable assign_primary(const Dataset& X, const Codebook& codebook);

/// ||r'||^2 + lambda * ||proj_r r'||^2. The projection term is 0 when r = 0.
template <typename A, typename B>
double soar_loss(const Eigen::MatrixBase<A>& r_prime, const Eigen::MatrixBase<B>& r,
                 double lambda) {
  require(lambda >= 0.0, "soar_loss: lambda must be non-negative");
  require_same_dims(r_prime.size(), r.size(), "soar_loss");
  const double rp2 = detail::squared_norm(r_prime);
  const double rr = detail::squared_norm(r);
  if (rr == 0.0) return rp2;
  const double along = detail::dot(r, r_prime);
  return rp2 + lambda * (along * along / rr);
}

/// Spilled partition minimizing soar_loss(x - C_j, x - C_primary, lambda)
/// over j != primary, ties to the lower id. Centers and primary assignments
/// are left untouched.
AssignmentTable assign_spilled_soar(const Dataset& X, const Codebook& codebook,
                                    const AssignmentTable& primary, float lambda);

/// Second-nearest center; identical to assign_spilled_soar with lambda = 0.
AssignmentTable assign_spilled_naive(const Dataset& X, const Codebook& codebook,
                                     const AssignmentTable& primary);

/// Applies `policy` on top of a primary assignment.
AssignmentTable assign_spilled(const Dataset& X, const Codebook& codebook,
                               const AssignmentTable& primary, const SpillPolicy& policy);

/// Sum over datapoints of ||x - C_pi(x)||^2.
double quantization_error(const Dataset& X, const Codebook& codebook,
                          const std::vector<PartitionId>& assignment);

}  // namespace soar
