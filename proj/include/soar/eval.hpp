#pragma once

#include "soar/index.hpp"
#include "soar/types.hpp"
#include "soar/vq.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace soar {

using GroundTruth = std::vector<std::vector<Neighbor>>;

/// brute_force_mips for every query.
GroundTruth ground_truth(const Dataset& queries, const Dataset& X, std::size_t k);

/// |results ∩ truth| / k over the first k entries of each list. Missing
/// results count as misses.
double recall_at_k(std::span<const Neighbor> results, std::span<const Neighbor> truth,
                   std::size_t k);

double pearson(std::span<const double> a, std::span<const double> b);

struct KmrPoint {
  /// Posting entries in the t top-ranked partitions, averaged over queries.
  double datapoints_scanned = 0.0;
  double recall = 0.0;
};

/// points[t - 1] is the state after probing t partitions, t = 1..c.
struct KmrCurve {
  std::vector<KmrPoint> points;
  std::size_t k = 0;
  SpillPolicy policy;

  /// Recall after t partitions; 0 for t = 0.
  double recall_at(std::size_t t) const { return t == 0 ? 0.0 : points.at(t - 1).recall; }
};

/// Fraction of true top-k neighbors found within the t top-ranked partitions,
/// where a neighbor counts once any of its partitions has
/// Rank(q, C_p, C) <= t.
KmrCurve kmr_curve(const Dataset& queries, const SoarIndex& index, const GroundTruth& truth,
                   std::size_t k);
KmrCurve kmr_curve(const Dataset& queries, const Dataset& X, const SoarIndex& index,
                   std::size_t k);

/// Smallest datapoints_scanned whose recall reaches `target`.
double datapoints_to_recall(const KmrCurve& curve, double target);

struct DiagnosticsRecord {
  std::uint32_t query = 0;
  DatapointId neighbor = 0;
  float cos_primary = 0.0f;
  std::optional<float> cos_spilled;
  float score_err_primary = 0.0f;
  std::optional<float> score_err_spilled;
  std::uint32_t rank_primary = 0;
  std::optional<std::uint32_t> rank_spilled;
  float residual_norm = 0.0f;
};

/// Per primary-rank statistics (index r - 1 holds rank r).
struct RankBin {
  std::uint32_t rank = 0;
  std::size_t count = 0;
  double mean_score_err_primary = 0.0;
  /// NaN when the index has no spilled assignment or the bin is empty.
  double mean_rank_spilled = 0.0;
};

struct DiagnosticsSummary {
  std::size_t records = 0;
  bool has_spill = false;
  /// Pearson correlation of cos(theta) and cos(theta'); NaN without spill.
  double pearson_cos = 0.0;
  /// Pearson correlation of <q, r> and <q, r'>; NaN without spill.
  double pearson_score_err = 0.0;
  std::vector<RankBin> by_rank_primary;
};

struct Diagnostics {
  std::vector<DiagnosticsRecord> records;
  DiagnosticsSummary summary;
};

/// One record per (query, true neighbor). Queries are normalized to unit
/// norm before angles and score errors are computed.
Diagnostics diagnostics(const Dataset& queries, const SoarIndex& index, const GroundTruth& truth,
                        std::size_t k);
Diagnostics diagnostics(const Dataset& queries, const Dataset& X, const SoarIndex& index,
                        std::size_t k);

struct LambdaSweepEntry {
  float lambda = 0.0f;
  /// Mean ||r'||^2 over datapoints.
  double mean_spilled_distortion = 0.0;
  /// Mean <r, r'> / (||r|| ||r'||), i.e. the correlation of <q, r> and
  /// <q, r'> for q uniform on the sphere. Zero residuals contribute 0.
  double mean_rho = 0.0;
  double mean_abs_rho = 0.0;
};

/// Re-runs the SOAR spill pass for each lambda over a fixed codebook and
/// primary assignment.
std::vector<LambdaSweepEntry> lambda_sweep(const Dataset& X, const Codebook& codebook,
                                           const AssignmentTable& primary,
                                           std::span<const float> lambdas);

// Monte-Carlo checks of the spilled-assignment loss, sampling queries
// uniformly on the unit sphere (normalized standard Gaussians). Samples are
// drawn in fixed-size blocks seeded from (seed, block), so results do not
// depend on the number of worker threads.

inline constexpr std::size_t kMinMonteCarloSamples = 100000;

struct Theorem1Candidate {
  /// Mean of |cos theta|^lambda <q, r'>^2 over the samples.
  double empirical = 0.0;
  /// ||r'||^2 + lambda ||proj_r r'||^2.
  double closed_form = 0.0;
  /// Both values divided by those of candidate 0.
  double empirical_ratio = 1.0;
  double closed_form_ratio = 1.0;
  double relative_error = 0.0;
};

struct Theorem1Report {
  double lambda = 0.0;
  std::vector<Theorem1Candidate> candidates;
  double max_relative_error = 0.0;
};

Theorem1Report mc_verify_theorem1(const Eigen::VectorXd& r,
                                  const std::vector<Eigen::VectorXd>& r_primes, double lambda,
                                  std::size_t samples, std::uint64_t seed);

/// Same as above for several lambdas, sharing one set of sphere samples.
std::vector<Theorem1Report> mc_verify_theorem1(const Eigen::VectorXd& r,
                                               const std::vector<Eigen::VectorXd>& r_primes,
                                               std::span<const double> lambdas,
                                               std::size_t samples, std::uint64_t seed);

struct LemmaReport {
  double empirical = 0.0;
  double closed_form = 0.0;
  double abs_error = 0.0;
};

/// Sample Pearson correlation of (<q, r>, <q, r'>) against
/// <r, r'> / (||r|| ||r'||).
LemmaReport mc_verify_lemma(const Eigen::VectorXd& r, const Eigen::VectorXd& r_prime,
                            std::size_t samples, std::uint64_t seed);

struct LossInstance {
  Eigen::VectorXd r;
  std::vector<Eigen::VectorXd> r_primes;
};

/// Random primary residual plus candidates r' = a r/||r|| + g, with
/// a ~ U(-1, 1) and g ~ N(0, I/d), so the parallel component is comparable
/// to the orthogonal one.
LossInstance random_loss_instance(Index dims, std::size_t candidates, std::uint64_t seed);

}  // namespace soar
