#include "soar/eval.hpp"

#include "soar/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <unordered_set>

namespace soar {

namespace {

// Partition scores for one query plus the Rank(q, C_p, C) lookup built on
// the same float scores that core::rank compares.
struct PartitionRanking {
  std::vector<float> scores;
  std::vector<float> descending;

  template <typename Q>
  PartitionRanking(const Eigen::MatrixBase<Q>& q, const Codebook& codebook)
      : scores(score_all(q, codebook.as_dataset())), descending(scores) {
    std::sort(descending.begin(), descending.end(), std::greater<>());
  }

  std::uint32_t rank_of(PartitionId p) const {
    const auto end = std::upper_bound(descending.begin(), descending.end(), scores[p],
                                      std::greater<>());
    return static_cast<std::uint32_t>(end - descending.begin());
  }
};

void check_truth(const Dataset& queries, const SoarIndex& index, const GroundTruth& truth,
                 std::size_t k) {
  require(k >= 1 && k <= static_cast<std::size_t>(index.size()), "need 1 <= k <= n");
  require_same_dims(queries.dims(), index.dims(), "queries vs index");
  require(truth.size() == static_cast<std::size_t>(queries.size()),
          "ground truth has a different number of queries");
  for (const auto& row : truth) require(row.size() >= k, "ground truth shorter than k");
}

}  // namespace

GroundTruth ground_truth(const Dataset& queries, const Dataset& X, std::size_t k) {
  require_same_dims(queries.dims(), X.dims(), "ground_truth");
  require(k >= 1 && k <= static_cast<std::size_t>(X.size()), "ground_truth: need 1 <= k <= n");
  GroundTruth out(static_cast<std::size_t>(queries.size()));
  parallel_for(out.size(), [&](std::size_t i) {
    out[i] = brute_force_mips(queries.row(static_cast<Index>(i)), X, k);
  });
  return out;
}

double recall_at_k(std::span<const Neighbor> results, std::span<const Neighbor> truth,
                   std::size_t k) {
  require(k >= 1, "recall_at_k: k must be >= 1");
  require(truth.size() >= k, "recall_at_k: truth shorter than k");
  std::unordered_set<DatapointId> wanted;
  for (std::size_t i = 0; i < k; ++i) wanted.insert(truth[i].id);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < std::min(k, results.size()); ++i) {
    hits += wanted.erase(results[i].id);
  }
  return double(hits) / double(k);
}

double pearson(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "pearson: series differ in length");
  const auto n = double(a.size());
  if (a.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

KmrCurve kmr_curve(const Dataset& queries, const SoarIndex& index, const GroundTruth& truth,
                   std::size_t k) {
  check_truth(queries, index, truth, k);
  const auto c = static_cast<std::size_t>(index.partitions());
  const auto& assignment = index.assignment();
  std::vector<std::size_t> found_at(c + 1, 0);
  std::vector<double> scanned(c, 0.0);

  for (Index qi = 0; qi < queries.size(); ++qi) {
    const PartitionRanking ranking(queries.row(qi), index.codebook());
    std::vector<Neighbor> order(c);
    for (std::size_t p = 0; p < c; ++p) order[p] = {static_cast<DatapointId>(p), ranking.scores[p]};
    std::sort(order.begin(), order.end(), ranks_before);
    std::size_t prefix = 0;
    for (std::size_t t = 0; t < c; ++t) {
      prefix += index.postings()[order[t].id].size();
      scanned[t] += double(prefix);
    }
    for (std::size_t j = 0; j < k; ++j) {
      const DatapointId v = truth[static_cast<std::size_t>(qi)][j].id;
      std::uint32_t best = ranking.rank_of(assignment.primary[v]);
      if (assignment.has_spill()) best = std::min(best, ranking.rank_of(assignment.spilled[v]));
      ++found_at[best];
    }
  }

  KmrCurve curve;
  curve.k = k;
  curve.policy = index.metadata().policy;
  curve.points.resize(c);
  const double total = double(k) * double(queries.size());
  std::size_t cumulative = 0;
  for (std::size_t t = 1; t <= c; ++t) {
    cumulative += found_at[t];
    curve.points[t - 1] = {scanned[t - 1] / double(queries.size()), double(cumulative) / total};
  }
  return curve;
}

KmrCurve kmr_curve(const Dataset& queries, const Dataset& X, const SoarIndex& index,
                   std::size_t k) {
  return kmr_curve(queries, index, ground_truth(queries, X, k), k);
}

double datapoints_to_recall(const KmrCurve& curve, double target) {
  require(target > 0.0 && target <= 1.0, "datapoints_to_recall: target must be in (0, 1]");
  for (const auto& point : curve.points) {
    if (point.recall >= target) return point.datapoints_scanned;
  }
  throw InvalidArgument("datapoints_to_recall: target not reached by the curve");
}

Diagnostics diagnostics(const Dataset& queries, const SoarIndex& index, const GroundTruth& truth,
                        std::size_t k) {
  check_truth(queries, index, truth, k);
  const auto& assignment = index.assignment();
  const auto& codebook = index.codebook();
  const auto& X = index.full_store();
  const bool spill = assignment.has_spill();

  Diagnostics out;
  out.records.resize(static_cast<std::size_t>(queries.size()) * k);
  parallel_for(static_cast<std::size_t>(queries.size()), [&](std::size_t qi) {
    const auto q = queries.row(static_cast<Index>(qi));
    const PartitionRanking ranking(q, codebook);
    const double norm = std::sqrt(detail::squared_norm(q));
    Eigen::VectorXd unit = q.transpose().cast<double>();
    if (norm > 0.0) unit /= norm;
    for (std::size_t j = 0; j < k; ++j) {
      const DatapointId v = truth[qi][j].id;
      auto& rec = out.records[qi * k + j];
      rec.query = static_cast<std::uint32_t>(qi);
      rec.neighbor = v;
      const Vector<float> r = residual(X.row(v), codebook.center(assignment.primary[v]));
      rec.cos_primary = cos_angle_or_zero(unit, r);
      rec.score_err_primary = inner_product(unit, r);
      rec.rank_primary = ranking.rank_of(assignment.primary[v]);
      rec.residual_norm = static_cast<float>(std::sqrt(detail::squared_norm(r)));
      if (spill) {
        const Vector<float> rs = residual(X.row(v), codebook.center(assignment.spilled[v]));
        rec.cos_spilled = cos_angle_or_zero(unit, rs);
        rec.score_err_spilled = inner_product(unit, rs);
        rec.rank_spilled = ranking.rank_of(assignment.spilled[v]);
      }
    }
  });

  auto& summary = out.summary;
  summary.records = out.records.size();
  summary.has_spill = spill;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  summary.pearson_cos = nan;
  summary.pearson_score_err = nan;
  if (spill) {
    std::vector<double> a, b, ea, eb;
    a.reserve(out.records.size());
    b.reserve(out.records.size());
    ea.reserve(out.records.size());
    eb.reserve(out.records.size());
    for (const auto& rec : out.records) {
      a.push_back(rec.cos_primary);
      b.push_back(*rec.cos_spilled);
      ea.push_back(rec.score_err_primary);
      eb.push_back(*rec.score_err_spilled);
    }
    summary.pearson_cos = pearson(a, b);
    summary.pearson_score_err = pearson(ea, eb);
  }

  const auto c = static_cast<std::size_t>(index.partitions());
  std::vector<double> err_sum(c, 0.0), rank_sum(c, 0.0);
  std::vector<std::size_t> count(c, 0);
  for (const auto& rec : out.records) {
    const std::size_t bin = rec.rank_primary - 1;
    ++count[bin];
    err_sum[bin] += rec.score_err_primary;
    if (spill) rank_sum[bin] += *rec.rank_spilled;
  }
  summary.by_rank_primary.resize(c);
  for (std::size_t bin = 0; bin < c; ++bin) {
    auto& out_bin = summary.by_rank_primary[bin];
    out_bin.rank = static_cast<std::uint32_t>(bin + 1);
    out_bin.count = count[bin];
    out_bin.mean_score_err_primary = count[bin] ? err_sum[bin] / double(count[bin]) : nan;
    out_bin.mean_rank_spilled = (spill && count[bin]) ? rank_sum[bin] / double(count[bin]) : nan;
  }
  return out;
}

Diagnostics diagnostics(const Dataset& queries, const Dataset& X, const SoarIndex& index,
                        std::size_t k) {
  return diagnostics(queries, index, ground_truth(queries, X, k), k);
}

std::vector<LambdaSweepEntry> lambda_sweep(const Dataset& X, const Codebook& codebook,
                                           const AssignmentTable& primary,
                                           std::span<const float> lambdas) {
  require(std::is_sorted(lambdas.begin(), lambdas.end()), "lambda_sweep: lambdas must be ascending");
  std::vector<LambdaSweepEntry> out;
  const auto n = static_cast<std::size_t>(X.size());
  std::vector<double> distortion(n), rho(n);
  for (float lambda : lambdas) {
    const AssignmentTable spilled = assign_spilled_soar(X, codebook, primary, lambda);
    parallel_for(n, [&](std::size_t i) {
      const auto x = X.row(static_cast<Index>(i));
      const Vector<double> r = residual(x.cast<double>(), codebook.center(spilled.primary[i]).cast<double>());
      const Vector<double> rs = residual(x.cast<double>(), codebook.center(spilled.spilled[i]).cast<double>());
      distortion[i] = detail::squared_distance(x, codebook.center(spilled.spilled[i]));
      const double rr = detail::squared_norm(r);
      const double ss = detail::squared_norm(rs);
      rho[i] = (rr > 0.0 && ss > 0.0) ? detail::dot(r, rs) / std::sqrt(rr * ss) : 0.0;
    });
    LambdaSweepEntry entry;
    entry.lambda = lambda;
    for (std::size_t i = 0; i < n; ++i) {
      entry.mean_spilled_distortion += distortion[i];
      entry.mean_rho += rho[i];
      entry.mean_abs_rho += std::abs(rho[i]);
    }
    entry.mean_spilled_distortion /= double(n);
    entry.mean_rho /= double(n);
    entry.mean_abs_rho /= double(n);
    out.push_back(entry);
  }
  return out;
}

}  // namespace soar
