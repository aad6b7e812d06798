#pragma once

#include "soar/types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace soar {

namespace detail {

// Fixed-order double accumulation with four interleaved partial sums. The
// order depends only on the vector length, never on memory alignment, so the
// same pair of vectors always yields the same bits wherever it lives.
template <typename A, typename B>
double dot(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  const Index n = a.size();
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  Index i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += double(a.coeff(i)) * double(b.coeff(i));
    s1 += double(a.coeff(i + 1)) * double(b.coeff(i + 1));
    s2 += double(a.coeff(i + 2)) * double(b.coeff(i + 2));
    s3 += double(a.coeff(i + 3)) * double(b.coeff(i + 3));
  }
  for (; i < n; ++i) s0 += double(a.coeff(i)) * double(b.coeff(i));
  return (s0 + s1) + (s2 + s3);
}

template <typename A, typename B>
double squared_distance(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  const Index n = a.size();
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  Index i = 0;
  for (; i + 4 <= n; i += 4) {
    const double e0 = double(a.coeff(i)) - double(b.coeff(i));
    const double e1 = double(a.coeff(i + 1)) - double(b.coeff(i + 1));
    const double e2 = double(a.coeff(i + 2)) - double(b.coeff(i + 2));
    const double e3 = double(a.coeff(i + 3)) - double(b.coeff(i + 3));
    s0 += e0 * e0;
    s1 += e1 * e1;
    s2 += e2 * e2;
    s3 += e3 * e3;
  }
  for (; i < n; ++i) {
    const double e = double(a.coeff(i)) - double(b.coeff(i));
    s0 += e * e;
  }
  return (s0 + s1) + (s2 + s3);
}

template <typename A>
Vector<float> to_float_vector(const Eigen::MatrixBase<A>& a) {
  Vector<float> out(a.size());
  for (Index i = 0; i < a.size(); ++i) out[i] = static_cast<float>(a.coeff(i));
  return out;
}

template <typename A>
double squared_norm(const Eigen::MatrixBase<A>& a) {
  return dot(a, a);
}

}  // namespace detail

/// <a, b>, accumulated in double and emitted as float.
template <typename A, typename B>
float inner_product(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  require_same_dims(a.size(), b.size(), "inner_product");
  return static_cast<float>(detail::dot(a, b));
}

/// x - c as a column vector.
template <typename A, typename B>
Vector<typename A::Scalar> residual(const Eigen::MatrixBase<A>& x,
                                    const Eigen::MatrixBase<B>& c) {
  require_same_dims(x.size(), c.size(), "residual");
  Vector<typename A::Scalar> out(x.size());
  for (Index i = 0; i < x.size(); ++i) out[i] = x.coeff(i) - c.coeff(i);
  return out;
}

/// Cosine of the angle between q and r, clamped to [-1, 1]. Throws on a
/// zero-norm argument; see cos_angle_or_zero for the residual convention.
template <typename A, typename B>
float cos_angle(const Eigen::MatrixBase<A>& q, const Eigen::MatrixBase<B>& r) {
  require_same_dims(q.size(), r.size(), "cos_angle");
  const double qq = detail::squared_norm(q);
  const double rr = detail::squared_norm(r);
  require(qq > 0.0 && rr > 0.0, "cos_angle: zero-norm input");
  const double c = detail::dot(q, r) / (std::sqrt(qq) * std::sqrt(rr));
  return static_cast<float>(std::clamp(c, -1.0, 1.0));
}

/// A zero residual has zero score error against every query, so it is
/// treated as orthogonal.
template <typename A, typename B>
float cos_angle_or_zero(const Eigen::MatrixBase<A>& q, const Eigen::MatrixBase<B>& r) {
  require_same_dims(q.size(), r.size(), "cos_angle");
  if (detail::squared_norm(r) == 0.0 || detail::squared_norm(q) == 0.0) return 0.0f;
  return cos_angle(q, r);
}

/// Scores of q against every row of X.
template <typename Q, typename Scalar>
std::vector<float> score_all(const Eigen::MatrixBase<Q>& q, const DenseDataset<Scalar>& X) {
  require_same_dims(q.size(), X.dims(), "score_all");
  std::vector<float> scores(static_cast<std::size_t>(X.size()));
  for (Index i = 0; i < X.size(); ++i) {
    scores[static_cast<std::size_t>(i)] = static_cast<float>(detail::dot(q, X.row(i)));
  }
  return scores;
}

/// Top-k of `scores` under the Neighbor ordering.
inline std::vector<Neighbor> top_k(const std::vector<float>& scores, std::size_t k) {
  require(k >= 1 && k <= scores.size(), "top_k: need 1 <= k <= n");
  std::vector<Neighbor> all(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    all[i] = Neighbor{static_cast<DatapointId>(i), scores[i]};
  }
  auto mid = all.begin() + static_cast<std::ptrdiff_t>(k);
  if (k < all.size()) std::nth_element(all.begin(), mid - 1, all.end(), ranks_before);
  std::sort(all.begin(), mid, ranks_before);
  all.resize(k);
  return all;
}

/// Exact maximum-inner-product search: the k largest <q, x>, sorted by score
/// descending with ties broken by ascending id.
template <typename Q, typename Scalar>
std::vector<Neighbor> brute_force_mips(const Eigen::MatrixBase<Q>& q,
                                       const DenseDataset<Scalar>& X, std::size_t k) {
  require(k >= 1 && k <= static_cast<std::size_t>(X.size()),
          "brute_force_mips: need 1 <= k <= n");
  return top_k(score_all(q, X), k);
}

/// Number of x in X with <q, x> >= <q, v>. v need not belong to X.
template <typename Q, typename V, typename Scalar>
std::size_t rank(const Eigen::MatrixBase<Q>& q, const Eigen::MatrixBase<V>& v,
                 const DenseDataset<Scalar>& X) {
  require_same_dims(q.size(), v.size(), "rank");
  require_same_dims(q.size(), X.dims(), "rank");
  const float target = inner_product(q, v);
  std::size_t count = 0;
  for (Index i = 0; i < X.size(); ++i) {
    if (inner_product(q, X.row(i)) >= target) ++count;
  }
  return count;
}

}  // namespace soar
