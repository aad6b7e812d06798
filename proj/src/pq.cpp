#include "soar/pq.hpp"

#include "lloyd.hpp"

#include <limits>

namespace soar {

PQCodebook::PQCodebook(Index dims, Index subspace_dims, RowMatrixXf centers)
    : dims_(dims), subspace_dims_(subspace_dims), centers_(std::move(centers)) {
  require(dims >= 1, "PQ codebook: dims must be >= 1");
  require(subspace_dims >= 1, "PQ codebook: subspace dims must be >= 1");
  subspaces_ = (dims + subspace_dims - 1) / subspace_dims;
  require(centers_.rows() == subspaces_ * kPQCenters && centers_.cols() == subspace_dims,
          "PQ codebook: centers must be (m * 16) x s");
  require(centers_.allFinite(), "PQ codebook contains NaN or Inf");
}

PQCodebook train_pq(const Dataset& residuals, Index subspace_dims, std::uint64_t seed,
                    int max_iters, PQTrainTrace* trace) {
  require(subspace_dims >= 1, "train_pq: subspace dims must be >= 1");
  require(max_iters >= 1, "train_pq: max_iters must be >= 1");
  const Index d = residuals.dims();
  const Index s = subspace_dims;
  const Index m = (d + s - 1) / s;
  const Index n = residuals.size();

  RowMatrixXf centers(m * kPQCenters, s);
  if (trace) trace->objective.assign(static_cast<std::size_t>(m), {});
  RowMatrixXd sub(n, s);
  for (Index j = 0; j < m; ++j) {
    sub.setZero();
    const Index width = std::min(s, d - j * s);
    sub.leftCols(width) = residuals.matrix().middleCols(j * s, width).cast<double>();
    const std::uint64_t sub_seed = seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(j + 1);
    auto fit = detail::lloyd(sub, kPQCenters, max_iters, sub_seed);
    centers.middleRows(j * kPQCenters, kPQCenters) = fit.centers.cast<float>();
    if (trace) trace->objective[static_cast<std::size_t>(j)] = std::move(fit.objective);
  }
  return PQCodebook(d, s, std::move(centers));
}

void pq_encode_into(std::span<const float> v, const PQCodebook& book, std::span<std::uint8_t> out) {
  require_same_dims(static_cast<Index>(v.size()), book.dims(), "pq_encode");
  require(out.size() == static_cast<std::size_t>(book.code_bytes()), "pq_encode: bad output size");
  const Index s = book.subspace_dims();
  const Index d = book.dims();
  std::fill(out.begin(), out.end(), std::uint8_t{0});
  for (Index j = 0; j < book.subspaces(); ++j) {
    std::uint8_t arg = 0;
    double best = std::numeric_limits<double>::infinity();
    for (Index t = 0; t < kPQCenters; ++t) {
      const auto center = book.center(j, t);
      double dist = 0.0;
      for (Index u = 0; u < s; ++u) {
        const Index dim = j * s + u;
        const double value = dim < d ? double(v[static_cast<std::size_t>(dim)]) : 0.0;
        const double e = value - double(center[u]);
        dist += e * e;
      }
      if (dist < best) {
        best = dist;
        arg = static_cast<std::uint8_t>(t);
      }
    }
    set_nibble(out, j, arg);
  }
}

Vector<float> pq_decode(std::span<const std::uint8_t> packed, const PQCodebook& book) {
  require(packed.size() == static_cast<std::size_t>(book.code_bytes()), "pq_decode: bad code size");
  const Index s = book.subspace_dims();
  Vector<float> padded(book.padded_dims());
  for (Index j = 0; j < book.subspaces(); ++j) {
    padded.segment(j * s, s) = book.center(j, nibble_at(packed, j)).transpose();
  }
  return padded.head(book.dims());
}

PQLookupTable::PQLookupTable(std::span<const float> q, const PQCodebook& book)
    : table_(book.subspaces(), kPQCenters) {
  require_same_dims(static_cast<Index>(q.size()), book.dims(), "PQ lookup table");
  const Index s = book.subspace_dims();
  const Index d = book.dims();
  for (Index j = 0; j < book.subspaces(); ++j) {
    for (Index t = 0; t < kPQCenters; ++t) {
      const auto center = book.center(j, t);
      double acc = 0.0;
      for (Index u = 0; u < s && j * s + u < d; ++u) {
        acc += double(q[static_cast<std::size_t>(j * s + u)]) * double(center[u]);
      }
      table_(j, t) = acc;
    }
  }
}

float PQLookupTable::score(std::span<const std::uint8_t> packed) const {
  double acc = 0.0;
  const Index m = table_.rows();
  for (Index j = 0; j + 1 < m; j += 2) {
    const std::uint8_t byte = packed[static_cast<std::size_t>(j / 2)];
    acc += table_(j, byte & 0x0f) + table_(j + 1, byte >> 4);
  }
  if (m % 2 == 1) acc += table_(m - 1, nibble_at(packed, m - 1));
  return static_cast<float>(acc);
}

MemoryAccounting memory_accounting(std::size_t n, Index dims, Index subspace_dims,
                                   Precision precision, bool spilled) {
  require(subspace_dims >= 1, "memory_accounting: s must be >= 1");
  require(dims >= 1, "memory_accounting: d must be >= 1");
  MemoryAccounting out;
  out.dims = dims;
  out.subspaces = (dims + subspace_dims - 1) / subspace_dims;
  out.padded_dims = out.subspaces * subspace_dims;
  // Odd m leaves half a byte unused, which also counts as padding.
  out.padded = out.padded_dims != dims || out.subspaces % 2 != 0;
  out.per_point_pq = kIdBytes + static_cast<std::size_t>((out.subspaces + 1) / 2);
  out.per_point_pq_formula = 4.0 + double(dims) / (2.0 * double(subspace_dims));
  const auto d = static_cast<std::size_t>(dims);
  out.per_point_full = precision == Precision::int8 ? d : 4 * d;
  const double pq = double(out.per_point_pq);
  const double full = double(out.per_point_full);
  out.growth_over_unspilled = pq / (full + pq);
  const double s = double(subspace_dims);
  out.approx_relative_increase = precision == Precision::int8 ? 1.0 / (2.0 * s + 1.0)
                                                              : 1.0 / (8.0 * s + 1.0);
  if (spilled) {
    out.soar_overhead_bytes = n * out.per_point_pq;
    out.relative_increase = pq / (full + 2.0 * pq);
  }
  return out;
}

}  // namespace soar
