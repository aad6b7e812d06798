#pragma once

#include "soar/core.hpp"
#include "soar/types.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace soar {

/// 4-bit codes: 16 centers per subspace.
inline constexpr Index kPQCenters = 16;
/// Bytes budgeted per posting for the datapoint id.
inline constexpr std::size_t kIdBytes = 4;

/// Product quantizer over m subspaces of s dimensions each. When s does not
/// divide d, vectors are zero-padded to m * s dimensions.
class PQCodebook {
 public:
  PQCodebook() = default;
  /// `centers` holds m * 16 rows of s values; row j * 16 + t is center t of
  /// subspace j.
  PQCodebook(Index dims, Index subspace_dims, RowMatrixXf centers);

  Index dims() const noexcept { return dims_; }
  Index subspace_dims() const noexcept { return subspace_dims_; }
  Index subspaces() const noexcept { return subspaces_; }
  Index padded_dims() const noexcept { return subspaces_ * subspace_dims_; }
  /// Packed code size: two 4-bit codes per byte.
  Index code_bytes() const noexcept { return (subspaces_ + 1) / 2; }

  auto center(Index subspace, Index t) const { return centers_.row(subspace * kPQCenters + t); }
  const RowMatrixXf& centers() const noexcept { return centers_; }

  friend bool operator==(const PQCodebook& a, const PQCodebook& b) {
    return a.dims_ == b.dims_ && a.subspace_dims_ == b.subspace_dims_ &&
           a.centers_.rows() == b.centers_.rows() && a.centers_ == b.centers_;
  }

 private:
  Index dims_ = 0;
  Index subspace_dims_ = 0;
  Index subspaces_ = 0;
  RowMatrixXf centers_;
};

inline std::uint8_t nibble_at(std::span<const std::uint8_t> packed, Index j) {
  const std::uint8_t byte = packed[static_cast<std::size_t>(j / 2)];
  return (j % 2 == 0) ? (byte & 0x0f) : (byte >> 4);
}

inline void set_nibble(std::span<std::uint8_t> packed, Index j, std::uint8_t value) {
  std::uint8_t& byte = packed[static_cast<std::size_t>(j / 2)];
  if (j % 2 == 0) {
    byte = static_cast<std::uint8_t>((byte & 0xf0) | (value & 0x0f));
  } else {
    byte = static_cast<std::uint8_t>((byte & 0x0f) | ((value & 0x0f) << 4));
  }
}

/// m packed nibbles.
struct PQCode {
  std::vector<std::uint8_t> packed;
  Index subspaces = 0;

  std::uint8_t operator[](Index j) const { return nibble_at(packed, j); }
  std::span<const std::uint8_t> bytes() const { return packed; }

  friend bool operator==(const PQCode&, const PQCode&) = default;
};

struct PQTrainTrace {
  /// objective[j] is the per-iteration quantization error of subspace j.
  std::vector<std::vector<double>> objective;
};

/// Per-subspace Lloyd's with 16 centers each. Subspaces with fewer than 16
/// distinct subvectors keep duplicate centers; encoding breaks ties towards
/// the lower index so duplicates are never selected.
PQCodebook train_pq(const Dataset& residuals, Index subspace_dims, std::uint64_t seed,
                    int max_iters = 25, PQTrainTrace* trace = nullptr);

/// Writes the code of `v` into `out` (book.code_bytes() bytes).
void pq_encode_into(std::span<const float> v, const PQCodebook& book, std::span<std::uint8_t> out);

template <typename V>
PQCode pq_encode(const Eigen::MatrixBase<V>& v, const PQCodebook& book) {
  require_same_dims(v.size(), book.dims(), "pq_encode");
  const Vector<float> dense = detail::to_float_vector(v);
  PQCode code{std::vector<std::uint8_t>(static_cast<std::size_t>(book.code_bytes())),
              book.subspaces()};
  pq_encode_into(std::span<const float>(dense.data(), dense.size()), book, code.packed);
  return code;
}

/// Reconstruction in the original d dimensions.
Vector<float> pq_decode(std::span<const std::uint8_t> packed, const PQCodebook& book);
inline Vector<float> pq_decode(const PQCode& code, const PQCodebook& book) {
  return pq_decode(code.bytes(), book);
}

/// Asymmetric scoring table: entry (j, t) is <q_j, center_{j,t}>.
class PQLookupTable {
 public:
  PQLookupTable(std::span<const float> q, const PQCodebook& book);

  /// Sum over subspaces of table(j, code_j) == <q, decode(code)>.
  float score(std::span<const std::uint8_t> packed) const;

  Index subspaces() const noexcept { return table_.rows(); }
  const RowMatrixXd& table() const noexcept { return table_; }

 private:
  RowMatrixXd table_;
};

template <typename Q>
float pq_score(const Eigen::MatrixBase<Q>& q, const PQCode& code, const PQCodebook& book) {
  require_same_dims(q.size(), book.dims(), "pq_score");
  const Vector<float> dense = detail::to_float_vector(q);
  return PQLookupTable(std::span<const float>(dense.data(), dense.size()), book)
      .score(code.bytes());
}

enum class Precision : std::uint8_t { float32, int8 };

struct MemoryAccounting {
  Index dims = 0;
  Index padded_dims = 0;
  Index subspaces = 0;
  bool padded = false;
  /// Bytes per posting as stored: 4-byte id plus ceil(m / 2) code bytes.
  std::size_t per_point_pq = 0;
  /// 4 + d / (2s) on the raw dimensionality, possibly fractional.
  double per_point_pq_formula = 0.0;
  /// Highest-bitrate copy: d (int8) or 4d (float32) bytes.
  std::size_t per_point_full = 0;
  /// n * per_point_pq when spilled, else 0.
  std::size_t soar_overhead_bytes = 0;
  /// Spill overhead as a fraction of the spilled index:
  /// per_point_pq / (per_point_full + 2 per_point_pq). 0 when not spilled.
  double relative_increase = 0.0;
  /// Growth over the unspilled index: per_point_pq / (per_point_full + per_point_pq).
  double growth_over_unspilled = 0.0;
  /// Large-d approximation: 1 / (2s + 1) for int8, 1 / (8s + 1) for float32.
  double approx_relative_increase = 0.0;
};

MemoryAccounting memory_accounting(std::size_t n, Index dims, Index subspace_dims,
                                   Precision precision, bool spilled);

}  // namespace soar
