#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace soar {

using Index = Eigen::Index;
using DatapointId = std::uint32_t;
using PartitionId = std::uint32_t;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using RowMatrixXf = RowMatrix<float>;
using RowMatrixXd = RowMatrix<double>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition violations: bad sizes, out-of-range parameters.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated file content. `section()` names the part of the
/// file that failed to parse.
class FormatError : public Error {
 public:
  FormatError(std::string section, const std::string& what)
      : Error(section + ": " + what), section_(std::move(section)) {}
  const std::string& section() const noexcept { return section_; }

 private:
  std::string section_;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument(what);
}

inline void require_same_dims(Index a, Index b, const char* op) {
  if (a != b) {
    throw InvalidArgument(std::string(op) + ": dimension mismatch (" + std::to_string(a) +
                          " vs " + std::to_string(b) + ")");
  }
}

/// n x d matrix of finite values, one datapoint per row. Immutable once
/// constructed; row i is datapoint id i.
template <typename Scalar>
class DenseDataset {
 public:
  using Matrix = RowMatrix<Scalar>;

  DenseDataset() = default;
  explicit DenseDataset(Matrix data) : data_(std::move(data)) {
    require(data_.rows() >= 1 && data_.cols() >= 1, "dataset must have n >= 1 and d >= 1");
    require(data_.allFinite(), "dataset contains NaN or Inf");
    require(data_.rows() <= Index{0xffffffff}, "dataset exceeds 32-bit datapoint ids");
  }

  Index size() const noexcept { return data_.rows(); }
  Index dims() const noexcept { return data_.cols(); }
  bool empty() const noexcept { return data_.rows() == 0; }

  auto row(Index i) const { return data_.row(i); }
  const Matrix& matrix() const noexcept { return data_; }

  friend bool operator==(const DenseDataset& a, const DenseDataset& b) {
    return a.data_.rows() == b.data_.rows() && a.data_.cols() == b.data_.cols() &&
           a.data_ == b.data_;
  }

 private:
  Matrix data_;
};

using Dataset = DenseDataset<float>;

struct Neighbor {
  DatapointId id = 0;
  float score = 0.0f;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Result ordering: score descending, ties by ascending id.
inline bool ranks_before(const Neighbor& a, const Neighbor& b) noexcept {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

}  // namespace soar
