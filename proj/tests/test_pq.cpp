#include "oracles.hpp"

#include "soar/pq.hpp"

#include <doctest.h>

using namespace soar;

namespace {

// Subspace j center t = (j * 100 + t, -(j * 100 + t)) for s = 2.
PQCodebook ladder_book(Index dims) {
  const Index m = (dims + 1) / 2;
  RowMatrixXf centers(m * kPQCenters, 2);
  for (Index j = 0; j < m; ++j) {
    for (Index t = 0; t < kPQCenters; ++t) {
      const float v = float(j * 100 + t);
      centers.row(j * kPQCenters + t) << v, -v;
    }
  }
  return PQCodebook(dims, 2, centers);
}

double reconstruction_error(const Dataset& R, const PQCodebook& book) {
  double err = 0.0;
  for (Index i = 0; i < R.size(); ++i) {
    const Vector<float> dec = pq_decode(pq_encode(R.row(i), book), book);
    err += oracle::sqdist(oracle::to_vec(R.row(i)), oracle::to_vec(dec));
  }
  return err;
}

}  // namespace

TEST_CASE("nibble packing is low nibble first") {
  std::vector<std::uint8_t> packed(2, 0);
  set_nibble(packed, 0, 3);
  set_nibble(packed, 1, 7);
  set_nibble(packed, 2, 15);
  CHECK(packed[0] == 0x73);
  CHECK(packed[1] == 0x0f);
  CHECK(nibble_at(packed, 0) == 3);
  CHECK(nibble_at(packed, 1) == 7);
  CHECK(nibble_at(packed, 2) == 15);
  set_nibble(packed, 0, 0);
  CHECK(packed[0] == 0x70);
}

TEST_CASE("codebook shapes") {
  const PQCodebook book = train_pq(oracle::random_dataset(100, 4, 1), 2, 0);
  CHECK(book.subspaces() == 2);
  CHECK(book.code_bytes() == 1);
  CHECK(book.centers().rows() == 2 * kPQCenters);

  const PQCodebook odd = train_pq(oracle::random_dataset(100, 7, 1), 2, 0);
  CHECK(odd.subspaces() == 4);
  CHECK(odd.padded_dims() == 8);
  CHECK(odd.code_bytes() == 2);

  const PQCodebook five = train_pq(oracle::random_dataset(100, 10, 1), 2, 0);
  CHECK(five.subspaces() == 5);
  CHECK(five.code_bytes() == 3);
  CHECK_THROWS_AS(train_pq(oracle::random_dataset(10, 4, 1), 0, 0), InvalidArgument);
}

TEST_CASE("all-zero residuals give zero centers and zero codes") {
  const Dataset R(RowMatrixXf::Zero(50, 6));
  const PQCodebook book = train_pq(R, 2, 3);
  CHECK(book.centers().isZero(0));
  const PQCode code = pq_encode(R.row(0), book);
  for (Index j = 0; j < code.subspaces; ++j) CHECK(code[j] == 0);
}

TEST_CASE("encode picks the named centers") {
  const PQCodebook book = ladder_book(4);
  Eigen::Vector4f v(3, -3, 107, -107);
  const PQCode code = pq_encode(v, book);
  CHECK(code[0] == 3);
  CHECK(code[1] == 7);
  CHECK(pq_decode(code, book) == v);
  CHECK_THROWS_AS(pq_encode(Eigen::Vector3f(1, 2, 3), book), InvalidArgument);
}

TEST_CASE("encode ties break to the lower center") {
  RowMatrixXf centers = RowMatrixXf::Zero(kPQCenters, 1);
  for (Index t = 0; t < kPQCenters; ++t) centers(t, 0) = float(t);
  const PQCodebook book(1, 1, centers);
  Vector<float> v(1);
  v << 2.5f;
  CHECK(pq_encode(v, book)[0] == 2);
}

TEST_CASE("encode matches a per-subspace argmin") {
  const Dataset R = oracle::random_dataset(300, 9, 5);
  const PQCodebook book = train_pq(R, 3, 7);
  for (Index i = 0; i < R.size(); ++i) {
    const PQCode code = pq_encode(R.row(i), book);
    for (Index j = 0; j < book.subspaces(); ++j) {
      double best = INFINITY;
      Index arg = 0;
      for (Index t = 0; t < kPQCenters; ++t) {
        double d = 0.0;
        for (Index u = 0; u < 3; ++u) {
          const double e = double(R.row(i)(j * 3 + u)) - double(book.center(j, t)(u));
          d += e * e;
        }
        if (d < best) {
          best = d;
          arg = t;
        }
      }
      CHECK(code[j] == arg);
    }
  }
}

TEST_CASE("padded tail decodes back to d dimensions") {
  const Dataset R = oracle::random_dataset(200, 5, 9);
  const PQCodebook book = train_pq(R, 2, 1);
  const Vector<float> dec = pq_decode(pq_encode(R.row(0), book), book);
  CHECK(dec.size() == 5);
}

TEST_CASE("pq_score is the inner product with the decoded vector") {
  const Dataset R = oracle::random_dataset(200, 12, 11);
  const Dataset Q = oracle::random_dataset(20, 12, 12);
  const PQCodebook book = train_pq(R, 2, 1);
  for (Index qi = 0; qi < Q.size(); ++qi) {
    for (Index i = 0; i < 10; ++i) {
      const PQCode code = pq_encode(R.row(i), book);
      const double want = oracle::dot(oracle::to_vec(Q.row(qi)), oracle::to_vec(pq_decode(code, book)));
      CHECK(pq_score(Q.row(qi), code, book) ==
            doctest::Approx(want).epsilon(1e-5).scale(1.0));
    }
  }
  const Dataset Z(RowMatrixXf::Zero(40, 12));
  const PQCodebook zero_book = train_pq(Z, 2, 0);
  CHECK(pq_score(Q.row(0), pq_encode(Z.row(0), zero_book), zero_book) == 0.0f);
}

TEST_CASE("trained codebook beats a random codebook") {
  const Dataset R = oracle::random_dataset(1000, 8, 21);
  PQTrainTrace trace;
  const PQCodebook trained = train_pq(R, 2, 4, 25, &trace);
  const Dataset random_centers = oracle::random_dataset(4 * kPQCenters, 2, 99);
  const PQCodebook random_book(8, 2, random_centers.matrix());
  CHECK(reconstruction_error(R, trained) <= reconstruction_error(R, random_book));

  REQUIRE(trace.objective.size() == 4);
  for (const auto& series : trace.objective) {
    for (std::size_t i = 1; i < series.size(); ++i) CHECK(series[i] <= series[i - 1]);
  }
  CHECK(train_pq(R, 2, 4) == trained);
}

TEST_CASE("memory accounting") {
  const auto f32 = memory_accounting(1000, 100, 2, Precision::float32, true);
  CHECK(f32.per_point_pq == 29);
  CHECK(f32.per_point_pq_formula == 29.0);
  CHECK(f32.per_point_full == 400);
  CHECK(f32.soar_overhead_bytes == 29000);
  CHECK(f32.subspaces == 50);
  CHECK_FALSE(f32.padded);
  CHECK(f32.relative_increase == doctest::Approx(29.0 / 458.0));
  CHECK(std::abs(f32.relative_increase - 1.0 / 17.0) < 0.005);
  CHECK(f32.approx_relative_increase == doctest::Approx(1.0 / 17.0));
  CHECK(f32.growth_over_unspilled == doctest::Approx(29.0 / 429.0));

  const auto i8 = memory_accounting(1000, 100, 2, Precision::int8, true);
  CHECK(i8.per_point_full == 100);
  CHECK(i8.approx_relative_increase == doctest::Approx(0.2));

  const auto unspilled = memory_accounting(1000, 100, 2, Precision::float32, false);
  CHECK(unspilled.soar_overhead_bytes == 0);
  CHECK(unspilled.relative_increase == 0.0);

  const auto padded = memory_accounting(10, 7, 2, Precision::float32, true);
  CHECK(padded.padded);
  CHECK(padded.padded_dims == 8);
  CHECK(padded.per_point_pq == 6);
  CHECK_THROWS_AS(memory_accounting(10, 8, 0, Precision::float32, true), InvalidArgument);
}
