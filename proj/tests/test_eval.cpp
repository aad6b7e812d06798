#include "oracles.hpp"

#include "soar/eval.hpp"

#include <doctest.h>

using namespace soar;

namespace {

struct Fixture {
  Dataset X;
  Dataset Q;
  Codebook C;
  AssignmentTable primary;
};

Fixture fixture(Index n, Index d, Index c, std::uint64_t seed) {
  const MixtureSpec spec{d, 2 * c, 0.6f, seed};
  Dataset X = sample_mixture(spec, n, 0);
  Dataset Q = sample_mixture(spec, 100, 1);
  Codebook C = train_kmeans(X, c, 15, seed);
  AssignmentTable primary = assign_primary(X, C);
  return {std::move(X), std::move(Q), std::move(C), std::move(primary)};
}

std::vector<Neighbor> ns(std::initializer_list<DatapointId> ids) {
  std::vector<Neighbor> out;
  for (auto id : ids) out.push_back({id, 0.0f});
  return out;
}

}  // namespace

TEST_CASE("recall_at_k") {
  const auto truth = ns({0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  CHECK(recall_at_k(truth, truth, 10) == 1.0);
  CHECK(recall_at_k(ns({10, 11, 12, 13, 14, 15, 16, 17, 18, 19}), truth, 10) == 0.0);
  CHECK(recall_at_k(ns({0, 1, 2, 3, 4, 15, 16, 17, 18, 19}), truth, 10) == 0.5);
  CHECK(recall_at_k(ns({0, 1}), truth, 10) == 0.2);
  CHECK_THROWS_AS(recall_at_k(truth, ns({1}), 10), InvalidArgument);
}

TEST_CASE("pearson") {
  const std::vector<double> a{1, 2, 3, 4, 5};
  const std::vector<double> b{2, 4, 6, 8, 10};
  const std::vector<double> c{5, 4, 3, 2, 1};
  CHECK(pearson(a, a) == doctest::Approx(1.0));
  CHECK(pearson(a, b) == doctest::Approx(1.0));
  CHECK(pearson(a, c) == doctest::Approx(-1.0));
  CHECK(std::isnan(pearson(a, std::vector<double>(5, 1.0))));
}

TEST_CASE("kmr_curve equals the direct counting oracle") {
  const Fixture f = fixture(1000, 8, 10, 1);
  for (const auto& policy : {SpillPolicy::None(), SpillPolicy::Naive(), SpillPolicy::Soar(1.0f)}) {
    const SoarIndex index = build_from_partitioning(f.X, f.C, f.primary, policy, 2, 1, 5);
    const GroundTruth truth = ground_truth(f.Q, f.X, 10);
    const KmrCurve curve = kmr_curve(f.Q, index, truth, 10);
    const auto direct = oracle::kmr_direct(f.Q, index, truth, 10);
    REQUIRE(curve.points.size() == direct.size());
    for (std::size_t t = 0; t < direct.size(); ++t) {
      CHECK(curve.points[t].recall == direct[t].recall);
      CHECK(curve.points[t].datapoints_scanned == direct[t].datapoints_scanned);
    }
    CHECK(curve.recall_at(0) == 0.0);
    CHECK(curve.points.back().recall == 1.0);
    CHECK(curve.points.back().datapoints_scanned == double(index.total_postings()));
    CHECK(curve.policy == policy);
    for (std::size_t t = 1; t < curve.points.size(); ++t) {
      CHECK(curve.points[t].recall >= curve.points[t - 1].recall);
      CHECK(curve.points[t].datapoints_scanned >= curve.points[t - 1].datapoints_scanned);
    }
  }
}

TEST_CASE("kmr_curve with a single partition") {
  const Dataset X = oracle::random_dataset(50, 4, 3);
  const SoarIndex index = build(X, 1, SpillPolicy::None(), 2, 0);
  const KmrCurve curve = kmr_curve(oracle::random_dataset(5, 4, 4), X, index, 5);
  REQUIRE(curve.points.size() == 1);
  CHECK(curve.points[0].recall == 1.0);
  CHECK(curve.points[0].datapoints_scanned == 50.0);
  CHECK_THROWS_AS(kmr_curve(oracle::random_dataset(5, 4, 4), X, index, 51), InvalidArgument);
}

TEST_CASE("datapoints_to_recall") {
  KmrCurve curve;
  curve.points = {{100, 0.5}, {200, 0.8}, {300, 0.9}, {400, 1.0}};
  CHECK(datapoints_to_recall(curve, 1.0) == 400);
  CHECK(datapoints_to_recall(curve, 0.3) == 100);
  CHECK(datapoints_to_recall(curve, 0.85) == 300);
  CHECK(datapoints_to_recall(curve, 0.8) == 200);
  CHECK_THROWS_AS(datapoints_to_recall(curve, 1.5), InvalidArgument);
  CHECK_THROWS_AS(datapoints_to_recall(curve, 0.0), InvalidArgument);
}

TEST_CASE("diagnostics records and summary") {
  const Fixture f = fixture(2000, 8, 16, 2);
  const SoarIndex none = build_from_partitioning(f.X, f.C, f.primary, SpillPolicy::None(), 2, 1, 5);
  const SoarIndex naive = build_from_partitioning(f.X, f.C, f.primary, SpillPolicy::Naive(), 2, 1, 5);
  const SoarIndex soar = build_from_partitioning(f.X, f.C, f.primary, SpillPolicy::Soar(1.0f), 2, 1, 5);
  const GroundTruth truth = ground_truth(f.Q, f.X, 20);

  const Diagnostics dn = diagnostics(f.Q, none, truth, 20);
  CHECK(dn.records.size() == 2000);
  CHECK_FALSE(dn.summary.has_spill);
  CHECK(std::isnan(dn.summary.pearson_cos));
  CHECK_FALSE(dn.records[0].cos_spilled.has_value());

  const Diagnostics dv = diagnostics(f.Q, naive, truth, 20);
  const Diagnostics ds = diagnostics(f.Q, soar, truth, 20);
  CHECK(ds.summary.pearson_cos < dv.summary.pearson_cos);
  for (const auto& rec : ds.records) {
    CHECK(std::abs(rec.cos_primary) <= 1.0f);
    CHECK(std::abs(*rec.cos_spilled) <= 1.0f);
    CHECK(rec.rank_primary >= 1);
    CHECK(rec.rank_primary <= 16);
    CHECK(*rec.rank_spilled >= 1);
    CHECK(*rec.rank_spilled <= 16);
    const Vector<float> q = f.Q.row(rec.query).transpose().normalized();
    const auto r = residual(f.X.row(rec.neighbor), soar.codebook().center(f.primary.primary[rec.neighbor]));
    CHECK(rec.score_err_primary == doctest::Approx(inner_product(q, r)).epsilon(1e-4));
  }
  std::size_t binned = 0;
  for (const auto& bin : ds.summary.by_rank_primary) binned += bin.count;
  CHECK(binned == ds.records.size());
}

TEST_CASE("a datapoint sitting on its center has zero score error") {
  RowMatrixXf m(4, 2);
  m << 0, 0, 1, 0, 10, 10, 11, 10;
  const Dataset X(m);
  RowMatrixXf centers(2, 2);
  centers << 0, 0, 10.5f, 10;
  const Codebook C(centers);
  const SoarIndex index =
      build_from_partitioning(X, C, assign_primary(X, C), SpillPolicy::Naive(), 2, 0, 3);
  RowMatrixXf q(1, 2);
  q << -1, -5;
  const Diagnostics d = diagnostics(Dataset(q), X, index, 1);
  REQUIRE(d.records.size() == 1);
  CHECK(d.records[0].neighbor == 0);
  CHECK(d.records[0].cos_primary == 0.0f);
  CHECK(d.records[0].score_err_primary == 0.0f);
  CHECK(d.records[0].residual_norm == 0.0f);
}

TEST_CASE("lambda_sweep") {
  const Fixture f = fixture(3000, 8, 24, 3);
  const std::vector<float> lambdas{0.0f, 0.5f, 1.0f, 2.0f, 4.0f};
  const auto sweep = lambda_sweep(f.X, f.C, f.primary, lambdas);
  REQUIRE(sweep.size() == lambdas.size());

  const auto naive = assign_spilled_naive(f.X, f.C, f.primary);
  CHECK(sweep[0].mean_spilled_distortion ==
        doctest::Approx(quantization_error(f.X, f.C, naive.spilled) / double(f.X.size())));
  for (std::size_t i = 1; i < sweep.size(); ++i) {
    CHECK(sweep[i].mean_spilled_distortion >= sweep[i - 1].mean_spilled_distortion);
    CHECK(sweep[i].mean_rho <= sweep[i - 1].mean_rho);
  }
  const std::vector<float> unsorted{1.0f, 0.0f};
  CHECK_THROWS_AS(lambda_sweep(f.X, f.C, f.primary, unsorted), InvalidArgument);
}

TEST_CASE("Monte-Carlo loss ratios") {
  Eigen::VectorXd r = Eigen::VectorXd::Zero(16);
  r[0] = 1.0;
  Eigen::VectorXd par = Eigen::VectorXd::Zero(16);
  par[0] = 2.0;
  Eigen::VectorXd perp = Eigen::VectorXd::Zero(16);
  perp[1] = 2.0;
  const auto rep = mc_verify_theorem1(r, {perp, par}, 1.0, 200000, 5);
  CHECK(rep.candidates[1].closed_form_ratio == doctest::Approx(2.0));
  CHECK(rep.candidates[1].empirical_ratio == doctest::Approx(2.0).epsilon(0.03));

  const LossInstance inst = random_loss_instance(8, 3, 17);
  const auto zero = mc_verify_theorem1(inst.r, inst.r_primes, 0.0, 200000, 1);
  CHECK(zero.max_relative_error < 0.02);
  for (std::size_t j = 0; j < zero.candidates.size(); ++j) {
    CHECK(zero.candidates[j].closed_form == doctest::Approx(inst.r_primes[j].squaredNorm()));
  }

  CHECK_THROWS_AS(mc_verify_theorem1(r, {par}, 1.0, 1000, 5), InvalidArgument);
  CHECK_THROWS_AS(mc_verify_theorem1(Eigen::VectorXd::Zero(4), {Eigen::VectorXd::Ones(4)}, 1.0,
                                     200000, 5),
                  InvalidArgument);
}

TEST_CASE("Monte-Carlo results are reproducible for a fixed seed") {
  const LossInstance inst = random_loss_instance(8, 2, 3);
  const double lambdas[] = {0.0, 1.0};
  const auto a = mc_verify_theorem1(inst.r, inst.r_primes, lambdas, 150000, 9);
  const auto b = mc_verify_theorem1(inst.r, inst.r_primes, lambdas, 150000, 9);
  for (std::size_t l = 0; l < 2; ++l) {
    for (std::size_t j = 0; j < 2; ++j) CHECK(a[l].candidates[j].empirical == b[l].candidates[j].empirical);
  }
}

TEST_CASE("Monte-Carlo error shrinks like one over root samples") {
  double small = 0.0, large = 0.0;
  for (std::uint64_t s = 0; s < 16; ++s) {
    const LossInstance inst = random_loss_instance(6, 2, 100 + s);
    small += mc_verify_theorem1(inst.r, inst.r_primes, 1.0, 100000, 1000 + s).max_relative_error;
    large += mc_verify_theorem1(inst.r, inst.r_primes, 1.0, 400000, 2000 + s).max_relative_error;
  }
  const double ratio = small / large;
  CHECK(ratio >= 1.0);
  CHECK(ratio <= 4.0);
}

TEST_CASE("Monte-Carlo correlation lemma") {
  const Eigen::VectorXd r = Eigen::VectorXd::LinSpaced(16, -1.0, 2.0);
  CHECK(mc_verify_lemma(r, r, 100000, 1).empirical == doctest::Approx(1.0));
  Eigen::VectorXd a = Eigen::VectorXd::Zero(16), b = Eigen::VectorXd::Zero(16);
  a[0] = 1.0;
  b[1] = 3.0;
  const LemmaReport ortho = mc_verify_lemma(a, b, 1000000, 2);
  CHECK(ortho.closed_form == 0.0);
  CHECK(std::abs(ortho.empirical) < 0.005);
  CHECK_THROWS_AS(mc_verify_lemma(a, Eigen::VectorXd::Zero(16), 100000, 1), InvalidArgument);
}
