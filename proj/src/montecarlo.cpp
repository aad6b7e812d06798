#include "soar/eval.hpp"
#include "soar/parallel.hpp"

#include <cmath>
#include <random>

namespace soar {

namespace {

constexpr std::size_t kBlockSamples = 1 << 15;

std::mt19937_64 block_rng(std::uint64_t seed, std::size_t block) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32)};
  return std::mt19937_64(seq);
}

// Fills `projections` (rows = samples, cols = directions) with <q, v_j> for
// unit-sphere queries q, where the columns of `directions` are the v_j.
void sample_projections(const Eigen::MatrixXd& directions, std::size_t count, std::uint64_t seed,
                        std::size_t block, Eigen::MatrixXd& projections) {
  const Index d = directions.rows();
  auto rng = block_rng(seed, block);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd gauss(static_cast<Index>(count), d);
  for (Index i = 0; i < gauss.rows(); ++i) {
    for (Index j = 0; j < d; ++j) gauss(i, j) = normal(rng);
  }
  gauss.array().colwise() /= gauss.rowwise().norm().array();
  projections.noalias() = gauss * directions;
}

std::size_t block_count(std::size_t samples) {
  return (samples + kBlockSamples - 1) / kBlockSamples;
}

std::size_t block_size(std::size_t samples, std::size_t block) {
  return std::min(kBlockSamples, samples - block * kBlockSamples);
}

}  // namespace

std::vector<Theorem1Report> mc_verify_theorem1(const Eigen::VectorXd& r,
                                               const std::vector<Eigen::VectorXd>& r_primes,
                                               std::span<const double> lambdas,
                                               std::size_t samples, std::uint64_t seed) {
  require(r.size() >= 2, "mc_verify_theorem1: need d >= 2");
  require(samples >= kMinMonteCarloSamples,
          "mc_verify_theorem1: need at least " + std::to_string(kMinMonteCarloSamples) + " samples");
  require(!r_primes.empty(), "mc_verify_theorem1: need at least one candidate");
  const double rn = r.norm();
  require(rn > 0.0, "mc_verify_theorem1: r must be nonzero");
  for (const auto& rp : r_primes) require_same_dims(rp.size(), r.size(), "mc_verify_theorem1");
  for (double lambda : lambdas) require(lambda >= 0.0, "mc_verify_theorem1: lambda must be >= 0");

  const Index d = r.size();
  const auto candidates = r_primes.size();
  Eigen::MatrixXd directions(d, static_cast<Index>(candidates + 1));
  directions.col(0) = r / rn;
  for (std::size_t j = 0; j < candidates; ++j) directions.col(static_cast<Index>(j + 1)) = r_primes[j];

  // sums[block](l, j): sum over the block of |cos theta|^lambda_l <q, r'_j>^2.
  const std::size_t blocks = block_count(samples);
  std::vector<Eigen::MatrixXd> sums(blocks);
  parallel_for(blocks, [&](std::size_t b) {
    Eigen::MatrixXd proj;
    sample_projections(directions, block_size(samples, b), seed, b, proj);
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(static_cast<Index>(lambdas.size()),
                                                static_cast<Index>(candidates));
    for (Index i = 0; i < proj.rows(); ++i) {
      const double cos_abs = std::abs(proj(i, 0));
      for (std::size_t l = 0; l < lambdas.size(); ++l) {
        const double w = lambdas[l] == 0.0 ? 1.0 : std::pow(cos_abs, lambdas[l]);
        for (std::size_t j = 0; j < candidates; ++j) {
          const double s = proj(i, static_cast<Index>(j + 1));
          acc(static_cast<Index>(l), static_cast<Index>(j)) += w * s * s;
        }
      }
    }
    sums[b] = std::move(acc);
  }, 0);

  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(static_cast<Index>(lambdas.size()),
                                                static_cast<Index>(candidates));
  for (const auto& s : sums) total += s;
  total /= double(samples);

  std::vector<Theorem1Report> out;
  for (std::size_t l = 0; l < lambdas.size(); ++l) {
    Theorem1Report report;
    report.lambda = lambdas[l];
    for (std::size_t j = 0; j < candidates; ++j) {
      Theorem1Candidate cand;
      cand.empirical = total(static_cast<Index>(l), static_cast<Index>(j));
      cand.closed_form = soar_loss(r_primes[j], r, lambdas[l]);
      report.candidates.push_back(cand);
    }
    const auto& base = report.candidates.front();
    const double emp0 = base.empirical;
    const double closed0 = base.closed_form;
    for (auto& cand : report.candidates) {
      cand.empirical_ratio = cand.empirical / emp0;
      cand.closed_form_ratio = cand.closed_form / closed0;
      cand.relative_error = std::abs(cand.empirical_ratio / cand.closed_form_ratio - 1.0);
      report.max_relative_error = std::max(report.max_relative_error, cand.relative_error);
    }
    out.push_back(std::move(report));
  }
  return out;
}

Theorem1Report mc_verify_theorem1(const Eigen::VectorXd& r,
                                  const std::vector<Eigen::VectorXd>& r_primes, double lambda,
                                  std::size_t samples, std::uint64_t seed) {
  const double lambdas[] = {lambda};
  return mc_verify_theorem1(r, r_primes, std::span<const double>(lambdas), samples, seed).front();
}

LemmaReport mc_verify_lemma(const Eigen::VectorXd& r, const Eigen::VectorXd& r_prime,
                            std::size_t samples, std::uint64_t seed) {
  require(r.size() >= 2, "mc_verify_lemma: need d >= 2");
  require_same_dims(r.size(), r_prime.size(), "mc_verify_lemma");
  require(samples >= kMinMonteCarloSamples,
          "mc_verify_lemma: need at least " + std::to_string(kMinMonteCarloSamples) + " samples");
  const double rn = r.norm();
  const double pn = r_prime.norm();
  require(rn > 0.0 && pn > 0.0, "mc_verify_lemma: zero-norm input");

  Eigen::MatrixXd directions(r.size(), 2);
  directions.col(0) = r;
  directions.col(1) = r_prime;
  // Per block: sum a, sum b, sum a^2, sum b^2, sum ab.
  const std::size_t blocks = block_count(samples);
  std::vector<Eigen::Matrix<double, 5, 1>> sums(blocks);
  parallel_for(blocks, [&](std::size_t b) {
    Eigen::MatrixXd proj;
    sample_projections(directions, block_size(samples, b), seed, b, proj);
    const auto a = proj.col(0).array();
    const auto c = proj.col(1).array();
    sums[b] << a.sum(), c.sum(), a.square().sum(), c.square().sum(), (a * c).sum();
  }, 0);
  Eigen::Matrix<double, 5, 1> total = Eigen::Matrix<double, 5, 1>::Zero();
  for (const auto& s : sums) total += s;

  const double n = double(samples);
  const double ma = total[0] / n;
  const double mb = total[1] / n;
  const double cov = total[4] / n - ma * mb;
  const double va = total[2] / n - ma * ma;
  const double vb = total[3] / n - mb * mb;
  LemmaReport out;
  out.empirical = std::clamp(cov / std::sqrt(va * vb), -1.0, 1.0);
  out.closed_form = std::clamp(r.dot(r_prime) / (rn * pn), -1.0, 1.0);
  out.abs_error = std::abs(out.empirical - out.closed_form);
  return out;
}

LossInstance random_loss_instance(Index dims, std::size_t candidates, std::uint64_t seed) {
  require(dims >= 2, "random_loss_instance: need d >= 2");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> along(-1.0, 1.0);
  LossInstance out;
  out.r = Eigen::VectorXd::NullaryExpr(dims, [&] { return normal(rng); });
  const Eigen::VectorXd unit = out.r.normalized();
  const double scale = 1.0 / std::sqrt(double(dims));
  for (std::size_t j = 0; j < candidates; ++j) {
    const double a = along(rng);
    Eigen::VectorXd g = Eigen::VectorXd::NullaryExpr(dims, [&] { return normal(rng) * scale; });
    out.r_primes.push_back(a * unit + g);
  }
  return out;
}

}  // namespace soar
