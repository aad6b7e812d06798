#include "soar/synth.hpp"

#include <cmath>
#include <random>

namespace soar {

RowMatrixXf mixture_means(const MixtureSpec& spec) {
  require(spec.dims >= 1 && spec.clusters >= 1, "mixture: dims and clusters must be >= 1");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<float> uniform(-1.0f, 1.0f);
  RowMatrixXf means(spec.clusters, spec.dims);
  for (Index i = 0; i < means.rows(); ++i) {
    for (Index j = 0; j < means.cols(); ++j) means(i, j) = uniform(rng);
  }
  return means;
}

Dataset sample_mixture(const MixtureSpec& spec, Index n, std::uint64_t stream) {
  require(n >= 1, "mixture: n must be >= 1");
  require(spec.sigma >= 0.0f && std::isfinite(spec.sigma), "mixture: sigma must be >= 0");
  const RowMatrixXf means = mixture_means(spec);
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x50a2u};
  std::mt19937_64 rng(seq);
  std::normal_distribution<float> noise(0.0f, 1.0f);
  RowMatrixXf points(n, spec.dims);
  for (Index i = 0; i < n; ++i) {
    const Index cluster = i % spec.clusters;
    for (Index j = 0; j < spec.dims; ++j) {
      const float e = spec.sigma > 0.0f ? spec.sigma * noise(rng) : 0.0f;
      points(i, j) = means(cluster, j) + e;
    }
    if (spec.normalize) {
      double sq = 0.0;
      for (Index j = 0; j < spec.dims; ++j) sq += double(points(i, j)) * double(points(i, j));
      if (sq > 0.0) points.row(i) /= static_cast<float>(std::sqrt(sq));
    }
  }
  return Dataset(std::move(points));
}

}  // namespace soar
