#pragma once

#include "soar/types.hpp"

#include <cstdint>

namespace soar {

/// Gaussian mixture with cluster means uniform in [-1, 1]^d and isotropic
/// noise N(0, sigma^2 I). Datapoint i belongs to cluster i mod clusters.
/// With `normalize`, each sample is then scaled to unit norm, so inner
/// product order matches cosine order as in normalized embedding sets.
struct MixtureSpec {
  Index dims = 0;
  Index clusters = 1;
  float sigma = 0.1f;
  std::uint64_t seed = 0;
  bool normalize = false;
};

RowMatrixXf mixture_means(const MixtureSpec& spec);

/// `stream` selects an independent draw from the same mixture, e.g. 0 for
/// the dataset and 1 for held-out queries.
Dataset sample_mixture(const MixtureSpec& spec, Index n, std::uint64_t stream = 0);

}  // namespace soar
