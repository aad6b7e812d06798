#include "soar/vq.hpp"

#include "lloyd.hpp"
#include "soar/parallel.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <set>
#include <string_view>

namespace soar {

namespace {

struct RowBytesLess {
  Index cols;
  bool operator()(const float* a, const float* b) const {
    return std::memcmp(a, b, sizeof(float) * static_cast<std::size_t>(cols)) < 0;
  }
};

// Nudges bit-identical rows apart by stepping one coordinate to the next
// representable float until the row is unique.
void separate_duplicates(RowMatrixXf& centers) {
  std::set<const float*, RowBytesLess> seen(RowBytesLess{centers.cols()});
  for (Index j = 0; j < centers.rows(); ++j) {
    Index coord = 0;
    while (!seen.insert(centers.row(j).data()).second) {
      float& v = centers(j, coord);
      v = std::nextafter(v, std::numeric_limits<float>::infinity());
      coord = (coord + 1) % centers.cols();
    }
  }
}

void check_primary(const Dataset& X, const Codebook& codebook, const AssignmentTable& primary) {
  require_same_dims(X.dims(), codebook.dims(), "spilled assignment");
  require(codebook.size() >= 2, "spilled assignment needs at least 2 partitions");
  require(primary.size() == static_cast<std::size_t>(X.size()),
          "spilled assignment: primary table size differs from dataset");
}

// Spilled partition under the SOAR loss. The squared distance term uses the
// same accumulation order as detail::squared_distance, so lambda = 0 picks
// exactly the second-nearest center.
template <typename Row>
PartitionId best_spill(const Row& x, const Codebook& codebook, PartitionId primary,
                       double lambda) {
  const Index d = x.size();
  const auto& C = codebook.matrix();
  Eigen::VectorXd r(d);
  for (Index t = 0; t < d; ++t) r[t] = double(x.coeff(t)) - double(C(primary, t));
  const double rr = r.squaredNorm();
  const bool penalize = lambda > 0.0 && rr > 0.0;

  PartitionId arg = 0;
  double best = std::numeric_limits<double>::infinity();
  for (Index j = 0; j < codebook.size(); ++j) {
    if (static_cast<PartitionId>(j) == primary) continue;
    const double dist = detail::squared_distance(x, C.row(j));
    double loss = dist;
    if (penalize) {
      double along = 0.0;
      for (Index t = 0; t < d; ++t) along += r[t] * (double(x.coeff(t)) - double(C(j, t)));
      loss += lambda * (along * along / rr);
    }
    if (loss < best) {
      best = loss;
      arg = static_cast<PartitionId>(j);
    }
  }
  return arg;
}

}  // namespace

Codebook::Codebook(RowMatrixXf centers) : centers_(std::move(centers)) {
  require(centers_.rows() >= 1 && centers_.cols() >= 1, "codebook must be non-empty");
  require(centers_.allFinite(), "codebook contains NaN or Inf");
  std::set<const float*, RowBytesLess> seen(RowBytesLess{centers_.cols()});
  for (Index j = 0; j < centers_.rows(); ++j) {
    require(seen.insert(centers_.row(j).data()).second, "codebook has bit-identical centers");
  }
}

std::string SpillPolicy::name() const {
  switch (kind) {
    case Kind::none: return "none";
    case Kind::naive: return "naive";
    case Kind::soar: return "soar";
  }
  return "unknown";
}

SpillPolicy SpillPolicy::parse(const std::string& name, float lambda) {
  if (name == "none") return None();
  if (name == "naive") return Naive();
  if (name == "soar") {
    require(lambda >= 0.0f && std::isfinite(lambda), "lambda must be finite and >= 0");
    return Soar(lambda);
  }
  throw InvalidArgument("unknown spill policy '" + name + "' (expected none|naive|soar)");
}

Codebook train_kmeans(const Dataset& X, Index partitions, int max_iters, std::uint64_t seed,
                      KMeansTrace* trace) {
  require(partitions >= 1, "train_kmeans: need at least one partition");
  require(partitions <= X.size(), "train_kmeans: more partitions than datapoints");
  require(max_iters >= 1, "train_kmeans: max_iters must be >= 1");
  const RowMatrixXd points = X.matrix().cast<double>();
  auto fit = detail::lloyd(points, partitions, max_iters, seed);
  if (trace) {
    trace->objective = std::move(fit.objective);
    trace->iterations = fit.iterations;
    trace->converged = fit.converged;
  }
  RowMatrixXf centers = fit.centers.cast<float>();
  separate_duplicates(centers);
  return Codebook(std::move(centers));
}

AssignmentTable assign_primary(const Dataset& X, const Codebook& codebook) {
  require_same_dims(X.dims(), codebook.dims(), "assign_primary");
  AssignmentTable out;
  out.policy = SpillPolicy::None();
  out.primary.resize(static_cast<std::size_t>(X.size()));
  const auto& C = codebook.matrix();
  parallel_for(out.primary.size(), [&](std::size_t i) {
    const auto x = X.row(static_cast<Index>(i));
    PartitionId arg = 0;
    double best = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < C.rows(); ++j) {
      const double d = detail::squared_distance(x, C.row(j));
      if (d < best) {
        best = d;
        arg = static_cast<PartitionId>(j);
      }
    }
    out.primary[i] = arg;
  });
  return out;
}

AssignmentTable assign_spilled_soar(const Dataset& X, const Codebook& codebook,
                                    const AssignmentTable& primary, float lambda) {
  require(lambda >= 0.0f && std::isfinite(lambda), "assign_spilled_soar: lambda must be >= 0");
  check_primary(X, codebook, primary);
  AssignmentTable out;
  out.policy = SpillPolicy::Soar(lambda);
  out.primary = primary.primary;
  out.spilled.resize(out.primary.size());
  parallel_for(out.primary.size(), [&](std::size_t i) {
    out.spilled[i] =
        best_spill(X.row(static_cast<Index>(i)), codebook, out.primary[i], double(lambda));
  });
  return out;
}

AssignmentTable assign_spilled_naive(const Dataset& X, const Codebook& codebook,
                                     const AssignmentTable& primary) {
  check_primary(X, codebook, primary);
  AssignmentTable out;
  out.policy = SpillPolicy::Naive();
  out.primary = primary.primary;
  out.spilled.resize(out.primary.size());
  parallel_for(out.primary.size(), [&](std::size_t i) {
    out.spilled[i] = best_spill(X.row(static_cast<Index>(i)), codebook, out.primary[i], 0.0);
  });
  return out;
}

AssignmentTable assign_spilled(const Dataset& X, const Codebook& codebook,
                               const AssignmentTable& primary, const SpillPolicy& policy) {
  switch (policy.kind) {
    case SpillPolicy::Kind::none: {
      AssignmentTable out;
      out.primary = primary.primary;
      out.policy = policy;
      return out;
    }
    case SpillPolicy::Kind::naive: return assign_spilled_naive(X, codebook, primary);
    case SpillPolicy::Kind::soar: return assign_spilled_soar(X, codebook, primary, policy.lambda());
  }
  throw InvalidArgument("unknown spill policy");
}

double quantization_error(const Dataset& X, const Codebook& codebook,
                          const std::vector<PartitionId>& assignment) {
  require(assignment.size() == static_cast<std::size_t>(X.size()),
          "quantization_error: assignment size differs from dataset");
  double total = 0.0;
  for (Index i = 0; i < X.size(); ++i) {
    total += detail::squared_distance(X.row(i), codebook.center(assignment[i]));
  }
  return total;
}

}  // namespace soar
