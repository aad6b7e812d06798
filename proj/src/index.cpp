#include "soar/index.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace soar {

SoarIndex::SoarIndex(Codebook codebook, std::vector<PostingList> postings, Dataset full_store,
                     PQCodebook pq_book, AssignmentTable assignment, IndexMetadata metadata)
    : codebook_(std::move(codebook)),
      postings_(std::move(postings)),
      full_store_(std::move(full_store)),
      pq_book_(std::move(pq_book)),
      assignment_(std::move(assignment)),
      metadata_(metadata) {
  const auto n = static_cast<std::size_t>(full_store_.size());
  require_same_dims(codebook_.dims(), full_store_.dims(), "index codebook");
  require_same_dims(pq_book_.dims(), full_store_.dims(), "index PQ codebook");
  require(postings_.size() == static_cast<std::size_t>(codebook_.size()),
          "index: one posting list per partition required");
  require(assignment_.size() == n, "index: assignment table size differs from dataset");
  require(assignment_.has_spill() == metadata_.policy.spills(),
          "index: assignment table does not match the spill policy");
  const auto code_bytes = static_cast<std::size_t>(pq_book_.code_bytes());
  std::vector<std::uint8_t> seen(n, 0);
  for (const auto& list : postings_) {
    require(list.codes.size() == list.ids.size() * code_bytes,
            "index: posting codes do not match posting ids");
    for (DatapointId id : list.ids) {
      require(id < n, "index: posting references an unknown datapoint");
      ++seen[id];
    }
  }
  const std::uint8_t expected = metadata_.policy.spills() ? 2 : 1;
  for (std::size_t i = 0; i < n; ++i) {
    require(seen[i] == expected, "index: datapoint " + std::to_string(i) + " posted " +
                                     std::to_string(seen[i]) + " times, expected " +
                                     std::to_string(expected));
    if (assignment_.has_spill()) {
      require(assignment_.primary[i] != assignment_.spilled[i],
              "index: spilled partition equals primary partition");
    }
  }
}

std::size_t SoarIndex::total_postings() const noexcept {
  std::size_t total = 0;
  for (const auto& list : postings_) total += list.size();
  return total;
}

namespace {

void append_posting(PostingList& list, DatapointId id, const Dataset& X, const Codebook& codebook,
                    PartitionId partition, const PQCodebook& book) {
  const Vector<float> r = residual(X.row(id), codebook.center(partition));
  const auto width = static_cast<std::size_t>(book.code_bytes());
  list.ids.push_back(id);
  list.codes.resize(list.codes.size() + width);
  pq_encode_into(std::span<const float>(r.data(), static_cast<std::size_t>(r.size())), book,
                 std::span<std::uint8_t>(list.codes.data() + list.codes.size() - width, width));
}

}  // namespace

SoarIndex build_from_partitioning(const Dataset& X, const Codebook& codebook,
                                  const AssignmentTable& primary, const SpillPolicy& policy,
                                  Index subspace_dims, std::uint64_t seed, int pq_iters) {
  require_same_dims(X.dims(), codebook.dims(), "build");
  AssignmentTable assignment = assign_spilled(X, codebook, primary, policy);

  RowMatrixXf residuals(X.size(), X.dims());
  for (Index i = 0; i < X.size(); ++i) {
    residuals.row(i) = X.row(i) - codebook.center(assignment.primary[i]);
  }
  PQCodebook book = train_pq(Dataset(std::move(residuals)), subspace_dims, seed, pq_iters);

  std::vector<PostingList> postings(static_cast<std::size_t>(codebook.size()));
  for (Index i = 0; i < X.size(); ++i) {
    const auto id = static_cast<DatapointId>(i);
    append_posting(postings[assignment.primary[i]], id, X, codebook, assignment.primary[i], book);
    if (assignment.has_spill()) {
      append_posting(postings[assignment.spilled[i]], id, X, codebook, assignment.spilled[i], book);
    }
  }
  return SoarIndex(codebook, std::move(postings), X, std::move(book), std::move(assignment),
                   IndexMetadata{policy, seed, kIndexFormatVersion});
}

SoarIndex build(const Dataset& X, const BuildOptions& options) {
  require(options.partitions >= 1, "build: partitions must be >= 1");
  require(!options.policy.spills() || options.partitions >= 2,
          "build: spilled policies need at least 2 partitions");
  Codebook codebook = train_kmeans(X, options.partitions, options.kmeans_iters, options.seed);
  AssignmentTable primary = assign_primary(X, codebook);
  return build_from_partitioning(X, codebook, primary, options.policy, options.subspace_dims,
                                 options.seed, options.pq_iters);
}

std::vector<PartitionId> rank_partitions(std::span<const float> q, const Codebook& codebook) {
  require_same_dims(static_cast<Index>(q.size()), codebook.dims(), "rank_partitions");
  const Eigen::Map<const Vector<float>> query(q.data(), static_cast<Index>(q.size()));
  std::vector<Neighbor> scored(static_cast<std::size_t>(codebook.size()));
  for (Index j = 0; j < codebook.size(); ++j) {
    scored[j] = Neighbor{static_cast<DatapointId>(j), inner_product(query, codebook.center(j))};
  }
  std::sort(scored.begin(), scored.end(), ranks_before);
  std::vector<PartitionId> order(scored.size());
  std::transform(scored.begin(), scored.end(), order.begin(),
                 [](const Neighbor& nb) { return nb.id; });
  return order;
}

SearchResult search(const SoarIndex& index, std::span<const float> q, const SearchParams& params) {
  require_same_dims(static_cast<Index>(q.size()), index.dims(), "search");
  const auto n = static_cast<std::size_t>(index.size());
  require(params.k >= 1 && params.k <= n, "search: need 1 <= k <= n");
  require(params.probes >= 1, "search: probes must be >= 1");
  const std::size_t rerank = params.rerank.value_or(std::max<std::size_t>(10 * params.k, 100));
  require(rerank >= params.k, "search: rerank must be >= k");

  const Eigen::Map<const Vector<float>> query(q.data(), static_cast<Index>(q.size()));
  const auto& codebook = index.codebook();
  std::vector<Neighbor> partition_scores(static_cast<std::size_t>(codebook.size()));
  for (Index j = 0; j < codebook.size(); ++j) {
    partition_scores[j] =
        Neighbor{static_cast<DatapointId>(j), inner_product(query, codebook.center(j))};
  }
  std::sort(partition_scores.begin(), partition_scores.end(), ranks_before);

  const PQLookupTable table(q, index.pq_book());
  const Index code_bytes = index.pq_book().code_bytes();
  std::vector<float> best(n, -std::numeric_limits<float>::infinity());
  std::vector<DatapointId> touched;

  SearchResult out;
  const std::size_t probes = std::min<std::size_t>(params.probes, partition_scores.size());
  for (std::size_t p = 0; p < partition_scores.size(); ++p) {
    const auto& list = index.postings()[partition_scores[p].id];
    if (params.budget) {
      if (p > 0 && out.datapoints_scanned + list.size() > *params.budget) break;
    } else if (p >= probes) {
      break;
    }
    const float center_score = partition_scores[p].score;
    for (std::size_t e = 0; e < list.size(); ++e) {
      const DatapointId id = list.ids[e];
      const float approx = center_score + table.score(list.code(e, code_bytes));
      if (best[id] == -std::numeric_limits<float>::infinity()) touched.push_back(id);
      best[id] = std::max(best[id], approx);
    }
    out.datapoints_scanned += list.size();
    ++out.partitions_scanned;
  }

  std::vector<Neighbor> candidates(touched.size());
  for (std::size_t i = 0; i < touched.size(); ++i) candidates[i] = {touched[i], best[touched[i]]};
  if (candidates.size() > rerank) {
    std::nth_element(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(rerank - 1),
                     candidates.end(), ranks_before);
    candidates.resize(rerank);
  }
  for (auto& c : candidates) c.score = inner_product(query, index.full_store().row(c.id));
  const std::size_t keep = std::min(params.k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                    candidates.end(), ranks_before);
  candidates.resize(keep);
  out.neighbors = std::move(candidates);
  return out;
}

}  // namespace soar
