#pragma once

#include "soar/core.hpp"
#include "soar/pq.hpp"
#include "soar/types.hpp"
#include "soar/vq.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace soar {

inline constexpr std::uint32_t kIndexFormatVersion = 1;
inline constexpr char kIndexMagic[4] = {'S', 'O', 'A', 'R'};
/// Fixed header size in bytes; identical for every policy.
inline constexpr std::size_t kIndexHeaderBytes = 40;

/// One partition's postings: datapoint ids with their packed PQ codes,
/// stored contiguously (entry i owns codes[i * code_bytes, (i + 1) * code_bytes)).
struct PostingList {
  std::vector<DatapointId> ids;
  std::vector<std::uint8_t> codes;

  std::size_t size() const noexcept { return ids.size(); }
  std::span<const std::uint8_t> code(std::size_t i, Index code_bytes) const {
    const auto width = static_cast<std::size_t>(code_bytes);
    return {codes.data() + i * width, width};
  }

  friend bool operator==(const PostingList&, const PostingList&) = default;
};

struct IndexMetadata {
  SpillPolicy policy;
  std::uint64_t seed = 0;
  std::uint32_t format_version = kIndexFormatVersion;

  friend bool operator==(const IndexMetadata&, const IndexMetadata&) = default;
};

/// Searchable inverted-file index. Every datapoint is posted once (no spill)
/// or in exactly two distinct partitions, while the full-precision copy is
/// stored once. Immutable after construction.
class SoarIndex {
 public:
  SoarIndex(Codebook codebook, std::vector<PostingList> postings, Dataset full_store,
            PQCodebook pq_book, AssignmentTable assignment, IndexMetadata metadata);

  const Codebook& codebook() const noexcept { return codebook_; }
  const std::vector<PostingList>& postings() const noexcept { return postings_; }
  const Dataset& full_store() const noexcept { return full_store_; }
  const PQCodebook& pq_book() const noexcept { return pq_book_; }
  const AssignmentTable& assignment() const noexcept { return assignment_; }
  const IndexMetadata& metadata() const noexcept { return metadata_; }

  Index size() const noexcept { return full_store_.size(); }
  Index dims() const noexcept { return full_store_.dims(); }
  Index partitions() const noexcept { return codebook_.size(); }
  std::size_t total_postings() const noexcept;

  friend bool operator==(const SoarIndex&, const SoarIndex&) = default;

 private:
  Codebook codebook_;
  std::vector<PostingList> postings_;
  Dataset full_store_;
  PQCodebook pq_book_;
  AssignmentTable assignment_;
  IndexMetadata metadata_;
};

struct BuildOptions {
  Index partitions = 0;
  SpillPolicy policy;
  Index subspace_dims = 2;
  std::uint64_t seed = 0;
  int kmeans_iters = kDefaultKMeansIters;
  int pq_iters = 25;
};

/// train_kmeans -> assign_primary -> spill pass -> residuals -> train_pq ->
/// encode postings. Deterministic for a fixed seed.
SoarIndex build(const Dataset& X, const BuildOptions& options);

inline SoarIndex build(const Dataset& X, Index partitions, const SpillPolicy& policy,
                       Index subspace_dims, std::uint64_t seed) {
  return build(X, BuildOptions{partitions, policy, subspace_dims, seed});
}

/// The build pipeline after k-means, for callers that share one trained
/// codebook and primary assignment across several spill policies.
SoarIndex build_from_partitioning(const Dataset& X, const Codebook& codebook,
                                  const AssignmentTable& primary, const SpillPolicy& policy,
                                  Index subspace_dims, std::uint64_t seed, int pq_iters = 25);

struct SearchParams {
  std::size_t k = 10;
  std::size_t probes = 1;
  /// Candidates rescored at full precision; defaults to max(10 k, 100).
  std::optional<std::size_t> rerank;
  /// When set, scan whole partitions in rank order while the running total of
  /// postings stays within the budget. Overrides `probes`. The top partition
  /// is always scanned.
  std::optional<std::size_t> budget;
};

struct SearchResult {
  std::vector<Neighbor> neighbors;
  /// Posting entries visited, spilled duplicates counted individually.
  std::size_t datapoints_scanned = 0;
  std::size_t partitions_scanned = 0;
};

/// Partition ids ordered by <q, C_i> descending, ties to the lower id.
std::vector<PartitionId> rank_partitions(std::span<const float> q, const Codebook& codebook);

template <typename Q>
std::vector<PartitionId> rank_partitions(const Eigen::MatrixBase<Q>& q, const Codebook& codebook) {
  const Vector<float> dense = detail::to_float_vector(q);
  return rank_partitions(std::span<const float>(dense.data(), dense.size()), codebook);
}

SearchResult search(const SoarIndex& index, std::span<const float> q, const SearchParams& params);

template <typename Q>
SearchResult search(const SoarIndex& index, const Eigen::MatrixBase<Q>& q,
                    const SearchParams& params) {
  const Vector<float> dense = detail::to_float_vector(q);
  return search(index, std::span<const float>(dense.data(), dense.size()), params);
}

/// Byte size of the serialized form of an index with these shapes.
std::size_t serialized_size(std::size_t n, Index dims, Index partitions, Index subspace_dims,
                            std::size_t total_postings);
std::size_t serialized_size(const SoarIndex& index);

void serialize(const SoarIndex& index, std::ostream& out);
std::vector<std::uint8_t> serialize(const SoarIndex& index);
/// Throws FormatError naming the failing section.
SoarIndex deserialize(std::span<const std::uint8_t> bytes);

void save_index(const SoarIndex& index, const std::filesystem::path& path);
SoarIndex load_index(const std::filesystem::path& path);

}  // namespace soar
