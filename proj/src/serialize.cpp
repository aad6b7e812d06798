#include "soar/index.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <ostream>

namespace soar {

namespace {

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out_.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
  }
  void u64(std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out_.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(std::span<const std::uint8_t> v) { out_.insert(out_.end(), v.begin(), v.end()); }
  void matrix(const RowMatrixXf& m) {
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) f32(m(i, j));
    }
  }

 private:
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  void section(const char* name) { section_ = name; }
  const char* section() const { return section_; }
  std::size_t remaining() const { return in_.size() - pos_; }

  void need(std::size_t count) const {
    if (remaining() < count) {
      throw FormatError(section_, "truncated: need " + std::to_string(count) + " bytes, have " +
                                      std::to_string(remaining()));
    }
  }
  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= std::uint32_t{in_[pos_++]} << (8 * b);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= std::uint64_t{in_[pos_++]} << (8 * b);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::span<const std::uint8_t> bytes(std::size_t count) {
    need(count);
    auto out = in_.subspan(pos_, count);
    pos_ += count;
    return out;
  }
  RowMatrixXf matrix(std::uint64_t rows, std::uint64_t cols) {
    need(static_cast<std::size_t>(rows * cols * 4));
    RowMatrixXf m(static_cast<Index>(rows), static_cast<Index>(cols));
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) m(i, j) = f32();
    }
    return m;
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  const char* section_ = "header";
};

// Rebuilds the assignment table from the posting lists. A spilled datapoint
// appears in two partitions; the primary one is the nearer center (lower id
// on a tie), which is exactly what assign_primary picked at build time.
AssignmentTable recover_assignment(const std::vector<PostingList>& postings, const Dataset& X,
                                   const Codebook& codebook, const SpillPolicy& policy) {
  constexpr PartitionId kUnset = 0xffffffffu;
  const auto n = static_cast<std::size_t>(X.size());
  std::vector<PartitionId> first(n, kUnset);
  std::vector<PartitionId> second(n, kUnset);
  for (std::size_t p = 0; p < postings.size(); ++p) {
    for (DatapointId id : postings[p].ids) {
      if (id >= n) throw FormatError("postings", "datapoint id " + std::to_string(id) + " >= n");
      auto& slot = first[id] == kUnset ? first[id] : second[id];
      if (slot != kUnset) {
        throw FormatError("postings", "datapoint " + std::to_string(id) + " posted too often");
      }
      if (first[id] == static_cast<PartitionId>(p)) {
        throw FormatError("postings", "datapoint " + std::to_string(id) +
                                          " posted twice in partition " + std::to_string(p));
      }
      slot = static_cast<PartitionId>(p);
    }
  }
  AssignmentTable table;
  table.policy = policy;
  table.primary.resize(n);
  if (policy.spills()) table.spilled.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (first[i] == kUnset || (policy.spills() != (second[i] != kUnset))) {
      throw FormatError("postings", "datapoint " + std::to_string(i) +
                                        " has the wrong number of postings for policy " +
                                        policy.name());
    }
    if (!policy.spills()) {
      table.primary[i] = first[i];
      continue;
    }
    const auto x = X.row(static_cast<Index>(i));
    const double da = detail::squared_distance(x, codebook.center(first[i]));
    const double db = detail::squared_distance(x, codebook.center(second[i]));
    // first[i] < second[i] because partitions are visited in order.
    const bool first_is_primary = da <= db;
    table.primary[i] = first_is_primary ? first[i] : second[i];
    table.spilled[i] = first_is_primary ? second[i] : first[i];
  }
  return table;
}

}  // namespace

std::size_t serialized_size(std::size_t n, Index dims, Index partitions, Index subspace_dims,
                            std::size_t total_postings) {
  const auto d = static_cast<std::size_t>(dims);
  const auto c = static_cast<std::size_t>(partitions);
  const auto s = static_cast<std::size_t>(subspace_dims);
  const std::size_t m = (d + s - 1) / s;
  const std::size_t code_bytes = (m + 1) / 2;
  return kIndexHeaderBytes + 4 * c * d + 4 * m * static_cast<std::size_t>(kPQCenters) * s +
         8 * c + total_postings * (kIdBytes + code_bytes) + 4 * n * d;
}

std::size_t serialized_size(const SoarIndex& index) {
  return serialized_size(static_cast<std::size_t>(index.size()), index.dims(), index.partitions(),
                         index.pq_book().subspace_dims(), index.total_postings());
}

std::vector<std::uint8_t> serialize(const SoarIndex& index) {
  std::vector<std::uint8_t> out;
  out.reserve(serialized_size(index));
  Writer w(out);
  const auto& meta = index.metadata();
  for (char ch : kIndexMagic) w.u8(static_cast<std::uint8_t>(ch));
  w.u32(meta.format_version);
  w.u32(static_cast<std::uint32_t>(index.size()));
  w.u32(static_cast<std::uint32_t>(index.dims()));
  w.u32(static_cast<std::uint32_t>(index.partitions()));
  w.u32(static_cast<std::uint32_t>(index.pq_book().subspace_dims()));
  w.u8(static_cast<std::uint8_t>(meta.policy.kind));
  w.u8(0);
  w.u8(0);
  w.u8(0);
  w.f32(meta.policy.lambda());
  w.u64(meta.seed);

  w.matrix(index.codebook().matrix());
  w.matrix(index.pq_book().centers());
  for (std::size_t p = 0; p < index.postings().size(); ++p) {
    const auto& list = index.postings()[p];
    w.u32(static_cast<std::uint32_t>(p));
    w.u32(static_cast<std::uint32_t>(list.size()));
    const Index width = index.pq_book().code_bytes();
    for (std::size_t e = 0; e < list.size(); ++e) {
      w.u32(list.ids[e]);
      w.bytes(list.code(e, width));
    }
  }
  w.matrix(index.full_store().matrix());
  return out;
}

void serialize(const SoarIndex& index, std::ostream& out) {
  const auto bytes = serialize(index);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("serialize: write failed");
}

SoarIndex deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.section("header");
  const auto magic = r.bytes(4);
  if (std::memcmp(magic.data(), kIndexMagic, 4) != 0) throw FormatError("header", "bad magic");
  const std::uint32_t version = r.u32();
  if (version != kIndexFormatVersion) {
    throw FormatError("header", "unsupported format version " + std::to_string(version));
  }
  const std::uint64_t n = r.u32();
  const std::uint64_t d = r.u32();
  const std::uint64_t c = r.u32();
  const std::uint64_t s = r.u32();
  const std::uint8_t kind = r.u8();
  r.bytes(3);
  const float lambda = r.f32();
  const std::uint64_t seed = r.u64();
  if (n == 0 || d == 0 || c == 0 || s == 0) throw FormatError("header", "zero-sized field");
  if (kind > static_cast<std::uint8_t>(SpillPolicy::Kind::soar)) {
    throw FormatError("header", "unknown spill policy " + std::to_string(kind));
  }
  if (!(lambda >= 0.0f) || !std::isfinite(lambda)) throw FormatError("header", "invalid lambda");
  // Cheap sanity bound before any allocation.
  if (n * d * 4 > r.remaining() || c * d * 4 > r.remaining()) {
    throw FormatError("header", "declared sizes exceed file length");
  }
  SpillPolicy policy{static_cast<SpillPolicy::Kind>(kind), {lambda}};

  try {
    r.section("codebook");
    Codebook codebook(r.matrix(c, d));

    r.section("pq_codebook");
    const std::uint64_t m = (d + s - 1) / s;
    if (m * static_cast<std::uint64_t>(kPQCenters) * s * 4 > r.remaining()) {
      throw FormatError("pq_codebook", "truncated");
    }
    PQCodebook pq_book(static_cast<Index>(d), static_cast<Index>(s),
                       r.matrix(m * static_cast<std::uint64_t>(kPQCenters), s));

    r.section("postings");
    const auto width = static_cast<std::size_t>(pq_book.code_bytes());
    std::vector<PostingList> postings(static_cast<std::size_t>(c));
    for (std::uint64_t p = 0; p < c; ++p) {
      const std::uint32_t id = r.u32();
      if (id != p) {
        throw FormatError("postings", "expected partition " + std::to_string(p) + ", found " +
                                          std::to_string(id));
      }
      const std::uint64_t length = r.u32();
      if (length > 2 * n || length * (kIdBytes + width) > r.remaining()) {
        throw FormatError("postings", "partition " + std::to_string(p) + " length " +
                                          std::to_string(length) + " exceeds available data");
      }
      auto& list = postings[p];
      list.ids.reserve(length);
      list.codes.reserve(length * width);
      for (std::uint64_t e = 0; e < length; ++e) {
        list.ids.push_back(r.u32());
        const auto code = r.bytes(width);
        list.codes.insert(list.codes.end(), code.begin(), code.end());
      }
    }

    r.section("full_store");
    Dataset store(r.matrix(n, d));
    if (r.remaining() != 0) {
      throw FormatError("trailer", std::to_string(r.remaining()) + " unexpected trailing bytes");
    }

    AssignmentTable assignment = recover_assignment(postings, store, codebook, policy);
    return SoarIndex(std::move(codebook), std::move(postings), std::move(store),
                     std::move(pq_book), std::move(assignment),
                     IndexMetadata{policy, seed, version});
  } catch (const FormatError&) {
    throw;
  } catch (const InvalidArgument& e) {
    throw FormatError(r.section(), e.what());
  }
}

void save_index(const SoarIndex& index, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  serialize(index, out);
}

SoarIndex load_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace soar
