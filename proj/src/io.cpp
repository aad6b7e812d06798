#include "soar/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <ostream>

namespace soar {

namespace {

std::uint32_t read_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  return std::uint32_t{b[0]} | std::uint32_t{b[1]} << 8 | std::uint32_t{b[2]} << 16 |
         std::uint32_t{b[3]} << 24;
}

void write_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v), static_cast<char>(v >> 8),
                              static_cast<char>(v >> 16), static_cast<char>(v >> 24)};
  out.write(b.data(), 4);
}

// Reads every record of a *vecs file as raw 32-bit words.
template <typename OnRecord>
void read_vecs(const std::filesystem::path& path, const char* kind, std::optional<std::size_t> limit,
               OnRecord&& on_record) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::uint32_t> words;
  std::size_t count = 0;
  while (!limit || count < *limit) {
    in.peek();
    if (in.eof()) break;
    const std::uint32_t dim = read_u32(in);
    if (!in) throw FormatError(kind, "truncated dimension header in record " + std::to_string(count));
    if (dim == 0 || dim > (1u << 24)) {
      throw FormatError(kind, "implausible dimension " + std::to_string(dim) + " in record " +
                                  std::to_string(count));
    }
    words.resize(dim);
    for (auto& w : words) w = read_u32(in);
    if (!in) throw FormatError(kind, "truncated payload in record " + std::to_string(count));
    on_record(count, words);
    ++count;
  }
}

}  // namespace

Dataset read_fvecs(const std::filesystem::path& path, std::optional<std::size_t> limit) {
  std::vector<float> values;
  std::size_t dims = 0;
  std::size_t rows = 0;
  read_vecs(path, "fvecs", limit, [&](std::size_t index, const std::vector<std::uint32_t>& words) {
    if (index == 0) dims = words.size();
    if (words.size() != dims) {
      throw FormatError("fvecs", "record " + std::to_string(index) + " has dimension " +
                                     std::to_string(words.size()) + ", expected " +
                                     std::to_string(dims));
    }
    for (auto w : words) values.push_back(std::bit_cast<float>(w));
    ++rows;
  });
  if (rows == 0) throw FormatError("fvecs", "no vectors in " + path.string());
  RowMatrixXf m = Eigen::Map<const RowMatrixXf>(values.data(), static_cast<Index>(rows),
                                                static_cast<Index>(dims));
  if (!m.allFinite()) throw FormatError("fvecs", "non-finite value in " + path.string());
  return Dataset(std::move(m));
}

void write_fvecs(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  for (Index i = 0; i < data.size(); ++i) {
    write_u32(out, static_cast<std::uint32_t>(data.dims()));
    for (Index j = 0; j < data.dims(); ++j) write_u32(out, std::bit_cast<std::uint32_t>(data.matrix()(i, j)));
  }
  if (!out) throw Error("write failed: " + path.string());
}

std::vector<std::vector<std::int32_t>> read_ivecs(const std::filesystem::path& path) {
  std::vector<std::vector<std::int32_t>> rows;
  read_vecs(path, "ivecs", std::nullopt, [&](std::size_t, const std::vector<std::uint32_t>& words) {
    auto& row = rows.emplace_back(words.size());
    for (std::size_t i = 0; i < words.size(); ++i) row[i] = std::bit_cast<std::int32_t>(words[i]);
  });
  return rows;
}

void write_ivecs(const std::filesystem::path& path,
                 const std::vector<std::vector<std::int32_t>>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  for (const auto& row : rows) {
    write_u32(out, static_cast<std::uint32_t>(row.size()));
    for (auto v : row) write_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  if (!out) throw Error("write failed: " + path.string());
}

std::uint64_t dataset_fingerprint(const Dataset& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint32_t word) {
    for (int b = 0; b < 4; ++b) {
      h ^= (word >> (8 * b)) & 0xffu;
      h *= 0x100000001b3ULL;
    }
  };
  mix(static_cast<std::uint32_t>(data.size()));
  mix(static_cast<std::uint32_t>(data.dims()));
  const auto& m = data.matrix();
  for (Index i = 0; i < m.size(); ++i) mix(std::bit_cast<std::uint32_t>(m.data()[i]));
  return h;
}

std::string format_number(float value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

std::string format_number(double value) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(std::ostream& out, const std::vector<std::string>& header)
    : out_(out), columns_(header.size()) {
  require(!header.empty(), "CSV header must not be empty");
  row(header);
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  require(fields.size() == columns_, "CSV row has " + std::to_string(fields.size()) +
                                         " fields, header has " + std::to_string(columns_));
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ << ',';
    out_ << quote(fields[i]);
  }
  out_ << '\n';
}

std::string CsvWriter::quote(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

}  // namespace soar
