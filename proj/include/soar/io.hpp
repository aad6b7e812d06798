#pragma once

#include "soar/types.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace soar {

/// fvecs: per vector a little-endian u32 dimension followed by d float32s.
Dataset read_fvecs(const std::filesystem::path& path, std::optional<std::size_t> limit = {});
void write_fvecs(const std::filesystem::path& path, const Dataset& data);

/// ivecs: same layout with int32 payloads; used for ground-truth id lists.
std::vector<std::vector<std::int32_t>> read_ivecs(const std::filesystem::path& path);
void write_ivecs(const std::filesystem::path& path,
                 const std::vector<std::vector<std::int32_t>>& rows);

/// 64-bit FNV-1a over the raw float bytes; keys cached ground truth.
std::uint64_t dataset_fingerprint(const Dataset& data);

/// Shortest decimal form that parses back to the same value.
std::string format_number(float value);
std::string format_number(double value);

/// RFC 4180 style CSV: fields containing a comma, quote or newline are
/// quoted, embedded quotes doubled, rows end with "\n".
class CsvWriter {
 public:
  CsvWriter(std::ostream& out, const std::vector<std::string>& header);

  void row(const std::vector<std::string>& fields);
  std::size_t columns() const noexcept { return columns_; }

  static std::string quote(std::string_view field);

 private:
  std::ostream& out_;
  std::size_t columns_;
};

}  // namespace soar
