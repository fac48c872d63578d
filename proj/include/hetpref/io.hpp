#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hetpref {

/// 64-bit FNV-1a digest of `bytes` as 16 lowercase hex digits. Used as a
/// content identity for catalogs, datasets and ensembles, not for security.
std::string content_hash(std::string_view bytes);

/// Shortest decimal form that round-trips to the same double.
std::string format_double(double x);

std::string read_file(const std::filesystem::path& path);

/// Writes `contents` to `path`, creating parent directories.
void write_file(const std::filesystem::path& path, std::string_view contents);

/// Minimal CSV builder; fields are written verbatim, numbers via format_double.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);

  CsvWriter& field(std::string_view text);
  CsvWriter& field(double value);
  CsvWriter& field(long long value);
  CsvWriter& field(std::size_t value) { return field(static_cast<long long>(value)); }
  CsvWriter& field(int value) { return field(static_cast<long long>(value)); }
  void end_row();

  const std::string& str() const { return out_; }
  std::size_t rows() const { return rows_; }

 private:
  std::string out_;
  std::size_t columns_;
  std::size_t current_ = 0;
  std::size_t rows_ = 0;
};

}  // namespace hetpref
