#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace kinetic {

// Shortest text that round-trips a float64: printf %.17g.
std::string dtoa17(double v);

// RFC 4180 writer: CRLF line endings, quoting only where required.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& os) : os_(os) {}
  CsvWriter& field(const std::string& s);
  CsvWriter& field(double v) { return field(dtoa17(v)); }
  CsvWriter& field(std::int64_t v) { return field(std::to_string(v)); }
  CsvWriter& field(std::uint64_t v) { return field(std::to_string(v)); }
  void end_row();

 private:
  std::ostream& os_;
  bool row_open_ = false;
};

std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(const std::string& s);

void write_u64_le(std::ostream& os, std::uint64_t v);
void write_f64_le(std::ostream& os, double v);
std::uint64_t read_u64_le(std::istream& is);
double read_f64_le(std::istream& is);

}  // namespace kinetic
