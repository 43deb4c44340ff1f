#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace crowdbias::csv {

struct Row {
  std::vector<std::string> fields;
  // 1-based physical line on which the record starts.
  std::size_t line = 0;
};

// RFC 4180 reader: quoted fields may contain separators, doubled quotes and
// line breaks. CRLF and LF line endings are both accepted.
class Reader {
 public:
  explicit Reader(std::istream& in, char separator = ',');

  // Reads the next record. Returns false at end of input.
  bool next(Row& row);

 private:
  std::istream& in_;
  char separator_;
  std::size_t line_ = 1;
};

// Quotes a field when it contains the separator, a quote or a line break.
std::string escape(std::string_view field, char separator = ',');

void write_row(std::ostream& out, const std::vector<std::string>& fields,
               char separator = ',');

// Reads a whole file; throws InputError if it cannot be opened.
std::vector<Row> read_file(const std::string& path, char separator = ',');

}  // namespace crowdbias::csv
