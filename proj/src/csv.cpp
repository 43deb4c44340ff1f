#include "crowdbias/csv.hpp"

#include <fstream>

#include "crowdbias/error.hpp"

namespace crowdbias::csv {

Reader::Reader(std::istream& in, char separator)
    : in_(in), separator_(separator) {}

bool Reader::next(Row& row) {
  row.fields.clear();
  row.line = line_;
  if (in_.peek() == std::char_traits<char>::eof()) return false;

  std::string field;
  bool quoted = false;
  bool field_started_quoted = false;
  for (;;) {
    const int c = in_.get();
    if (c == std::char_traits<char>::eof()) {
      if (quoted) {
        throw InputError("line " + std::to_string(row.line) +
                         ": unterminated quoted field");
      }
      row.fields.push_back(std::move(field));
      return true;
    }
    const char ch = static_cast<char>(c);
    if (quoted) {
      if (ch == '"') {
        if (in_.peek() == '"') {
          in_.get();
          field.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        if (ch == '\n') ++line_;
        field.push_back(ch);
      }
      continue;
    }
    if (ch == '"' && field.empty() && !field_started_quoted) {
      quoted = true;
      field_started_quoted = true;
    } else if (ch == separator_) {
      row.fields.push_back(std::move(field));
      field.clear();
      field_started_quoted = false;
    } else if (ch == '\r' && in_.peek() == '\n') {
      // CRLF; the LF ends the record on the next pass.
    } else if (ch == '\n') {
      ++line_;
      row.fields.push_back(std::move(field));
      return true;
    } else {
      field.push_back(ch);
    }
  }
}

std::string escape(std::string_view field, char separator) {
  const bool needs_quotes =
      field.find_first_of(std::string{separator, '"', '\n', '\r'}) !=
      std::string_view::npos;
  if (!needs_quotes) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void write_row(std::ostream& out, const std::vector<std::string>& fields,
               char separator) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out << separator;
    out << escape(fields[i], separator);
  }
  out << '\n';
}

std::vector<Row> read_file(const std::string& path, char separator) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  Reader reader(in, separator);
  std::vector<Row> rows;
  Row row;
  while (reader.next(row)) {
    // Skip blank trailing lines.
    if (row.fields.size() == 1 && row.fields[0].empty()) continue;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace crowdbias::csv
