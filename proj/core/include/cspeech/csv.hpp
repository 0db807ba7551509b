#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace cspeech::csv {

struct Row {
  std::size_t line = 0;  // 1-based line on which the record starts
  std::vector<std::string> fields;
};

/// RFC 4180 reader: quoted fields, doubled quotes, embedded newlines, CRLF.
/// Throws DataError on an unterminated quote.
std::vector<Row> parse(std::string_view text);

/// Quotes a field when it contains a delimiter, quote or newline.
std::string escape(std::string_view field);

}  // namespace cspeech::csv
