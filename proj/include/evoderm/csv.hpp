#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace evoderm::csv {

using Row = std::vector<std::string>;

/// RFC 4180 parsing: comma separators, double-quoted fields with "" escapes,
/// CRLF or LF line endings. Blank lines are skipped. Throws MalformedInput
/// with the 1-based line number on an unterminated quote.
std::vector<Row> parse(std::string_view text);

/// Quotes the field only when it contains a comma, quote, or newline.
std::string escape(std::string_view field);

std::string format_row(const Row& row);

}  // namespace evoderm::csv
