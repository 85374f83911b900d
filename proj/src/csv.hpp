#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace covidnet::csv {

/// RFC 4180 reader: quoted fields, doubled quotes, CRLF or LF. Throws
/// Error(MalformedPayload) on an unterminated quote.
std::vector<std::vector<std::string>> parse(std::string_view text);

/// Quotes the field when it contains a comma, quote or newline.
std::string escape(std::string_view field);

} // namespace covidnet::csv
