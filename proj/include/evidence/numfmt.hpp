#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace evidence {

/// Shortest fixed-notation text that parses back to exactly `v`.
std::string format_number(double v);

/// Parses a plain decimal number ("12", "-3.5", ".25"); no exponent, no
/// surrounding whitespace. Returns nullopt on anything else.
std::optional<double> parse_decimal(std::string_view s);

} // namespace evidence
