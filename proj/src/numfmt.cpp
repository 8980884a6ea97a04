#include "evidence/numfmt.hpp"

#include <array>
#include <charconv>

namespace evidence {

std::string format_number(double v) {
  // fixed notation so the text stays inside the plain-decimal grammar
  std::array<char, 400> buf{};
  auto [end, ec] =
      std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::fixed);
  if (ec != std::errc{})
    return "nan";
  return {buf.data(), end};
}

std::optional<double> parse_decimal(std::string_view s) {
  if (s.empty())
    return std::nullopt;
  for (char c : s)
    if (!(c == '-' || c == '.' || (c >= '0' && c <= '9')))
      return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, std::chars_format::fixed);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    return std::nullopt;
  return v;
}

} // namespace evidence
