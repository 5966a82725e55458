#ifndef PAN_FORMAT_HPP
#define PAN_FORMAT_HPP

#include <charconv>
#include <optional>
#include <string>

namespace pan {

/// Shortest decimal text that parses back to the same double.
inline std::string format_number(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, end);
}

/// Empty string for an absent value.
inline std::string format_number(const std::optional<double>& value) {
  return value ? format_number(*value) : std::string();
}

}  // namespace pan

#endif  // PAN_FORMAT_HPP
