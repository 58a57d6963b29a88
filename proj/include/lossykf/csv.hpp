#pragma once

#include <charconv>
#include <ostream>
#include <string>
#include <system_error>
#include <vector>

#include "lossykf/errors.hpp"

namespace lossykf::csv {

/// Shortest round-trip decimal representation, locale-independent by
/// construction ('.' decimal separator always).
inline std::string format_double(double value) {
  char buf[64];
  const std::to_chars_result res = std::to_chars(buf, buf + sizeof(buf), value);
  if (res.ec != std::errc{}) {
    throw NumericError("to_chars failed to format a double");
  }
  return std::string(buf, res.ptr);
}

inline void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << fields[i];
  }
  out << '\n';
}

}  // namespace lossykf::csv
