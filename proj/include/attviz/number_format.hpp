#pragma once

#include <string>
#include <string_view>

namespace attviz {

/// Shortest decimal string that parses back to exactly `value`.
std::string format_shortest(double value);

/// Inverse of format_shortest. Throws std::invalid_argument on junk.
double parse_double(std::string_view text);

}  // namespace attviz
