#include "attviz/number_format.hpp"

#include <array>
#include <charconv>
#include <stdexcept>
#include <string>

namespace attviz {

std::string format_shortest(double value) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc{}) throw std::runtime_error("to_chars failed");
  return std::string(buf.data(), end);
}

double parse_double(std::string_view text) {
  double out = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  if (ec != std::errc{} || end != text.data() + text.size()) {
    throw std::invalid_argument("not a number: " + std::string(text));
  }
  return out;
}

}  // namespace attviz
