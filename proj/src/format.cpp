#include "medlabel/format.hpp"

#include <charconv>
#include <cstdio>

namespace medlabel {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_fixed(double v, int decimals) {
  char buf[64];
  const int n = std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return std::string(buf, buf + (n > 0 ? n : 0));
}

}  // namespace medlabel
