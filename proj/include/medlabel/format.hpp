#pragma once

#include <string>

namespace medlabel {

// Shortest decimal form that round-trips the double.
std::string format_double(double v);

// Fixed-point with the given number of decimals.
std::string format_fixed(double v, int decimals);

}  // namespace medlabel
