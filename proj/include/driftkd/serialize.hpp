#pragma once

// Line-oriented text container shared by the model formats:
//
//   driftkd-<kind> <version>
//   <key> <value>            scalars
//   matrix <name> <rows> <cols>
//   <row-major values, one row per line>
//
// Doubles are written in shortest round-trip form so load(save(x)) is exact.

#include <iosfwd>
#include <string>

#include "driftkd/numerics.hpp"

namespace driftkd::serial {

inline constexpr int kFormatVersion = 1;

void write_header(std::ostream& out, const std::string& kind);
/// Throws DataError on a kind or version mismatch.
void read_header(std::istream& in, const std::string& kind);

std::string format_double(double v);

void write_scalar(std::ostream& out, const std::string& key, double v);
double read_scalar(std::istream& in, const std::string& key);

void write_matrix(std::ostream& out, const std::string& name, const Mat& m);
Mat read_matrix(std::istream& in, const std::string& name);

}  // namespace driftkd::serial
