#pragma once

#include <string>

#include "qrrp/types.hpp"

namespace qrrp {

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

/// Reads a dataset from CSV: header row required, the response column is
/// named "y", every other column is a covariate in header order. Parse
/// errors carry the offending row and column.
Dataset read_csv(const std::string& path);

/// Writes header x1,...,xp,y and the data rows with shortest round-trip
/// formatting, so write-then-read is lossless.
void write_csv(const Dataset& data, const std::string& path);

}  // namespace qrrp
