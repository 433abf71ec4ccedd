#pragma once

#include <string>

namespace cst {

// Shortest decimal form that round-trips a double ("%.17g" trimmed), with
// '.' as the decimal separator regardless of locale.
std::string format_double(double v);

// Write-temp-then-rename so readers never observe partial files.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace cst
