#pragma once

#include <iosfwd>
#include <string>

#include "outrigger/types.hpp"

namespace outrigger {

/// Parses "x1,...,xd,y" CSV. Throws MalformedInput naming the row and column
/// of the first bad cell, or "missing header" when the first line is data.
Dataset read_csv(std::istream& in, const std::string& source = "<input>");
Dataset read_csv_file(const std::string& path);

void write_csv(const Dataset& data, std::ostream& out);

/// %.12g; the fixed text form used by every CSV and JSON writer.
std::string format_g12(double v);

std::string read_text_file(const std::string& path);

}  // namespace outrigger
