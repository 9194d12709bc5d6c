#include "outrigger/io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

#include "outrigger/error.hpp"

namespace outrigger {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InsufficientLocalData: return "InsufficientLocalData";
    case ErrorCode::SingularGram: return "SingularGram";
    case ErrorCode::TooFewResiduals: return "TooFewResiduals";
    case ErrorCode::SingularPenalty: return "SingularPenalty";
    case ErrorCode::EmptyAnnulus: return "EmptyAnnulus";
    case ErrorCode::SingularJacobian: return "SingularJacobian";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::QuadratureFailure: return "QuadratureFailure";
    case ErrorCode::InfiniteFisherInformation: return "InfiniteFisherInformation";
    case ErrorCode::UnknownName: return "UnknownName";
    case ErrorCode::MalformedInput: return "MalformedInput";
  }
  return "Unknown";
}

void Dataset::validate() const {
  require(X.rows() == Y.size(), "X has " + std::to_string(X.rows()) + " rows but Y has " +
                                    std::to_string(Y.size()) + " entries",
          ErrorCode::DimensionMismatch);
  require(Y.size() >= 1, "dataset is empty");
  require(X.cols() >= 1, "dataset has no covariates", ErrorCode::DimensionMismatch);
  require(X.allFinite() && Y.allFinite(), "dataset contains non-finite values");
}

Dataset Dataset::subset(const std::vector<Index>& idx) const {
  Dataset out;
  out.X.resize(static_cast<Index>(idx.size()), X.cols());
  out.Y.resize(static_cast<Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const Index i = idx[j];
    require(i >= 0 && i < size(), "subset index out of range");
    out.X.row(static_cast<Index>(j)) = X.row(i);
    out.Y(static_cast<Index>(j)) = Y(i);
  }
  return out;
}

double round_sig12(double v) {
  if (!std::isfinite(v) || v == 0.0) return v;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return std::strtod(buf, nullptr);
}

std::string format_g12(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && errno == 0 && std::isfinite(out);
}

}  // namespace

Dataset read_csv(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  // Header: skip a UTF-8 BOM and blank lines.
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (!trim(line).empty()) break;
  }
  if (trim(line).empty()) fail(ErrorCode::MalformedInput, source + ": empty input, missing header");

  std::vector<std::string> header = split(line);
  for (auto& h : header) h = trim(h);
  double probe = 0.0;
  if (parse_number(header.front(), probe))
    fail(ErrorCode::MalformedInput,
         source + ": missing header (expected x1,...,xd,y on line " + std::to_string(line_no) + ")");
  const std::size_t cols = header.size();
  if (cols < 2)
    fail(ErrorCode::MalformedInput, source + ": header needs at least one covariate and y");
  for (std::size_t j = 0; j + 1 < cols; ++j)
    if (header[j] != "x" + std::to_string(j + 1))
      fail(ErrorCode::MalformedInput, source + ": header column " + std::to_string(j + 1) + " is '" +
                                          header[j] + "', expected 'x" + std::to_string(j + 1) + "'");
  if (header.back() != "y")
    fail(ErrorCode::MalformedInput,
         source + ": last header column is '" + header.back() + "', expected 'y'");

  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(line);
    if (cells.size() != cols)
      fail(ErrorCode::MalformedInput, source + ": row " + std::to_string(line_no) + " has " +
                                          std::to_string(cells.size()) + " columns, expected " +
                                          std::to_string(cols));
    for (std::size_t j = 0; j < cols; ++j) {
      double v = 0.0;
      if (!parse_number(trim(cells[j]), v))
        fail(ErrorCode::MalformedInput, source + ": row " + std::to_string(line_no) + ", column " +
                                            std::to_string(j + 1) + " (" + header[j] +
                                            "): cannot parse '" + trim(cells[j]) + "' as a number");
      values.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) fail(ErrorCode::MalformedInput, source + ": no data rows");

  Dataset data;
  const Index d = static_cast<Index>(cols - 1);
  data.X.resize(static_cast<Index>(rows), d);
  data.Y.resize(static_cast<Index>(rows));
  for (std::size_t r = 0; r < rows; ++r) {
    for (Index j = 0; j < d; ++j)
      data.X(static_cast<Index>(r), j) = values[r * cols + static_cast<std::size_t>(j)];
    data.Y(static_cast<Index>(r)) = values[r * cols + cols - 1];
  }
  return data;
}

Dataset read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::MalformedInput, "cannot open '" + path + "'");
  return read_csv(in, path);
}

void write_csv(const Dataset& data, std::ostream& out) {
  for (Index j = 0; j < data.dim(); ++j) out << 'x' << (j + 1) << ',';
  out << "y\n";
  for (Index i = 0; i < data.size(); ++i) {
    for (Index j = 0; j < data.dim(); ++j) out << format_g12(data.X(i, j)) << ',';
    out << format_g12(data.Y(i)) << '\n';
  }
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::MalformedInput, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace outrigger
