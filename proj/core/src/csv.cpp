#include "qrrp/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

namespace qrrp {

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    // Trim surrounding whitespace.
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
  double v = 0.0;
  const char* b = cell.data();
  const char* e = b + cell.size();
  const auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc{} || res.ptr != e)
    throw Error(ErrorCode::io, "csv: non-numeric cell at row " +
                                   std::to_string(row) + ", column " +
                                   std::to_string(col + 1) + ": '" + cell + "'");
  return v;
}

}  // namespace

Dataset read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "csv: cannot open " + path);

  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorCode::io, "csv: empty file " + path);
  const std::vector<std::string> header = split_row(line);

  Index ycol = -1;
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == "y") ycol = static_cast<Index>(j);
  if (ycol < 0)
    throw Error(ErrorCode::io, "csv: missing required response column 'y' in " + path);
  const std::size_t width = header.size();
  if (width < 2)
    throw Error(ErrorCode::io, "csv: no covariate columns in " + path);

  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_row(line);
    if (cells.size() != width)
      throw Error(ErrorCode::io,
                  "csv: ragged row " + std::to_string(lineno) + " in " + path +
                      " (expected " + std::to_string(width) + " cells, got " +
                      std::to_string(cells.size()) + ")");
    std::vector<double> row(width);
    for (std::size_t j = 0; j < width; ++j)
      row[j] = parse_cell(cells[j], lineno, j);
    rows.push_back(std::move(row));
  }

  Dataset data;
  const Index n = static_cast<Index>(rows.size());
  const Index p = static_cast<Index>(width) - 1;
  data.X.resize(n, p);
  data.y.resize(n);
  for (Index i = 0; i < n; ++i) {
    Index k = 0;
    for (Index j = 0; j < static_cast<Index>(width); ++j) {
      if (j == ycol)
        data.y(i) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      else
        data.X(i, k++) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  data.validate();
  return data;
}

void write_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "csv: cannot write " + path);
  for (Index j = 0; j < data.p(); ++j) out << "x" << (j + 1) << ",";
  out << "y\n";
  for (Index i = 0; i < data.n(); ++i) {
    for (Index j = 0; j < data.p(); ++j)
      out << format_double(data.X(i, j)) << ",";
    out << format_double(data.y(i)) << "\n";
  }
  if (!out) throw Error(ErrorCode::io, "csv: write failure on " + path);
}

}  // namespace qrrp
