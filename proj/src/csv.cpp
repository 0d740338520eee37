#include "stochgall/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace stochgall::csv {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorKind::Ingestion, "cannot open " + path.string());
  }
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    lines.push_back(std::move(line));
  }
  return lines;
}

std::string location(const std::filesystem::path& path, std::size_t row, std::size_t col) {
  return path.string() + " row " + std::to_string(row) + " col " + std::to_string(col);
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) {
    throw Error(ErrorKind::Validation, "cannot format value");
  }
  return std::string(buf, end);
}

Matrix read_matrix(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) {
    throw Error(ErrorKind::Ingestion, path.string() + " is empty");
  }
  std::vector<std::vector<double>> rows;
  rows.reserve(lines.size());
  for (std::size_t r = 0; r < lines.size(); ++r) {
    std::vector<double> row;
    std::string_view rest = lines[r];
    std::size_t col = 0;
    while (true) {
      const auto comma = rest.find(',');
      const auto cell = trim(rest.substr(0, comma));
      ++col;
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size()) {
        throw Error(ErrorKind::Parse, "non-numeric cell '" + std::string(cell) + "' at " +
                                          location(path, r + 1, col));
      }
      row.push_back(value);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw Error(ErrorKind::Ingestion, path.string() + " row " + std::to_string(r + 1) + " has " +
                                            std::to_string(row.size()) + " columns, expected " +
                                            std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < out.rows(); ++i) {
    for (Index j = 0; j < out.cols(); ++j) out(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return out;
}

std::vector<int> read_integers(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  std::vector<int> out;
  out.reserve(lines.size());
  for (std::size_t r = 0; r < lines.size(); ++r) {
    const auto cell = trim(lines[r]);
    int value = 0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
      throw Error(ErrorKind::Parse, "non-integer cell '" + std::string(cell) + "' at " +
                                        location(path, r + 1, 1));
    }
    out.push_back(value);
  }
  return out;
}

void write_matrix(const std::filesystem::path& path, const Matrix& values) {
  std::ostringstream out;
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) {
      if (j > 0) out << ',';
      out << format_double(values(i, j));
    }
    out << '\n';
  }
  write_text(path, out.str());
}

void write_integers(const std::filesystem::path& path, const std::vector<int>& values) {
  std::ostringstream out;
  for (int v : values) out << v << '\n';
  write_text(path, out.str());
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorKind::Ingestion, "cannot write " + path.string());
  }
  out << content;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::Ingestion, "cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace stochgall::csv
