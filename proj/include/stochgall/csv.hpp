#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "stochgall/types.hpp"

namespace stochgall::csv {

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double value);

/// Reads a headerless numeric CSV. Every row must have the same column count.
/// Parse failures name the 1-based row and column.
Matrix read_matrix(const std::filesystem::path& path);

/// One integer per line.
std::vector<int> read_integers(const std::filesystem::path& path);

void write_matrix(const std::filesystem::path& path, const Matrix& values);
void write_integers(const std::filesystem::path& path, const std::vector<int>& values);

/// Writes `content` to `path`, creating parent directories as needed.
void write_text(const std::filesystem::path& path, const std::string& content);
std::string read_text(const std::filesystem::path& path);

}  // namespace stochgall::csv
