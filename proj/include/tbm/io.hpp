#pragma once

#include <filesystem>
#include <string>

#include <Eigen/SparseCore>

namespace tbm {

// Shortest decimal form that round-trips to the same double.
std::string format_double(double value);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// Coordinate dump `i j value` (0-based) of the lower triangle of a symmetric
// matrix, one entry per line.
std::string coordinate_dump(const Eigen::SparseMatrix<double>& matrix);
void write_coordinate_dump(const std::filesystem::path& path,
                           const Eigen::SparseMatrix<double>& matrix);

}  // namespace tbm
