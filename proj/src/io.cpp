#include "tbm/io.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

#include "tbm/error.hpp"

namespace tbm {

std::string format_double(double value) {
  std::array<char, 64> buffer{};
  auto [end, ec] = std::to_chars(buffer.data(), buffer.data() + buffer.size(), value);
  if (ec != std::errc{}) throw Error("cannot format floating-point value");
  return std::string(buffer.data(), end);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write file: " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

std::string coordinate_dump(const Eigen::SparseMatrix<double>& matrix) {
  std::string text;
  for (Eigen::Index j = 0; j < matrix.outerSize(); ++j) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(matrix, j); it; ++it) {
      if (it.row() < it.col()) continue;
      text += std::to_string(it.row());
      text += ' ';
      text += std::to_string(it.col());
      text += ' ';
      text += format_double(it.value());
      text += '\n';
    }
  }
  return text;
}

void write_coordinate_dump(const std::filesystem::path& path,
                           const Eigen::SparseMatrix<double>& matrix) {
  write_text_file(path, coordinate_dump(matrix));
}

}  // namespace tbm
