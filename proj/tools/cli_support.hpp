#pragma once

// Pieces of the command-line tool that are worth testing on their own:
// config merging, manifests, CSV data files and PNG heatmaps.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tbm/mesh.hpp"

namespace tbm::cli {

inline constexpr const char* kToolVersion = "0.1.0";

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

// Comma-separated numbers; an empty string gives an empty list.
std::vector<double> parse_list(const std::string& text, const std::string& what);
Point parse_point(const std::string& text, const std::string& what);

// Reads a JSON object; anything else is a ValidationError.
nlohmann::json load_config(const std::filesystem::path& path);

// Copies config values into options not given on the command line. Keys are
// long option names without the dashes; unknown keys are rejected. Arrays of
// scalars become one comma-joined value, arrays of arrays one value per entry.
void apply_config(const nlohmann::json& config, const std::vector<CLI::App*>& apps);

// Every option that ended up with a value, keyed by its long name.
nlohmann::json effective_config(const std::vector<CLI::App*>& apps);

// SOURCE_DATE_EPOCH when set, else the current time; ISO 8601 UTC.
std::string timestamp_now();

struct RunInfo {
  std::string command;
  std::uint64_t seed = 0;
  nlohmann::json config;
  std::string started;
};

// Writes <out>/manifest.json listing every file under out (the manifest
// itself excluded) with its size and FNV-1a hash; `emitted` marks the files
// written by this run.
void write_manifest(const std::filesystem::path& out, const RunInfo& run,
                    const std::vector<std::filesystem::path>& emitted);

struct PointData {
  std::vector<Point> points;
  std::vector<double> values;  // empty for events
  bool has_values = false;
};

// Header `x,y,value` (observations) or `x,y` (events).
PointData read_points_csv(const std::filesystem::path& path);
std::string points_csv(const std::vector<Point>& points, const std::vector<double>* values);

// Header `node,x,y,value`.
std::string nodal_csv(const Mesh& mesh, const Eigen::VectorXd& values);

// Blue-white-red between -limit and limit; masked lattice points are grey.
void write_png(const std::filesystem::path& path, const ProjectedGrid& grid, double limit);

}  // namespace tbm::cli
