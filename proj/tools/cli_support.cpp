#include "cli_support.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <memory>
#include <sstream>

#include <png.h>

#include "tbm/error.hpp"
#include "tbm/io.hpp"

namespace tbm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_number(const std::string& token, const std::string& what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc{} || ptr != token.data() + token.size() || !std::isfinite(v))
    throw ValidationError(what + ": '" + token + "' is not a finite number");
  return v;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

std::string scalar_text(const json& v, const std::string& key) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
  if (v.is_number()) return format_double(v.get<double>());
  throw ValidationError("config key '" + key + "' has an unsupported value");
}

std::string joined(const json& arr, const std::string& key) {
  std::string out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (i) out += ",";
    out += scalar_text(arr[i], key);
  }
  return out;
}

CLI::Option* find_option(const std::vector<CLI::App*>& apps, const std::string& name) {
  for (CLI::App* app : apps)
    for (CLI::Option* opt : app->get_options())
      for (const auto& l : opt->get_lnames())
        if (l == name) return opt;
  return nullptr;
}

}  // namespace

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  if (trim(text).empty()) return {};
  std::vector<double> out;
  for (const auto& tok : split(text, ',')) out.push_back(parse_number(tok, what));
  return out;
}

Point parse_point(const std::string& text, const std::string& what) {
  const auto v = parse_list(text, what);
  if (v.size() != 2) throw ValidationError(what + ": expected 'x,y', got '" + text + "'");
  return {v[0], v[1]};
}

json load_config(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!doc.is_object()) throw ValidationError("config " + path.string() + " must be a JSON object");
  return doc;
}

void apply_config(const json& config, const std::vector<CLI::App*>& apps) {
  for (const auto& [key, value] : config.items()) {
    if (key == "config" || key == "help") throw ValidationError("config key '" + key + "' is not allowed");
    CLI::Option* opt = find_option(apps, key);
    if (!opt) throw ValidationError("unknown config key '" + key + "'");
    if (opt->count() > 0) continue;  // the command line wins
    std::vector<std::string> results;
    if (value.is_array() && !value.empty() && value[0].is_array()) {
      for (const auto& item : value) {
        if (!item.is_array()) throw ValidationError("config key '" + key + "' mixes lists and scalars");
        results.push_back(joined(item, key));
      }
    } else if (value.is_array()) {
      results.push_back(joined(value, key));
    } else {
      results.push_back(scalar_text(value, key));
    }
    for (const auto& r : results) opt->add_result(r);
    try {
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw ValidationError("config key '" + key + "': " + e.what());
    }
  }
}

json effective_config(const std::vector<CLI::App*>& apps) {
  json out = json::object();
  for (CLI::App* app : apps)
    for (CLI::Option* opt : app->get_options()) {
      if (opt->get_lnames().empty() || opt->count() == 0) continue;
      const std::string& name = opt->get_lnames().front();
      if (name == "config" || name == "help" || name == "out") continue;
      const auto& res = opt->results();
      if (res.size() == 1) out[name] = res.front();
      else out[name] = res;
    }
  return out;
}

std::string timestamp_now() {
  std::time_t t = 0;
  if (const char* sde = std::getenv("SOURCE_DATE_EPOCH"); sde && *sde) {
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(sde, sde + std::char_traits<char>::length(sde), v);
    if (ec != std::errc{} || *ptr != '\0') throw ValidationError("SOURCE_DATE_EPOCH is not an integer");
    t = static_cast<std::time_t>(v);
  } else {
    t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const fs::path& out, const RunInfo& run, const std::vector<fs::path>& emitted) {
  std::vector<std::string> emitted_rel;
  for (const auto& p : emitted) emitted_rel.push_back(fs::relative(p, out).generic_string());
  std::sort(emitted_rel.begin(), emitted_rel.end());

  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(out)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), out).generic_string();
    if (rel != "manifest.json") files.push_back(rel);
  }
  std::sort(files.begin(), files.end());

  nlohmann::ordered_json m;
  m["tool"] = "tbm";
  m["version"] = kToolVersion;
  m["command"] = run.command;
  m["seed"] = run.seed;
  m["config_hash"] = "fnv1a64:" + hex64(fnv1a64(run.config.dump()));
  m["config"] = run.config;
  m["started"] = run.started;
  m["finished"] = timestamp_now();
  auto artifacts = nlohmann::ordered_json::array();
  for (const auto& rel : files) {
    const std::string bytes = read_text_file(out / rel);
    artifacts.push_back({{"path", rel},
                         {"bytes", bytes.size()},
                         {"fnv1a64", hex64(fnv1a64(bytes))},
                         {"emitted", std::binary_search(emitted_rel.begin(), emitted_rel.end(), rel)}});
  }
  m["artifacts"] = artifacts;
  write_text_file(out / "manifest.json", m.dump(2) + "\n");
}

PointData read_points_csv(const fs::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
  const std::string header = trim(line);
  PointData data;
  if (header == "x,y,value") data.has_values = true;
  else if (header != "x,y")
    throw ParseError(path.string() + ": header must be 'x,y,value' or 'x,y', got '" + header + "'");
  const std::size_t width = data.has_values ? 3 : 2;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (cells.size() != width) throw ParseError(where + ": expected " + std::to_string(width) + " fields");
    try {
      data.points.push_back({parse_number(cells[0], where), parse_number(cells[1], where)});
      if (data.has_values) data.values.push_back(parse_number(cells[2], where));
    } catch (const ValidationError& e) {
      throw ParseError(e.what());
    }
  }
  return data;
}

std::string points_csv(const std::vector<Point>& points, const std::vector<double>* values) {
  std::string out = values ? "x,y,value\n" : "x,y\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    out += format_double(points[i].x) + "," + format_double(points[i].y);
    if (values) out += "," + format_double((*values)[i]);
    out += "\n";
  }
  return out;
}

std::string nodal_csv(const Mesh& mesh, const Eigen::VectorXd& values) {
  std::string out = "node,x,y,value\n";
  for (std::size_t i = 0; i < mesh.n_nodes(); ++i)
    out += std::to_string(i) + "," + format_double(mesh.vertex(i).x) + "," + format_double(mesh.vertex(i).y) + "," +
           format_double(values[static_cast<Eigen::Index>(i)]) + "\n";
  return out;
}

void write_png(const fs::path& path, const ProjectedGrid& grid, double limit) {
  if (!(limit > 0.0)) limit = 1.0;
  const auto w = static_cast<png_uint_32>(grid.lattice.nx);
  const auto h = static_cast<png_uint_32>(grid.lattice.ny);
  std::vector<png_byte> pixels(static_cast<std::size_t>(w) * h * 3);
  for (png_uint_32 row = 0; row < h; ++row)
    for (png_uint_32 col = 0; col < w; ++col) {
      // Lattice row 0 is the bottom edge; image row 0 is the top.
      const auto& v = grid.values[static_cast<std::size_t>(h - 1 - row) * w + col];
      png_byte* px = &pixels[(static_cast<std::size_t>(row) * w + col) * 3];
      if (!v) {
        px[0] = px[1] = px[2] = 128;
        continue;
      }
      const double a = std::clamp(*v / limit, -1.0, 1.0);
      const auto fade = static_cast<png_byte>(std::lround(255.0 * (1.0 - std::abs(a))));
      px[0] = a < 0 ? fade : 255;
      px[1] = fade;
      px[2] = a > 0 ? fade : 255;
    }

  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "wb"), &std::fclose);
  if (!fp) throw Error("cannot write file: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (png_uint_32 row = 0; row < h; ++row) png_write_row(png, &pixels[static_cast<std::size_t>(row) * w * 3]);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace tbm::cli
