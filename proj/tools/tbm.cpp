// Command-line front end: meshgen, correlate, calibrate, simulate, fit, report.
//
// Every long option can also be given as a key of the --config JSON object
// (same name, no dashes). Options on the command line take precedence over
// the config file, which takes precedence over built-in defaults.
//
// Exit status: 0 success, 2 invalid input or usage, 1 internal failure.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cli_support.hpp"
#include "tbm/correlation.hpp"
#include "tbm/error.hpp"
#include "tbm/fem.hpp"
#include "tbm/gmrf.hpp"
#include "tbm/inference.hpp"
#include "tbm/io.hpp"
#include "tbm/mesh.hpp"
#include "tbm/precision.hpp"
#include "tbm/transparency.hpp"

namespace fs = std::filesystem;
using namespace tbm;
using nlohmann::json;

namespace {

struct Globals {
  std::uint64_t seed = 1;
  std::string out = "tbm_out";
  int threads = 1;
  std::string config;
};

// Collects written files for the manifest.
class Output {
 public:
  explicit Output(const fs::path& dir) : dir_(dir) { fs::create_directories(dir_); }

  const fs::path& dir() const { return dir_; }
  fs::path path(const std::string& name) const { return dir_ / name; }

  void text(const std::string& name, const std::string& body) {
    write_text_file(path(name), body);
    emitted_.push_back(path(name));
  }
  void png(const std::string& name, const ProjectedGrid& grid, double limit) {
    cli::write_png(path(name), grid, limit);
    emitted_.push_back(path(name));
  }
  void adopt(const fs::path& p) { emitted_.push_back(p); }
  const std::vector<fs::path>& emitted() const { return emitted_; }

 private:
  fs::path dir_;
  std::vector<fs::path> emitted_;
};

std::array<double, 4> parse_box(const std::string& text, const std::string& what) {
  const auto v = cli::parse_list(text, what);
  if (v.size() != 4) throw ValidationError(what + ": expected 'x0,x1,y0,y1', got '" + text + "'");
  if (!(v[1] > v[0]) || !(v[3] > v[2])) throw ValidationError(what + ": empty rectangle '" + text + "'");
  return {v[0], v[1], v[2], v[3]};
}

std::array<double, 4> bounding_box(const Mesh& mesh) {
  std::array<double, 4> b{mesh.vertex(0).x, mesh.vertex(0).x, mesh.vertex(0).y, mesh.vertex(0).y};
  for (const Point& p : mesh.vertices()) {
    b[0] = std::min(b[0], p.x);
    b[1] = std::max(b[1], p.x);
    b[2] = std::min(b[2], p.y);
    b[3] = std::max(b[3], p.y);
  }
  return b;
}

// A full fraction vector, or one without the leading p_1 = 1.
std::vector<double> parse_fractions(const std::string& text, int k) {
  std::vector<double> p = cli::parse_list(text, "--fractions");
  if (static_cast<int>(p.size()) == k - 1) p.insert(p.begin(), 1.0);
  if (static_cast<int>(p.size()) != k)
    throw ValidationError("--fractions '" + text + "' needs " + std::to_string(k) + " values (or " +
                          std::to_string(k - 1) + " with p_1 = 1 implied)");
  HyperParams{1.0, 1.0, p}.validate(k);
  return p;
}

std::set<int> parse_labels(const std::string& text, const std::string& what) {
  std::set<int> out;
  for (double v : cli::parse_list(text, what)) {
    if (v != std::floor(v) || v < 1) throw ValidationError(what + ": labels are positive integers");
    out.insert(static_cast<int>(v));
  }
  if (out.empty()) throw ValidationError(what + ": no labels given");
  return out;
}

cli::RunInfo start_run(const std::string& command, const Globals& g, const std::vector<CLI::App*>& apps) {
  return {command, g.seed, cli::effective_config(apps), cli::timestamp_now()};
}

// ---------------------------------------------------------------------------

struct MeshgenArgs {
  std::string rect = "0,10,0,10";
  double max_edge = 0.25;
  double buffer = 0.0;
  std::vector<std::string> regions;
  std::string name = "mesh.json";
};

void cmd_meshgen(const MeshgenArgs& a, Output& out) {
  const auto box = parse_box(a.rect, "--rect");
  std::vector<RegionPolygon> regions;
  for (const std::string& spec : a.regions) {
    std::string file = spec;
    std::optional<int> label;
    if (const auto colon = spec.rfind(':'); colon != std::string::npos) {
      const std::string tail = spec.substr(colon + 1);
      if (!tail.empty() && std::all_of(tail.begin(), tail.end(), ::isdigit)) {
        file = spec.substr(0, colon);
        label = std::stoi(tail);
      }
    }
    if (!fs::exists(file)) throw ValidationError("region file not found: " + file);
    for (RegionPolygon& r : load_regions(file))
      regions.push_back(label ? RegionPolygon(r.rings(), *label) : std::move(r));
  }
  const Mesh mesh = generate_rect_mesh({box[0], box[1]}, {box[2], box[3]}, {a.max_edge, a.buffer});
  const SubdomainLabeling labels = classify_triangles(mesh, regions);
  out.text(a.name, mesh_to_json(mesh, labels));
  std::cout << a.name << ": " << mesh.n_nodes() << " nodes, " << mesh.n_triangles() << " triangles, "
            << labels.k() << " subdomain labels\n";
}

// ---------------------------------------------------------------------------

struct CorrelateArgs {
  std::string mesh;
  double range = 1.0;
  double sigma = 1.0;
  std::vector<std::string> fractions;
  std::string nodes;
  std::vector<std::string> at;
  std::size_t lattice = kDefaultLatticeSize;
  std::string window;
  bool png = false;
};

void cmd_correlate(const CorrelateArgs& a, Output& out) {
  if (a.mesh.empty()) throw ValidationError("--mesh is required");
  const MeshWithLabels m = load_mesh(a.mesh);
  const FemMatrices fem = assemble(m.mesh, m.labeling);
  const int k = m.labeling.k();

  std::vector<HyperParams> hps;
  for (const auto& f : a.fractions) hps.push_back({a.sigma, a.range, parse_fractions(f, k)});
  if (hps.empty()) hps.push_back({a.sigma, a.range, stationary_fractions(k)});

  const PointLocator locator(m.mesh);
  std::vector<std::size_t> nodes;
  for (double v : cli::parse_list(a.nodes, "--node")) {
    if (v < 0 || v != std::floor(v)) throw ValidationError("--node: '" + format_double(v) + "' is not a node index");
    nodes.push_back(static_cast<std::size_t>(v));
  }
  for (const auto& s : a.at) nodes.push_back(nearest_node(m.mesh, locator, cli::parse_point(s, "--at")));

  const auto box = a.window.empty() ? bounding_box(m.mesh) : parse_box(a.window, "--window");
  const Projector projector = build_projector(m.mesh, a.lattice, a.lattice, {box[0], box[1]}, {box[2], box[3]});
  const auto cells = correlation_panel(m.mesh, fem, hps, nodes, projector);
  for (const auto& p : write_panel(out.dir(), cells)) out.adopt(p);

  std::string index = "hp_index,node_index,node,x,y,fractions\n";
  for (const auto& c : cells) {
    std::string fr;
    for (double p : hps[c.hp_index].fractions) fr += (fr.empty() ? "" : ";") + format_double(p);
    index += std::to_string(c.hp_index) + "," + std::to_string(c.node_index) + "," + std::to_string(c.field.node) +
             "," + format_double(c.field.reference.x) + "," + format_double(c.field.reference.y) + "," + fr + "\n";
    if (a.png) {
      std::string name = panel_file_name(c);
      name.replace(name.size() - 4, 4, ".png");
      out.png(name, c.grid, 1.0);
    }
  }
  out.text("panel.csv", index);
  std::cout << cells.size() << " correlation grids (" << hps.size() << " settings x " << nodes.size()
            << " nodes)\n";
}

// ---------------------------------------------------------------------------

struct CalibrateArgs {
  std::string mesh;
  double range = 1.0;
  std::optional<double> max_edge;
  std::string c0 = "0.13,0.5,0.8";
  std::string t = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9";
  std::string at;
  std::size_t lattice = kDefaultLatticeSize;
  std::string window;
};

void cmd_calibrate(const CalibrateArgs& a, Output& out) {
  if (!(a.range > 0.0)) throw ValidationError("--range must be positive");
  const auto c0 = cli::parse_list(a.c0, "--c0");
  const auto t = cli::parse_list(a.t, "--t");
  if (c0.empty()) throw ValidationError("--c0 list is empty");
  if (t.empty()) throw ValidationError("--t list is empty");

  // Without a mesh: square of half-width 3.3 r, lattice over the central
  // +-2.3 r, reference at the origin.
  std::optional<MeshWithLabels> loaded;
  if (!a.mesh.empty()) {
    loaded = load_mesh(a.mesh);
  } else {
    const double h = a.max_edge.value_or(a.range / 24.0);
    Mesh mesh = generate_rect_mesh({-3.3 * a.range, 3.3 * a.range}, {-3.3 * a.range, 3.3 * a.range}, {h, 0.0});
    SubdomainLabeling labels = SubdomainLabeling::all_normal(mesh);
    loaded.emplace(MeshWithLabels{std::move(mesh), std::move(labels)});
  }
  const Mesh& mesh = loaded->mesh;
  std::array<double, 4> box;
  if (!a.window.empty()) box = parse_box(a.window, "--window");
  else if (a.mesh.empty()) box = {-2.3 * a.range, 2.3 * a.range, -2.3 * a.range, 2.3 * a.range};
  else box = bounding_box(mesh);
  const Point ref = a.at.empty() ? Point{0.5 * (box[0] + box[1]), 0.5 * (box[2] + box[3])}
                                 : cli::parse_point(a.at, "--at");

  const FemMatrices fem = assemble(mesh, loaded->labeling);
  const PointLocator locator(mesh);
  const std::size_t node = nearest_node(mesh, locator, ref);
  const Projector projector = build_projector(mesh, a.lattice, a.lattice, {box[0], box[1]}, {box[2], box[3]});
  const HyperParams hp{1.0, a.range, stationary_fractions(fem.k())};
  const auto rows = transparency_table(mesh, fem, hp, node, projector, c0, t);
  out.text("transparency.csv", transparency_csv(rows));
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.spec ? 0 : 1;
  std::cout << rows.size() << " calibration cells, " << failed << " failed\n";
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string mesh;
  std::string kind = "gaussian";
  double range = 1.0;
  double sigma = 1.0;
  std::string fractions;
  double noise = 0.1;
  std::size_t n_obs = 300;
  std::string labels = "1";
  double intensity = 1.0;
  std::string area;
};

void cmd_simulate(const SimulateArgs& a, std::uint64_t seed, Output& out) {
  if (a.mesh.empty()) throw ValidationError("--mesh is required");
  if (a.kind != "gaussian" && a.kind != "lgcp") throw ValidationError("--kind must be gaussian or lgcp");
  const MeshWithLabels m = load_mesh(a.mesh);
  const FemMatrices fem = assemble(m.mesh, m.labeling);
  const int k = m.labeling.k();
  const HyperParams hp{a.sigma, a.range, a.fractions.empty() ? stationary_fractions(k) : parse_fractions(a.fractions, k)};
  hp.validate(k);
  const std::set<int> labels = parse_labels(a.labels, "--labels");
  RandomSource rng(seed);

  Eigen::VectorXd u;
  if (a.kind == "gaussian") {
    std::vector<Point> locs;
    if (a.area.empty()) {
      locs = random_locations(m.mesh, m.labeling, labels, a.n_obs, rng);
    } else {
      const auto box = parse_box(a.area, "--area");
      locs = random_locations(m.mesh, m.labeling, labels, {box[0], box[1]}, {box[2], box[3]}, a.n_obs, rng);
    }
    const ObservationSet obs = simulate_gaussian(m.mesh, fem, hp, a.noise, locs, rng, &u);
    const std::vector<double> y(obs.values.data(), obs.values.data() + obs.values.size());
    out.text("observations.csv", cli::points_csv(obs.locations, &y));
    std::cout << obs.size() << " observations\n";
  } else {
    if (!(a.intensity > 0.0)) throw ValidationError("--intensity must be positive");
    u = factorize(assemble_Q(fem, hp)).sample(rng, 1).col(0);
    const Eigen::VectorXd eta = (u.array() + std::log(a.intensity)).matrix();
    const auto events = simulate_events(m.mesh, m.labeling, eta, labels, rng);
    out.text("events.csv", cli::points_csv(events, nullptr));
    std::cout << events.size() << " events\n";
  }
  out.text("truth_nodes.csv", cli::nodal_csv(m.mesh, u));
}

// ---------------------------------------------------------------------------

struct FitArgs {
  std::string mesh;
  std::string data;
  std::string model = "tbm";
  std::string fractions;
  std::string barrier_labels;
  std::string prior_range = "1,0.5";
  std::string prior_sigma = "1,0.1";
  std::string prior_noise = "1,0.1";
  std::string init;
  std::string labels = "1";
  std::string name;
  std::string scenario;
  int max_iter = 500;
  std::size_t lattice = 100;
  std::string window;
  bool png = false;
};

PcPrior parse_prior(const std::string& text, const std::string& what) {
  const auto v = cli::parse_list(text, what);
  if (v.size() != 2) throw ValidationError(what + ": expected 'u,alpha'");
  return {v[0], v[1]};
}

std::vector<double> model_fractions(const FitArgs& a, int k) {
  if (a.model == "stationary") return stationary_fractions(k);
  if (a.model == "barrier") {
    std::vector<int> impermeable;
    if (a.barrier_labels.empty())
      for (int q = 2; q <= k; ++q) impermeable.push_back(q);
    else
      for (int q : parse_labels(a.barrier_labels, "--barrier-labels")) impermeable.push_back(q);
    return barrier_fractions(k, impermeable);
  }
  if (a.model == "tbm") {
    if (a.fractions.empty()) {
      if (k == 1) return {1.0};
      throw ValidationError("--model tbm needs --fractions");
    }
    return parse_fractions(a.fractions, k);
  }
  throw ValidationError("--model must be stationary, barrier or tbm");
}

void cmd_fit(const FitArgs& a, Output& out) {
  if (a.mesh.empty()) throw ValidationError("--mesh is required");
  if (a.data.empty()) throw ValidationError("--data is required");
  const MeshWithLabels m = load_mesh(a.mesh);
  const FemMatrices fem = assemble(m.mesh, m.labeling);
  const std::vector<double> fractions = model_fractions(a, m.labeling.k());
  const cli::PointData data = cli::read_points_csv(a.data);
  PcPriors priors;
  priors.range = parse_prior(a.prior_range, "--prior-range");
  priors.sigma = parse_prior(a.prior_sigma, "--prior-sigma");
  priors.noise = parse_prior(a.prior_noise, "--prior-noise");
  priors.validate();
  if (a.max_iter < 1) throw ValidationError("--max-iter must be at least 1");
  NelderMeadOptions nm;
  nm.max_iterations = a.max_iter;

  const auto box = bounding_box(m.mesh);
  const double extent = std::max(box[1] - box[0], box[3] - box[2]);
  std::vector<double> init = cli::parse_list(a.init, "--init");

  FitResult fit;
  const std::string kind = data.has_values ? "gaussian" : "lgcp";
  if (data.has_values) {
    const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(data.values.data(), static_cast<Eigen::Index>(data.values.size()));
    if (init.empty()) {
      const double sd = y.size() > 1 ? std::sqrt((y.array() - y.mean()).square().sum() / static_cast<double>(y.size() - 1)) : 1.0;
      const double s = sd > 0.0 ? sd : 1.0;
      init = {std::log(s), std::log(extent / 5.0), std::log(s / 2.0)};
    }
    if (init.size() != 3) throw ValidationError("--init needs log sigma_u, log range, log sigma_y");
    const ObservationSet obs = make_observations(m.mesh, PointLocator(m.mesh), data.points, y);
    fit = fit_gaussian(fem, fractions, obs, priors, init, nm);
  } else {
    if (init.empty()) init = {0.0, std::log(extent / 5.0)};
    if (init.size() != 2) throw ValidationError("--init needs log sigma_u, log range");
    if (data.points.empty()) std::cerr << "warning: no events; the fitted field is the prior mean\n";
    LgcpOptions opts;
    opts.outer = nm;
    fit = fit_lgcp(m.mesh, fem, m.labeling, fractions, data.points, priors, init, parse_labels(a.labels, "--labels"), opts);
  }
  fit.model = a.model;
  if (!fit.converged) std::cerr << "warning: optimizer stopped after " << fit.iterations << " iterations\n";
  if (!fit.inner_converged) std::cerr << "warning: inner Newton iterations did not all converge\n";

  auto doc = nlohmann::ordered_json::parse(fit_result_json(fit));
  doc["kind"] = kind;
  doc["scenario"] = a.scenario;
  doc["data"] = a.data;
  doc["n_data"] = data.points.size();
  doc["priors"] = {{"range", {priors.range.u, priors.range.alpha}},
                   {"sigma", {priors.sigma.u, priors.sigma.alpha}},
                   {"noise", {priors.noise.u, priors.noise.alpha}}};

  const std::string name = a.name.empty() ? a.model : a.name;
  out.text(name + "_fit.json", doc.dump(2) + "\n");
  out.text(name + "_mean_nodes.csv", cli::nodal_csv(m.mesh, fit.mean));
  out.text(name + "_sd_nodes.csv", cli::nodal_csv(m.mesh, fit.sd));
  const auto win = a.window.empty() ? box : parse_box(a.window, "--window");
  const Projector projector = build_projector(m.mesh, a.lattice, a.lattice, {win[0], win[1]}, {win[2], win[3]});
  const ProjectedGrid mean = project_field(projector, fit.mean);
  const ProjectedGrid sd = project_field(projector, fit.sd);
  out.text(name + "_mean.csv", grid_to_csv(mean));
  out.text(name + "_sd.csv", grid_to_csv(sd));
  if (a.png) {
    out.png(name + "_mean.png", mean, fit.mean.cwiseAbs().maxCoeff());
    out.png(name + "_sd.png", sd, fit.sd.maxCoeff());
  }
  std::cout << name << ": range " << format_double(fit.range()) << ", sigma_u " << format_double(fit.sigma_u());
  if (fit.sigma_y()) std::cout << ", sigma_y " << format_double(*fit.sigma_y());
  if (fit.beta0) std::cout << ", beta0 " << format_double(*fit.beta0);
  std::cout << (fit.converged ? "" : " (not converged)") << "\n";
}

// ---------------------------------------------------------------------------

struct ReportArgs {
  std::string input;
};

struct Summary {
  double mode, mean, q025, q50, q975;
};

// Log-normal summaries of exp(theta) with theta ~ N(m, s^2).
Summary lognormal_summary(double m, std::optional<double> s) {
  if (!s) return {std::exp(m), NAN, NAN, NAN, NAN};
  const double v = *s * *s;
  constexpr double z = 1.959963984540054;
  return {std::exp(m - v), std::exp(m + 0.5 * v), std::exp(m - z * *s), std::exp(m), std::exp(m + z * *s)};
}

std::string cell(double v) { return std::isfinite(v) ? format_double(v) : "NA"; }

std::string fixed4(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

void cmd_report(const ReportArgs& a, const fs::path& out_dir, Output& out) {
  const fs::path input = a.input.empty() ? out_dir : fs::path(a.input);
  if (!fs::is_directory(input)) throw ValidationError("report input is not a directory: " + input.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(input))
    if (e.is_regular_file() && e.path().filename().string().ends_with("_fit.json"))
      files.push_back(e.path());
  std::sort(files.begin(), files.end());

  std::string csv = "file,scenario,model,kind,prior_range,parameter,mode,mean,q0.025,q0.5,q0.975,converged\n";
  std::string md = "# Fit summary\n\nPosterior summaries of the hyperparameters from the Laplace approximation on the log scale.\n\n";
  md += "| file | scenario | model | prior (r0, alpha) | parameter | mode | mean | 2.5% | 50% | 97.5% | converged |\n";
  md += "|---|---|---|---|---|---|---|---|---|---|---|\n";
  std::size_t used = 0;
  const std::map<std::string, std::string> labels{{"log_range", "range"}, {"log_sigma_u", "sigma_u"}, {"log_sigma_y", "sigma_y"}};
  for (const auto& f : files) {
    const std::string fname = f.filename().string();
    json doc;
    try {
      doc = json::parse(read_text_file(f));
      if (!doc.is_object() || !doc.contains("theta_map") || !doc["theta_map"].is_object())
        throw ValidationError("no theta_map");
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping " << fname << ": " << e.what() << "\n";
      continue;
    }
    try {
      std::string prior = "NA";
      if (doc.contains("priors") && doc["priors"].contains("range"))
        prior = format_double(doc["priors"]["range"][0].get<double>()) + " " + format_double(doc["priors"]["range"][1].get<double>());
      const std::string scenario = doc.value("scenario", std::string());
      const std::string model = doc.value("model", std::string());
      const std::string kind = doc.value("kind", std::string());
      const bool converged = doc.value("converged", false);
      for (const auto& [key, label] : labels) {
        if (!doc["theta_map"].contains(key)) continue;
        const double m = doc["theta_map"][key].get<double>();
        std::optional<double> s;
        if (doc.contains("theta_sd") && doc["theta_sd"].contains(key) && doc["theta_sd"][key].is_number())
          s = doc["theta_sd"][key].get<double>();
        const Summary sm = lognormal_summary(m, s);
        csv += fname + "," + scenario + "," + model + "," + kind + "," + prior + "," + label + "," + cell(sm.mode) + "," +
               cell(sm.mean) + "," + cell(sm.q025) + "," + cell(sm.q50) + "," + cell(sm.q975) + "," +
               (converged ? "true" : "false") + "\n";
        md += "| " + fname + " | " + scenario + " | " + model + " | " + prior + " | " + label + " | " + fixed4(sm.mode) +
              " | " + fixed4(sm.mean) + " | " + fixed4(sm.q025) + " | " + fixed4(sm.q50) + " | " + fixed4(sm.q975) +
              " | " + (converged ? "yes" : "no") + " |\n";
      }
      ++used;
    } catch (const json::exception& e) {
      std::cerr << "warning: skipping " << fname << ": " << e.what() << "\n";
    }
  }
  if (used == 0) throw ValidationError("no fit results found in " + input.string());
  out.text("report.csv", csv);
  out.text("report.md", md);
  std::cout << used << " fit results summarised\n";
}

int fail(int code, const std::string& message) {
  std::cerr << "error: " << message << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transparent barrier model: meshes, correlation panels, calibration, simulation and fitting"};
  app.set_version_flag("--version", cli::kToolVersion);
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "random seed (u64)");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--threads", g.threads, "worker threads (computations are sequential; accepted for compatibility)");
  app.add_option("--config", g.config, "JSON config; keys are long option names");

  MeshgenArgs mg;
  CLI::App* meshgen = app.add_subcommand("meshgen", "generate a labelled rectangular mesh");
  meshgen->add_option("--rect", mg.rect, "x0,x1,y0,y1");
  meshgen->add_option("--max-edge", mg.max_edge, "largest axis-aligned edge length");
  meshgen->add_option("--buffer", mg.buffer, "extension beyond the rectangle on every side");
  meshgen->add_option("--region", mg.regions, "region JSON file, optionally with :label override (repeatable)");
  meshgen->add_option("--name", mg.name, "mesh file name inside --out");

  CorrelateArgs cg;
  CLI::App* correlate = app.add_subcommand("correlate", "correlation panels from reference nodes");
  correlate->add_option("--mesh", cg.mesh, "mesh JSON file");
  correlate->add_option("--range", cg.range, "range in the normal area");
  correlate->add_option("--sigma", cg.sigma, "marginal standard deviation");
  correlate->add_option("--fractions", cg.fractions, "range fractions p_1..p_k (one setting per use)");
  correlate->add_option("--node", cg.nodes, "reference node indices, comma separated");
  correlate->add_option("--at", cg.at, "reference point x,y (nearest node; repeatable)");
  correlate->add_option("--lattice", cg.lattice, "lattice points per axis");
  correlate->add_option("--window", cg.window, "lattice window x0,x1,y0,y1 (default: mesh bounding box)");
  correlate->add_flag("--png", cg.png, "also write PNG heatmaps");

  CalibrateArgs cb;
  CLI::App* calibrate_cmd = app.add_subcommand("calibrate", "transparency calibration table");
  calibrate_cmd->add_option("--mesh", cb.mesh, "mesh JSON file (default: generated square)");
  calibrate_cmd->add_option("--range", cb.range, "range of the stationary field");
  calibrate_cmd->add_option("--max-edge", cb.max_edge, "edge length of the generated mesh (default range/24)");
  calibrate_cmd->add_option("--c0", cb.c0, "reference correlations, comma separated");
  calibrate_cmd->add_option("--t", cb.t, "transparencies, comma separated");
  calibrate_cmd->add_option("--at", cb.at, "reference point x,y (default: window centre)");
  calibrate_cmd->add_option("--lattice", cb.lattice, "lattice points per axis");
  calibrate_cmd->add_option("--window", cb.window, "lattice window x0,x1,y0,y1");

  SimulateArgs sm;
  CLI::App* simulate = app.add_subcommand("simulate", "simulate observations or events");
  simulate->add_option("--mesh", sm.mesh, "mesh JSON file");
  simulate->add_option("--kind", sm.kind, "gaussian or lgcp");
  simulate->add_option("--range", sm.range, "range in the normal area");
  simulate->add_option("--sigma", sm.sigma, "marginal standard deviation");
  simulate->add_option("--fractions", sm.fractions, "range fractions (default all 1)");
  simulate->add_option("--noise", sm.noise, "observation noise sd (gaussian)");
  simulate->add_option("--n-obs", sm.n_obs, "number of observations (gaussian)");
  simulate->add_option("--labels", sm.labels, "subdomain labels where data are placed");
  simulate->add_option("--intensity", sm.intensity, "baseline intensity (lgcp)");
  simulate->add_option("--area", sm.area, "observation rectangle x0,x1,y0,y1 (gaussian; default whole mesh)");

  FitArgs ft;
  CLI::App* fit_cmd = app.add_subcommand("fit", "fit a model to observations or events");
  fit_cmd->add_option("--mesh", ft.mesh, "mesh JSON file");
  fit_cmd->add_option("--data", ft.data, "observations (x,y,value) or events (x,y) CSV");
  fit_cmd->add_option("--model", ft.model, "stationary, barrier or tbm");
  fit_cmd->add_option("--fractions", ft.fractions, "range fractions for --model tbm");
  fit_cmd->add_option("--barrier-labels", ft.barrier_labels, "impermeable labels for --model barrier (default all >= 2)");
  fit_cmd->add_option("--prior-range", ft.prior_range, "r0,alpha with P(range < r0) = alpha");
  fit_cmd->add_option("--prior-sigma", ft.prior_sigma, "s0,alpha with P(sigma_u > s0) = alpha");
  fit_cmd->add_option("--prior-noise", ft.prior_noise, "s0,alpha with P(sigma_y > s0) = alpha");
  fit_cmd->add_option("--init", ft.init, "initial log sigma_u, log range[, log sigma_y]");
  fit_cmd->add_option("--labels", ft.labels, "integration labels (lgcp)");
  fit_cmd->add_option("--name", ft.name, "output file prefix (default: model)");
  fit_cmd->add_option("--scenario", ft.scenario, "free-form scenario tag stored in the result");
  fit_cmd->add_option("--max-iter", ft.max_iter, "Nelder-Mead iteration cap");
  fit_cmd->add_option("--lattice", ft.lattice, "lattice points per axis for the posterior grids");
  fit_cmd->add_option("--window", ft.window, "lattice window x0,x1,y0,y1");
  fit_cmd->add_flag("--png", ft.png, "also write PNG heatmaps");

  ReportArgs rp;
  CLI::App* report = app.add_subcommand("report", "summarise fit results in a directory");
  report->add_option("--input", rp.input, "directory of *_fit.json files (default: --out)");

  for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    const std::vector<CLI::App*> scope{sub, &app};
    if (!g.config.empty()) cli::apply_config(cli::load_config(g.config), scope);
    if (g.threads < 1) throw ValidationError("--threads must be at least 1");
    if (g.out.empty()) throw ValidationError("--out must not be empty");

    const cli::RunInfo run = start_run(sub->get_name(), g, scope);
    Output out(g.out);
    const std::string name = sub->get_name();
    if (name == "meshgen") cmd_meshgen(mg, out);
    else if (name == "correlate") cmd_correlate(cg, out);
    else if (name == "calibrate") cmd_calibrate(cb, out);
    else if (name == "simulate") cmd_simulate(sm, g.seed, out);
    else if (name == "fit") cmd_fit(ft, out);
    else cmd_report(rp, g.out, out);
    cli::write_manifest(out.dir(), run, out.emitted());
    return 0;
  } catch (const ValidationError& e) {
    return fail(2, e.what());
  } catch (const ParseError& e) {
    return fail(2, e.what());
  } catch (const CLI::Error& e) {
    return fail(2, e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(2, e.what());
  } catch (const std::exception& e) {
    return fail(1, e.what());
  }
}
