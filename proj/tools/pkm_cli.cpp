// Command line front end: loads a mechanism description and runs the
// analyses, writing deterministic CSV/JSON artifacts plus a manifest.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pkm/atlas.hpp"
#include "pkm/dynamics.hpp"
#include "pkm/errors.hpp"
#include "pkm/io.hpp"
#include "pkm/singularity.hpp"
#include "pkm/workspace.hpp"

using json = nlohmann::ordered_json;
using pkm::Vec;

namespace {

constexpr const char* kVersion = "0.1.0";

Vec parse_vec(const std::string& csv, const std::string& what) {
  std::vector<double> vals;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      size_t used = 0;
      vals.push_back(std::stod(tok, &used));
      while (used < tok.size() && std::isspace(static_cast<unsigned char>(tok[used]))) ++used;
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      pkm::fail(pkm::ErrorKind::ParseError, what + ": bad number '" + tok + "'");
    }
  }
  if (vals.empty()) pkm::fail(pkm::ErrorKind::ParseError, what + ": empty");
  Vec v(vals.size());
  for (size_t i = 0; i < vals.size(); ++i) v(i) = vals[i];
  return v;
}

std::vector<int> parse_coords(const std::string& csv, int n) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    int v = 0;
    try {
      v = std::stoi(tok);
    } catch (const std::exception&) {
      pkm::fail(pkm::ErrorKind::ParseError, "coords: bad index '" + tok + "'");
    }
    if (v < 1 || v > n)
      pkm::fail(pkm::ErrorKind::ParseError, "coords: index " + tok + " out of 1.." +
                                                std::to_string(n));
    out.push_back(v - 1);
  }
  if (out.empty()) pkm::fail(pkm::ErrorKind::ParseError, "coords: empty");
  return out;
}

struct Ctx {
  std::string mech_path;
  std::string out_dir = ".";
  uint64_t seed = 0;
  double tol_rank = pkm::kRankTolFactor;
  double step = 0.05;
  std::vector<std::string> argv;

  pkm::Mechanism mech;
  json manifest;
  std::vector<std::string> outputs;

  void load() {
    mech = pkm::load_mechanism(mech_path);
    manifest["tool"] = "pkm";
    manifest["version"] = kVersion;
    manifest["argv"] = argv;
    manifest["mechanism"] = mech_path;
    manifest["mechanism_name"] = mech.name;
    manifest["seed"] = seed;
    manifest["tolerances"] = {{"rank_tol_factor", tol_rank},
                              {"residual_norm", pkm::Mechanism::kTauH},
                              {"newton_tol", 1e-12}};
    manifest["step"] = step;
  }

  // explicit --q wins; otherwise the file's reference configuration
  Vec config_from(const std::string& q_csv, bool use_reference) {
    if (use_reference || q_csv.empty()) {
      if (!mech.reference_q)
        pkm::fail(pkm::ErrorKind::ParseError,
                  "need --q: mechanism file has no reference_q");
      return *mech.reference_q;
    }
    Vec q = parse_vec(q_csv, "--q");
    if (q.size() != mech.n())
      pkm::fail(pkm::ErrorKind::ParseError,
                "--q needs " + std::to_string(mech.n()) + " values");
    return q;
  }

  void write(const std::string& name, const std::string& content) {
    std::filesystem::create_directories(out_dir);
    pkm::write_text_file(out_dir + "/" + name, content);
    outputs.push_back(name);
  }

  void finish() {
    manifest["outputs"] = outputs;
    std::filesystem::create_directories(out_dir);
    pkm::write_text_file(out_dir + "/manifest.json", manifest.dump(2) + "\n");
  }
};

std::string atlas_csv(const pkm::Mechanism& mech, const pkm::ModeAtlas& atlas) {
  std::ostringstream os;
  os << "# mechanism=" << mech.name << "\n";
  os << "# samples=" << atlas.samples.size() << "\n";
  for (int i = 0; i < mech.n(); ++i) os << "q" << (i + 1) << ", ";
  os << "feasible, delta_diff, ind_cspace, ind_passive, ind_actuator, ind_output, "
        "det_jp, assembly, motion, actuation, operation\n";
  for (const auto& s : atlas.samples) {
    for (int i = 0; i < mech.n(); ++i) os << pkm::fmt(s.q(i)) << ", ";
    os << (s.feasible ? 1 : 0) << ", " << s.delta_diff << ", " << pkm::fmt(s.ind_cspace)
       << ", " << pkm::fmt(s.ind_passive) << ", " << pkm::fmt(s.ind_actuator) << ", "
       << pkm::fmt(s.ind_output) << ", " << pkm::fmt(s.det_jp) << ", " << s.assembly
       << ", " << s.motion << ", " << s.actuation << ", " << s.operation << "\n";
  }
  return os.str();
}

int run(int argc, char** argv) {
  CLI::App app{"planar parallel kinematic machine analyzer"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand

  Ctx ctx;
  for (int i = 0; i < argc; ++i) ctx.argv.push_back(argv[i]);
  app.add_option("--mech", ctx.mech_path, "mechanism JSON file")->required();
  app.add_option("--out", ctx.out_dir, "output directory (default .)");
  app.add_option("--seed", ctx.seed, "probe RNG seed");
  app.add_option("--tol-rank", ctx.tol_rank, "relative rank tolerance factor");
  app.add_option("--step", ctx.step, "atlas step size");

  auto* info = app.add_subcommand("info", "mechanism summary");

  std::string q_csv;
  bool use_ref = false;
  auto* classify = app.add_subcommand("classify", "singularity classification at a configuration");
  classify->add_option("--q", q_csv, "configuration, comma separated");
  classify->add_flag("--reference", use_ref, "use the file's reference configuration");

  int budget = 40000;
  double window_radius = 0.0;
  auto* modes = app.add_subcommand("modes", "sample the variety and label modes");
  modes->add_option("--budget", budget, "sample budget");
  modes->add_option("--window-radius", window_radius,
                    "restrict to a ball around the reference (0 = unbounded)");

  std::string center_csv, coords_csv = "1,2,3";
  double radius = 0.5;
  bool center_ref = false;
  auto* section = app.add_subcommand("trace-section", "coordinate section of the variety");
  section->add_option("--center", center_csv, "center configuration");
  section->add_flag("--reference", center_ref, "center on the reference configuration");
  section->add_option("--radius", radius, "ball radius");
  section->add_option("--coords", coords_csv, "reported coordinates, 1-based");
  section->add_option("--budget", budget, "sample budget");

  std::string box_csv = "0:1:0:1", seed_csv;
  int res = 50;
  auto* wmap = app.add_subcommand("map-manipulability", "workspace isotropy sweep");
  wmap->add_option("--box", box_csv, "x0:x1:y0:y1");
  wmap->add_option("--res", res, "cells per axis");
  wmap->add_option("--seed-config", seed_csv, "branch-selecting start configuration");

  auto* doa = app.add_subcommand("doa", "degree of actuation / redundancy report");
  doa->add_option("--q", q_csv, "configuration, comma separated");
  doa->add_flag("--reference", use_ref, "use the file's reference configuration");

  double horizon = 1.0, dt = 1e-3;
  bool no_gravity = false;
  std::string q0_csv, qdot0_csv, effort_csv, wrench_csv;
  auto* sim = app.add_subcommand("simulate", "forward dynamics roll-out");
  sim->add_option("--horizon", horizon, "duration in seconds");
  sim->add_option("--dt", dt, "integration step");
  sim->add_flag("--no-gravity", no_gravity, "switch gravity off");
  sim->add_option("--q0", q0_csv, "start configuration (default reference)");
  sim->add_option("--qdot0", qdot0_csv, "start rates (default zero)");
  sim->add_option("--effort", effort_csv, "constant actuator efforts");
  sim->add_option("--wrench", wrench_csv, "constant ee wrench fx,fy,mz");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  ctx.load();

  if (info->parsed()) {
    const auto& m = ctx.mech;
    std::cout << "name: " << m.name << "\n"
              << "links: " << m.links.size() << "\n"
              << "joints: " << m.n() << "\n"
              << "loops: " << m.n_loops() << "\n"
              << "actuated: " << m.n_actuated() << "\n"
              << "mobility count: " << m.mobility_count() << "\n"
              << "reference: " << (m.reference_q ? "yes" : "no") << "\n";
    if (m.reference_q) {
      auto rep = pkm::classify(m, *m.reference_q);
      std::cout << "tangent dimension at reference: " << rep.delta_diff << "\n";
    }
    ctx.manifest["command"] = "info";
    ctx.finish();
    return 0;
  }

  if (classify->parsed()) {
    Vec q = ctx.config_from(q_csv, use_ref);
    pkm::ClassifyOptions copts;
    copts.seed = ctx.seed;
    copts.tol_factor = ctx.tol_rank;
    auto rep = pkm::classify(ctx.mech, q, copts);
    std::string text = pkm::report_text(rep);
    std::cout << text;
    ctx.manifest["command"] = "classify";
    ctx.manifest["q"] = std::vector<double>(q.data(), q.data() + q.size());
    ctx.manifest["flags"] = {{"cspace", rep.cspace}, {"passive", rep.passive},
                             {"actuator", rep.actuator}, {"input", rep.input},
                             {"output", rep.output}, {"uncertain", rep.uncertain}};
    ctx.manifest["labels"] = rep.labels;
    ctx.write("classify.txt", text);
    ctx.finish();
    return 0;
  }

  if (modes->parsed()) {
    pkm::AtlasOptions aopts;
    aopts.step = ctx.step;
    aopts.budget = budget;
    aopts.tol_factor = ctx.tol_rank;
    if (window_radius > 0.0) {
      if (!ctx.mech.reference_q)
        pkm::fail(pkm::ErrorKind::ParseError, "windowed sampling needs reference_q");
      aopts.window_center = *ctx.mech.reference_q;
      aopts.window_radius = window_radius;
    }
    if (!ctx.mech.reference_q)
      pkm::fail(pkm::ErrorKind::ParseError, "modes needs reference_q");
    auto atlas = pkm::sample_cspace(ctx.mech, {*ctx.mech.reference_q}, aopts);
    pkm::label_modes(ctx.mech, atlas, aopts);
    auto rep = pkm::dof_report(ctx.mech, atlas, ctx.mech.reference_q);
    std::cout << "samples: " << atlas.samples.size() << "\n"
              << "budget exhausted: " << (atlas.budget_exhausted ? "yes" : "no") << "\n"
              << "assembly modes: " << atlas.n_assembly << "\n"
              << "motion modes: " << atlas.n_motion << "\n"
              << "actuation modes: " << atlas.n_actuation << "\n"
              << "operation modes: " << atlas.n_operation << "\n"
              << "mobility count: " << rep.mobility_count << "\n"
              << "modal dof: " << rep.delta << "\n";
    ctx.manifest["command"] = "modes";
    ctx.manifest["budget"] = budget;
    ctx.manifest["samples"] = atlas.samples.size();
    ctx.manifest["counts"] = {{"assembly", atlas.n_assembly}, {"motion", atlas.n_motion},
                              {"actuation", atlas.n_actuation},
                              {"operation", atlas.n_operation}};
    ctx.manifest["modal_dof"] = rep.delta;
    ctx.write("modes.csv", atlas_csv(ctx.mech, atlas));
    ctx.finish();
    return 0;
  }

  if (section->parsed()) {
    Vec center = center_ref ? ctx.config_from("", true)
                            : parse_vec(center_csv, "--center");
    if (center.size() != ctx.mech.n())
      pkm::fail(pkm::ErrorKind::ParseError, "--center has the wrong length");
    auto coords = parse_coords(coords_csv, ctx.mech.n());
    pkm::AtlasOptions aopts;
    aopts.step = ctx.step;
    aopts.budget = budget;
    auto trace = pkm::trace_section(ctx.mech, center, radius, coords, aopts);
    std::ostringstream os;
    os << "# mechanism=" << ctx.mech.name << "\n# radius=" << pkm::fmt(radius) << "\n";
    for (size_t i = 0; i < coords.size(); ++i)
      os << "q" << (coords[i] + 1) << (i + 1 < coords.size() ? ", " : "\n");
    for (const auto& row : trace.rows) {
      for (int i = 0; i < row.size(); ++i)
        os << pkm::fmt(row(i)) << (i + 1 < row.size() ? ", " : "\n");
    }
    std::cout << "samples: " << trace.rows.size() << "\n";
    ctx.manifest["command"] = "trace-section";
    ctx.manifest["radius"] = radius;
    std::vector<int> ui;
    for (int c : coords) ui.push_back(c + 1);
    ctx.manifest["coords"] = ui;
    ctx.manifest["samples"] = trace.rows.size();
    ctx.write("section.csv", os.str());
    ctx.finish();
    return 0;
  }

  if (wmap->parsed()) {
    double x0, x1, y0, y1;
    if (std::sscanf(box_csv.c_str(), "%lf:%lf:%lf:%lf", &x0, &x1, &y0, &y1) != 4)
      pkm::fail(pkm::ErrorKind::ParseError, "--box wants x0:x1:y0:y1");
    if (!(x1 > x0) || !(y1 > y0))
      pkm::fail(pkm::ErrorKind::ParseError, "--box is empty");
    if (res < 1 || res > 2000)
      pkm::fail(pkm::ErrorKind::ParseError, "--res out of range");
    Vec seedq = seed_csv.empty() ? ctx.config_from("", true)
                                 : parse_vec(seed_csv, "--seed-config");
    if (seedq.size() != ctx.mech.n())
      pkm::fail(pkm::ErrorKind::ParseError, "--seed-config has the wrong length");
    pkm::SweepOptions sopts;
    sopts.x0 = x0;
    sopts.x1 = x1;
    sopts.y0 = y0;
    sopts.y1 = y1;
    sopts.nx = res;
    sopts.ny = res;
    sopts.tol_factor = ctx.tol_rank;
    auto grid = pkm::sweep_workspace(ctx.mech, seedq, sopts);
    int reachable = 0;
    double kmin = 1.0, kmax = 0.0;
    for (const auto& c : grid.cells) {
      if (!c.reachable) continue;
      ++reachable;
      kmin = std::min(kmin, c.inv_kappa);
      kmax = std::max(kmax, c.inv_kappa);
    }
    std::cout << "cells: " << grid.cells.size() << "\nreachable: " << reachable << "\n";
    if (reachable)
      std::cout << "inv_kappa range: [" << pkm::fmt(kmin) << ", " << pkm::fmt(kmax) << "]\n";
    ctx.manifest["command"] = "map-manipulability";
    ctx.manifest["box"] = {x0, x1, y0, y1};
    ctx.manifest["res"] = res;
    ctx.manifest["reachable"] = reachable;
    ctx.write("workspace.csv", pkm::workspace_csv(grid));
    ctx.finish();
    return 0;
  }

  if (doa->parsed()) {
    Vec q = ctx.config_from(q_csv, use_ref);
    ctx.mech.require_admissible(q);
    auto ev = ctx.mech.eval(q);
    auto b = pkm::make_bundle(ctx.mech, ev, ctx.tol_rank);
    auto chart = pkm::choose_chart(ctx.mech, ev, ctx.tol_rank);
    auto cm = pkm::chart_matrices(ctx.mech, ev, chart);
    auto aa = pkm::control_matrix(ctx.mech, b, chart, cm);
    std::ostringstream os;
    os << "actuators: " << aa.m << "\nlocal dof: " << aa.delta_loc
       << "\ndegree of actuation: " << aa.alpha << "\nredundancy: " << aa.rho << "\n"
       << "fully actuated: " << (aa.full ? "yes" : "no") << "\n"
       << "redundant: " << (aa.redundant ? "yes" : "no") << "\n"
       << "tangent input rank: " << aa.tangent_input_rank << "\n"
       << "assignable input dimension: " << aa.assignable_input_dim << "\n"
       << "chart condition: " << pkm::fmt(cm.cond_B) << "\n";
    std::cout << os.str();
    ctx.manifest["command"] = "doa";
    ctx.manifest["alpha"] = aa.alpha;
    ctx.manifest["rho"] = aa.rho;
    ctx.manifest["m"] = aa.m;
    ctx.manifest["delta_loc"] = aa.delta_loc;
    ctx.write("doa.txt", os.str());
    ctx.finish();
    return 0;
  }

  if (sim->parsed()) {
    if (!(dt > 0.0) || !(horizon > 0.0))
      pkm::fail(pkm::ErrorKind::ParseError, "--dt and --horizon must be positive");
    Vec q0 = q0_csv.empty() ? ctx.config_from("", true) : parse_vec(q0_csv, "--q0");
    if (q0.size() != ctx.mech.n())
      pkm::fail(pkm::ErrorKind::ParseError, "--q0 has the wrong length");
    Vec qd0 = Vec::Zero(ctx.mech.n());
    if (!qdot0_csv.empty()) {
      qd0 = parse_vec(qdot0_csv, "--qdot0");
      if (qd0.size() != ctx.mech.n())
        pkm::fail(pkm::ErrorKind::ParseError, "--qdot0 has the wrong length");
    }
    Vec effort = Vec::Zero(ctx.mech.n_actuated());
    if (!effort_csv.empty()) {
      effort = parse_vec(effort_csv, "--effort");
      if (effort.size() != ctx.mech.n_actuated())
        pkm::fail(pkm::ErrorKind::ParseError, "--effort has the wrong length");
    }
    Eigen::Vector3d wr = Eigen::Vector3d::Zero();
    if (!wrench_csv.empty()) {
      Vec w = parse_vec(wrench_csv, "--wrench");
      if (w.size() != 3) pkm::fail(pkm::ErrorKind::ParseError, "--wrench wants 3 values");
      wr = Eigen::Vector3d(w(0), w(1), w(2));
    }
    pkm::SimOptions sopts;
    sopts.horizon = horizon;
    sopts.dt = dt;
    if (no_gravity) sopts.gravity = pkm::Vec2(0.0, 0.0);
    auto tr = pkm::forward_dynamics(
        ctx.mech, q0, qd0, [&](double, const Vec&, const Vec&) { return effort; },
        [&](double) { return wr; }, sopts);

    std::ostringstream os;
    os << "# mechanism=" << ctx.mech.name << "\n# dt=" << pkm::fmt(dt) << "\n";
    os << "t";
    for (int i = 0; i < ctx.mech.n(); ++i) os << ", q" << (i + 1);
    for (int i = 0; i < ctx.mech.n(); ++i) os << ", qd" << (i + 1);
    os << ", kinetic, potential\n";
    for (size_t k = 0; k < tr.t.size(); ++k) {
      os << pkm::fmt(tr.t[k]);
      for (int i = 0; i < ctx.mech.n(); ++i) os << ", " << pkm::fmt(tr.q[k](i));
      for (int i = 0; i < ctx.mech.n(); ++i) os << ", " << pkm::fmt(tr.qdot[k](i));
      os << ", " << pkm::fmt(tr.kinetic[k]) << ", " << pkm::fmt(tr.potential[k]) << "\n";
    }
    std::cout << "steps: " << tr.t.size() << "\ncompleted: " << (tr.completed ? "yes" : "no")
              << "\nevents: " << tr.events.size() << "\n";
    ctx.manifest["command"] = "simulate";
    ctx.manifest["horizon"] = horizon;
    ctx.manifest["dt"] = dt;
    ctx.manifest["completed"] = tr.completed;
    json ev = json::array();
    for (const auto& e : tr.events)
      ev.push_back({{"t", e.t}, {"kind", e.kind}, {"detail", e.detail}});
    ctx.manifest["events"] = ev;
    ctx.write("trajectory.csv", os.str());
    ctx.finish();
    return 0;
  }

  pkm::fail(pkm::ErrorKind::UnknownCommand, "no command matched");
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const pkm::Error& e) {
    std::cerr << "error [" << pkm::to_string(e.kind()) << "]: " << e.what() << "\n";
    // anything wrong with the invocation or the mechanism file itself is a
    // usage error (2); failures of the requested computation are 3
    switch (e.kind()) {
      case pkm::ErrorKind::ParseError:
      case pkm::ErrorKind::UnknownCommand:
      case pkm::ErrorKind::DisconnectedGraph:
      case pkm::ErrorKind::NoGroundLink:
      case pkm::ErrorKind::DuplicateId:
      case pkm::ErrorKind::UnknownId:
      case pkm::ErrorKind::UnsupportedJointKind:
      case pkm::ErrorKind::ZeroLengthLink:
        return 2;
      default:
        return 3;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
