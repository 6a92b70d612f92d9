#pragma once

// Plain-text scene configuration: "[section]" headers with "key = value"
// lines. Parse errors carry line numbers; serialization uses %.17g so a
// parse -> serialize -> parse round trip is lossless.

#include <cctype>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pstereo/core.hpp"
#include "pstereo/renderer.hpp"
#include "pstereo/ron.hpp"
#include "pstereo/solver.hpp"

namespace pstereo {

struct SceneConfig {
  // [camera] (optional; absent fields fall back to defaults for the image size)
  std::optional<double> psi_x, psi_y, delta_x, delta_y, f;

  // [material]
  MaterialParams material;

  // [light], repeated
  LightSet lights;

  // [surface] (render input: analytic surface or a depth PFM)
  std::string surface;  // plane | ramp | sphere | gauss_bump, or empty
  int size = 64;
  SurfaceParams surface_params;
  std::string depth_pfm;
  int channels = 1;

  // [paths]
  std::vector<std::string> images;  // repeated "image = <path>"
  std::string mask;
  std::string output = ".";

  // [solver]
  SolverChoice solver = SolverChoice::Dogleg;
  InitChoice init = InitChoice::Dgmc;
  double spec_percentile = 95.0;
  int curv_window = 5;
  double integrator_tol = 1e-10;
  int integrator_maxiter = 2000;

  // [ron]
  int max_sweeps = 5;
  double sweep_tol = 1e-3;
  double initial_depth = 1.5;
  double initial_m = 0.3;
  double initial_kd = 0.5;
  double shadow_tau = 0.02;
  std::optional<double> fixed_ks;  // pin k_s instead of the 1 - mean(k_d) closure

  CameraIntrinsics camera_for(int width, int height) const {
    CameraIntrinsics cam = CameraIntrinsics::defaults(width, height);
    if (psi_x) cam.psi_x = *psi_x;
    if (psi_y) cam.psi_y = *psi_y;
    if (delta_x) cam.delta_x = *delta_x;
    if (delta_y) cam.delta_y = *delta_y;
    if (f) cam.f = *f;
    cam.validate();
    return cam;
  }

  RonConfig ron_config() const {
    RonConfig cfg;
    cfg.max_sweeps = max_sweeps;
    cfg.sweep_tol = sweep_tol;
    cfg.initial_m = initial_m;
    cfg.initial_kd = initial_kd;
    cfg.initial_depth = initial_depth;
    cfg.f_lambda = material.f_lambda;
    cfg.shadow_tau = shadow_tau;
    cfg.fixed_ks = fixed_ks;
    cfg.solver.choice = solver;
    cfg.init = init;
    cfg.spec_percentile = spec_percentile;
    cfg.curv_window = curv_window;
    cfg.integrator.tol = integrator_tol;
    cfg.integrator.max_iter = integrator_maxiter;
    return cfg;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline double parse_double(const std::string& v, int line) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config line " + std::to_string(line) + ": bad number '" + v + "'");
  }
}

inline int parse_int(const std::string& v, int line) {
  try {
    std::size_t pos = 0;
    const int i = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError("config line " + std::to_string(line) + ": bad integer '" + v + "'");
  }
}

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline SolverChoice parse_solver_choice(const std::string& v) {
  if (v == "bfgs") return SolverChoice::Bfgs;
  if (v == "lm") return SolverChoice::Lm;
  if (v == "dogleg") return SolverChoice::Dogleg;
  throw ConfigError("unknown solver '" + v + "' (expected bfgs|lm|dogleg)");
}

inline InitChoice parse_init_choice(const std::string& v) {
  if (v == "dgmc") return InitChoice::Dgmc;
  if (v == "flat") return InitChoice::Flat;
  if (v == "lambertian") return InitChoice::Lambertian;
  throw ConfigError("unknown init '" + v + "' (expected dgmc|flat|lambertian)");
}

inline const char* solver_choice_name(SolverChoice c) {
  switch (c) {
    case SolverChoice::Bfgs: return "bfgs";
    case SolverChoice::Lm: return "lm";
    case SolverChoice::Dogleg: return "dogleg";
  }
  return "dogleg";
}

inline const char* init_choice_name(InitChoice c) {
  switch (c) {
    case InitChoice::Dgmc: return "dgmc";
    case InitChoice::Flat: return "flat";
    case InitChoice::Lambertian: return "lambertian";
  }
  return "dgmc";
}

inline SceneConfig parse_scene_config(const std::string& text) {
  SceneConfig cfg;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line = 0;
  bool light_open = false;
  LightKind light_kind = LightKind::Directional;
  Vec3 light_vec(0, 0, 1);
  double light_intensity = 1.0;
  bool light_has_dir = false;

  auto close_light = [&]() {
    if (!light_open) return;
    if (!light_has_dir)
      throw ConfigError("config line " + std::to_string(line) +
                        ": [light] section missing x/y/z");
    cfg.lights.push_back(light_kind == LightKind::Directional
                             ? LightSpec::directional(light_vec, light_intensity)
                             : LightSpec::point(light_vec, light_intensity));
    light_open = false;
  };

  while (std::getline(in, raw)) {
    ++line;
    const std::string s = detail::trim(raw);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;

    if (s.front() == '[') {
      if (s.back() != ']')
        throw ConfigError("config line " + std::to_string(line) + ": malformed section header");
      close_light();
      section = s.substr(1, s.size() - 2);
      if (section == "light") {
        light_open = true;
        light_kind = LightKind::Directional;
        light_vec = Vec3(0, 0, 1);
        light_intensity = 1.0;
        light_has_dir = false;
      } else if (section != "camera" && section != "material" && section != "surface" &&
                 section != "paths" && section != "solver" && section != "ron") {
        throw ConfigError("config line " + std::to_string(line) + ": unknown section [" +
                          section + "]");
      }
      continue;
    }

    const std::size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line) + ": expected key = value");
    const std::string key = detail::trim(s.substr(0, eq));
    const std::string val = detail::trim(s.substr(eq + 1));
    if (key.empty() || val.empty())
      throw ConfigError("config line " + std::to_string(line) + ": empty key or value");

    auto unknown = [&]() {
      throw ConfigError("config line " + std::to_string(line) + ": unknown key '" + key +
                        "' in section [" + section + "]");
    };

    if (section == "camera") {
      if (key == "psi_x") cfg.psi_x = detail::parse_double(val, line);
      else if (key == "psi_y") cfg.psi_y = detail::parse_double(val, line);
      else if (key == "delta_x") cfg.delta_x = detail::parse_double(val, line);
      else if (key == "delta_y") cfg.delta_y = detail::parse_double(val, line);
      else if (key == "f") cfg.f = detail::parse_double(val, line);
      else unknown();
    } else if (section == "material") {
      if (key == "k_d_r") cfg.material.k_d[0] = detail::parse_double(val, line);
      else if (key == "k_d_g") cfg.material.k_d[1] = detail::parse_double(val, line);
      else if (key == "k_d_b") cfg.material.k_d[2] = detail::parse_double(val, line);
      else if (key == "k_s") cfg.material.k_s = detail::parse_double(val, line);
      else if (key == "m") cfg.material.m = detail::parse_double(val, line);
      else if (key == "f_lambda") cfg.material.f_lambda = detail::parse_double(val, line);
      else unknown();
    } else if (section == "light") {
      if (key == "kind") {
        if (val == "directional") light_kind = LightKind::Directional;
        else if (val == "point") light_kind = LightKind::Point;
        else throw ConfigError("config line " + std::to_string(line) +
                               ": light kind must be directional|point");
      } else if (key == "x") { light_vec.x() = detail::parse_double(val, line); light_has_dir = true; }
      else if (key == "y") { light_vec.y() = detail::parse_double(val, line); light_has_dir = true; }
      else if (key == "z") { light_vec.z() = detail::parse_double(val, line); light_has_dir = true; }
      else if (key == "intensity") light_intensity = detail::parse_double(val, line);
      else unknown();
    } else if (section == "surface") {
      if (key == "name") cfg.surface = val;
      else if (key == "size") cfg.size = detail::parse_int(val, line);
      else if (key == "z0") cfg.surface_params.z0 = detail::parse_double(val, line);
      else if (key == "amplitude") cfg.surface_params.amplitude = detail::parse_double(val, line);
      else if (key == "sigma") cfg.surface_params.sigma = detail::parse_double(val, line);
      else if (key == "radius") cfg.surface_params.radius = detail::parse_double(val, line);
      else if (key == "slope_x") cfg.surface_params.slope_x = detail::parse_double(val, line);
      else if (key == "slope_y") cfg.surface_params.slope_y = detail::parse_double(val, line);
      else if (key == "depth_pfm") cfg.depth_pfm = val;
      else if (key == "channels") cfg.channels = detail::parse_int(val, line);
      else unknown();
    } else if (section == "paths") {
      if (key == "image") cfg.images.push_back(val);
      else if (key == "mask") cfg.mask = val;
      else if (key == "output") cfg.output = val;
      else unknown();
    } else if (section == "solver") {
      try {
        if (key == "solver") cfg.solver = parse_solver_choice(val);
        else if (key == "init") cfg.init = parse_init_choice(val);
        else if (key == "spec_percentile") cfg.spec_percentile = detail::parse_double(val, line);
        else if (key == "curv_window") cfg.curv_window = detail::parse_int(val, line);
        else if (key == "integrator_tol") cfg.integrator_tol = detail::parse_double(val, line);
        else if (key == "integrator_maxiter") cfg.integrator_maxiter = detail::parse_int(val, line);
        else unknown();
      } catch (const ConfigError& e) {
        // Re-tag choice-parse failures with the line number.
        const std::string what = e.what();
        if (what.rfind("config line", 0) == 0) throw;
        throw ConfigError("config line " + std::to_string(line) + ": " + what);
      }
    } else if (section == "ron") {
      if (key == "max_sweeps") cfg.max_sweeps = detail::parse_int(val, line);
      else if (key == "sweep_tol") cfg.sweep_tol = detail::parse_double(val, line);
      else if (key == "initial_depth") cfg.initial_depth = detail::parse_double(val, line);
      else if (key == "initial_m") cfg.initial_m = detail::parse_double(val, line);
      else if (key == "initial_kd") cfg.initial_kd = detail::parse_double(val, line);
      else if (key == "shadow_tau") cfg.shadow_tau = detail::parse_double(val, line);
      else if (key == "fixed_ks") cfg.fixed_ks = detail::parse_double(val, line);
      else unknown();
    } else {
      throw ConfigError("config line " + std::to_string(line) + ": key outside any section");
    }
  }
  close_light();
  return cfg;
}

inline std::string serialize_scene_config(const SceneConfig& cfg) {
  std::ostringstream out;
  auto d = detail::fmt_double;

  bool any_camera = cfg.psi_x || cfg.psi_y || cfg.delta_x || cfg.delta_y || cfg.f;
  if (any_camera) {
    out << "[camera]\n";
    if (cfg.psi_x) out << "psi_x = " << d(*cfg.psi_x) << "\n";
    if (cfg.psi_y) out << "psi_y = " << d(*cfg.psi_y) << "\n";
    if (cfg.delta_x) out << "delta_x = " << d(*cfg.delta_x) << "\n";
    if (cfg.delta_y) out << "delta_y = " << d(*cfg.delta_y) << "\n";
    if (cfg.f) out << "f = " << d(*cfg.f) << "\n";
    out << "\n";
  }

  out << "[material]\n";
  out << "k_d_r = " << d(cfg.material.k_d[0]) << "\n";
  out << "k_d_g = " << d(cfg.material.k_d[1]) << "\n";
  out << "k_d_b = " << d(cfg.material.k_d[2]) << "\n";
  out << "k_s = " << d(cfg.material.k_s) << "\n";
  out << "m = " << d(cfg.material.m) << "\n";
  out << "f_lambda = " << d(cfg.material.f_lambda) << "\n\n";

  for (const LightSpec& l : cfg.lights) {
    out << "[light]\n";
    out << "kind = " << (l.kind == LightKind::Directional ? "directional" : "point") << "\n";
    out << "x = " << d(l.vec.x()) << "\n";
    out << "y = " << d(l.vec.y()) << "\n";
    out << "z = " << d(l.vec.z()) << "\n";
    out << "intensity = " << d(l.intensity) << "\n\n";
  }

  if (!cfg.surface.empty() || !cfg.depth_pfm.empty()) {
    out << "[surface]\n";
    if (!cfg.surface.empty()) out << "name = " << cfg.surface << "\n";
    out << "size = " << cfg.size << "\n";
    out << "z0 = " << d(cfg.surface_params.z0) << "\n";
    out << "amplitude = " << d(cfg.surface_params.amplitude) << "\n";
    out << "sigma = " << d(cfg.surface_params.sigma) << "\n";
    out << "radius = " << d(cfg.surface_params.radius) << "\n";
    out << "slope_x = " << d(cfg.surface_params.slope_x) << "\n";
    out << "slope_y = " << d(cfg.surface_params.slope_y) << "\n";
    if (!cfg.depth_pfm.empty()) out << "depth_pfm = " << cfg.depth_pfm << "\n";
    out << "channels = " << cfg.channels << "\n\n";
  }

  if (!cfg.images.empty() || !cfg.mask.empty() || cfg.output != ".") {
    out << "[paths]\n";
    for (const std::string& p : cfg.images) out << "image = " << p << "\n";
    if (!cfg.mask.empty()) out << "mask = " << cfg.mask << "\n";
    if (cfg.output != ".") out << "output = " << cfg.output << "\n";
    out << "\n";
  }

  out << "[solver]\n";
  out << "solver = " << solver_choice_name(cfg.solver) << "\n";
  out << "init = " << init_choice_name(cfg.init) << "\n";
  out << "spec_percentile = " << d(cfg.spec_percentile) << "\n";
  out << "curv_window = " << cfg.curv_window << "\n";
  out << "integrator_tol = " << d(cfg.integrator_tol) << "\n";
  out << "integrator_maxiter = " << cfg.integrator_maxiter << "\n\n";

  out << "[ron]\n";
  out << "max_sweeps = " << cfg.max_sweeps << "\n";
  out << "sweep_tol = " << d(cfg.sweep_tol) << "\n";
  out << "initial_depth = " << d(cfg.initial_depth) << "\n";
  out << "initial_m = " << d(cfg.initial_m) << "\n";
  out << "initial_kd = " << d(cfg.initial_kd) << "\n";
  out << "shadow_tau = " << d(cfg.shadow_tau) << "\n";
  if (cfg.fixed_ks) out << "fixed_ks = " << d(*cfg.fixed_ks) << "\n";
  return out.str();
}

}  // namespace pstereo
