#include <catch2/catch_amalgamated.hpp>

#include <string>

#include "pstereo/scene_config.hpp"

using namespace pstereo;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::MessageMatches;

namespace {

const char* kFullConfig = R"(# exercise every section
[camera]
psi_x = 128
psi_y = 120
delta_x = 63.5
delta_y = 59.5
f = 2

[material]
k_d_r = 0.8
k_d_g = 0.3
k_d_b = 0.2
k_s = 0.25
m = 0.35
f_lambda = 0.05

[light]
kind = directional
x = 0
y = 0
z = 1
intensity = 1.5

[light]
kind = point
x = 0.25
y = -0.5
z = 4.5
intensity = 9

[light]
x = 1
y = 0
z = 0

[surface]
name = gauss_bump
size = 96
z0 = 1.75
amplitude = 0.2
sigma = 0.3
radius = 2.5
slope_x = 0.05
slope_y = -0.02
channels = 3

[paths]
image = a.pfm
image = b.pfm
image = c.pfm
mask = mask.png
output = out_dir

[solver]
solver = lm
init = lambertian
spec_percentile = 90
curv_window = 7
integrator_tol = 1e-9
integrator_maxiter = 500

[ron]
max_sweeps = 3
sweep_tol = 0.0001
initial_depth = 1.75
initial_m = 0.2
initial_kd = 0.6
shadow_tau = 0.01
fixed_ks = 0.25
)";

}  // namespace

TEST_CASE("parse_scene_config reads every section", "[config]") {
  SceneConfig cfg = parse_scene_config(kFullConfig);

  REQUIRE(cfg.psi_x == 128.0);
  REQUIRE(cfg.psi_y == 120.0);
  REQUIRE(cfg.delta_x == 63.5);
  REQUIRE(cfg.delta_y == 59.5);
  REQUIRE(cfg.f == 2.0);

  REQUIRE(cfg.material.k_d[0] == 0.8);
  REQUIRE(cfg.material.k_d[1] == 0.3);
  REQUIRE(cfg.material.k_d[2] == 0.2);
  REQUIRE(cfg.material.k_s == 0.25);
  REQUIRE(cfg.material.m == 0.35);
  REQUIRE(cfg.material.f_lambda == 0.05);

  REQUIRE(cfg.lights.size() == 3);
  REQUIRE(cfg.lights[0].kind == LightKind::Directional);
  REQUIRE(cfg.lights[0].vec == Vec3(0, 0, 1));
  REQUIRE(cfg.lights[0].intensity == 1.5);
  REQUIRE(cfg.lights[1].kind == LightKind::Point);
  REQUIRE(cfg.lights[1].vec == Vec3(0.25, -0.5, 4.5));
  REQUIRE(cfg.lights[1].intensity == 9.0);
  REQUIRE(cfg.lights[2].kind == LightKind::Directional);  // kind defaults
  REQUIRE(cfg.lights[2].vec == Vec3(1, 0, 0));
  REQUIRE(cfg.lights[2].intensity == 1.0);

  REQUIRE(cfg.surface == "gauss_bump");
  REQUIRE(cfg.size == 96);
  REQUIRE(cfg.surface_params.z0 == 1.75);
  REQUIRE(cfg.surface_params.amplitude == 0.2);
  REQUIRE(cfg.surface_params.sigma == 0.3);
  REQUIRE(cfg.surface_params.radius == 2.5);
  REQUIRE(cfg.surface_params.slope_x == 0.05);
  REQUIRE(cfg.surface_params.slope_y == -0.02);
  REQUIRE(cfg.channels == 3);

  REQUIRE(cfg.images == std::vector<std::string>{"a.pfm", "b.pfm", "c.pfm"});
  REQUIRE(cfg.mask == "mask.png");
  REQUIRE(cfg.output == "out_dir");

  REQUIRE(cfg.solver == SolverChoice::Lm);
  REQUIRE(cfg.init == InitChoice::Lambertian);
  REQUIRE(cfg.spec_percentile == 90.0);
  REQUIRE(cfg.curv_window == 7);
  REQUIRE(cfg.integrator_tol == 1e-9);
  REQUIRE(cfg.integrator_maxiter == 500);

  REQUIRE(cfg.max_sweeps == 3);
  REQUIRE(cfg.sweep_tol == 0.0001);
  REQUIRE(cfg.initial_depth == 1.75);
  REQUIRE(cfg.initial_m == 0.2);
  REQUIRE(cfg.initial_kd == 0.6);
  REQUIRE(cfg.shadow_tau == 0.01);
  REQUIRE(cfg.fixed_ks.has_value());
  REQUIRE(*cfg.fixed_ks == 0.25);
}

TEST_CASE("empty config yields the documented defaults", "[config]") {
  SceneConfig cfg = parse_scene_config("# nothing here\n\n; or here\n");
  REQUIRE_FALSE(cfg.psi_x);
  REQUIRE_FALSE(cfg.f);
  REQUIRE(cfg.material.k_d[0] == 0.5);
  REQUIRE(cfg.material.k_s == 0.5);
  REQUIRE(cfg.lights.empty());
  REQUIRE(cfg.surface.empty());
  REQUIRE(cfg.size == 64);
  REQUIRE(cfg.channels == 1);
  REQUIRE(cfg.images.empty());
  REQUIRE(cfg.output == ".");
  REQUIRE(cfg.solver == SolverChoice::Dogleg);
  REQUIRE(cfg.init == InitChoice::Dgmc);
  REQUIRE(cfg.spec_percentile == 95.0);
  REQUIRE(cfg.curv_window == 5);
  REQUIRE(cfg.integrator_tol == 1e-10);
  REQUIRE(cfg.integrator_maxiter == 2000);
  REQUIRE(cfg.max_sweeps == 5);
  REQUIRE(cfg.sweep_tol == 1e-3);
  REQUIRE(cfg.initial_depth == 1.5);
  REQUIRE(cfg.initial_m == 0.3);
  REQUIRE(cfg.initial_kd == 0.5);
  REQUIRE(cfg.shadow_tau == 0.02);
  REQUIRE_FALSE(cfg.fixed_ks.has_value());
}

TEST_CASE("serialize -> parse round trip is lossless", "[config]") {
  SceneConfig c1 = parse_scene_config(kFullConfig);
  const std::string s1 = serialize_scene_config(c1);
  SceneConfig c2 = parse_scene_config(s1);

  // All stored doubles survive %.17g bit for bit (the directional lights
  // here have exactly unit norm, so renormalizing is the identity).
  REQUIRE(serialize_scene_config(c2) == s1);
  REQUIRE(c2.material == c1.material);
  REQUIRE(c2.sweep_tol == c1.sweep_tol);
  REQUIRE(c2.surface_params.slope_y == c1.surface_params.slope_y);
  REQUIRE(c2.lights.size() == c1.lights.size());
  for (std::size_t i = 0; i < c1.lights.size(); ++i) {
    REQUIRE(c2.lights[i].kind == c1.lights[i].kind);
    REQUIRE(c2.lights[i].vec == c1.lights[i].vec);
    REQUIRE(c2.lights[i].intensity == c1.lights[i].intensity);
  }
  REQUIRE(c2.fixed_ks == c1.fixed_ks);
  REQUIRE(c2.images == c1.images);
  REQUIRE(c2.camera_for(96, 96) == c1.camera_for(96, 96));

  // Unset fixed_ks is not emitted and stays unset after a round trip.
  SceneConfig plain;
  const std::string s = serialize_scene_config(plain);
  REQUIRE(s.find("fixed_ks") == std::string::npos);
  REQUIRE_FALSE(parse_scene_config(s).fixed_ks.has_value());
}

TEST_CASE("parse errors carry line numbers", "[config]") {
  auto throws_with = [](const std::string& text, const std::string& fragment) {
    REQUIRE_THROWS_MATCHES(parse_scene_config(text), ConfigError,
                           MessageMatches(ContainsSubstring(fragment)));
  };

  throws_with("k_d_r = 0.5\n", "config line 1");
  throws_with("k_d_r = 0.5\n", "outside any section");
  throws_with("[material]\nk_d_r = abc\n", "config line 2");
  throws_with("[material]\nk_d_r = abc\n", "bad number");
  throws_with("[surface]\nsize = 1.5\n", "bad integer");
  throws_with("[material\n", "malformed section header");
  throws_with("[bogus]\n", "unknown section");
  throws_with("[material]\nshininess = 2\n", "unknown key 'shininess'");
  throws_with("[material]\nk_s =\n", "empty key or value");
  throws_with("[material]\nnonsense\n", "expected key = value");
  throws_with("[light]\nintensity = 2\n", "missing x/y/z");
  throws_with("[light]\nintensity = 2\n[material]\nk_s = 0.5\n", "config line 3");
  throws_with("[light]\nkind = spot\n", "directional|point");
  throws_with("[solver]\nsolver = newton\n", "config line 2");
  throws_with("[solver]\nsolver = newton\n", "unknown solver");
  throws_with("[solver]\ninit = magic\n", "unknown init");
}

TEST_CASE("camera_for merges overrides with image-size defaults", "[config]") {
  SceneConfig cfg;
  CameraIntrinsics cam = cfg.camera_for(64, 48);
  REQUIRE(cam == CameraIntrinsics::defaults(64, 48));

  cfg.psi_x = 200.0;
  cfg.f = 2.5;
  cam = cfg.camera_for(64, 48);
  REQUIRE(cam.psi_x == 200.0);
  REQUIRE(cam.psi_y == 64.0);
  REQUIRE(cam.delta_x == 31.5);
  REQUIRE(cam.delta_y == 23.5);
  REQUIRE(cam.f == 2.5);

  cfg.psi_x = -3.0;
  REQUIRE_THROWS_AS(cfg.camera_for(64, 48), DegenerateCamera);
}

TEST_CASE("ron_config carries the solver and loop settings over", "[config]") {
  SceneConfig cfg = parse_scene_config(kFullConfig);
  RonConfig ron = cfg.ron_config();
  REQUIRE(ron.max_sweeps == 3);
  REQUIRE(ron.sweep_tol == 0.0001);
  REQUIRE(ron.initial_m == 0.2);
  REQUIRE(ron.initial_kd == 0.6);
  REQUIRE(ron.initial_depth == 1.75);
  REQUIRE(ron.f_lambda == 0.05);
  REQUIRE(ron.shadow_tau == 0.01);
  REQUIRE(ron.fixed_ks.has_value());
  REQUIRE(*ron.fixed_ks == 0.25);
  REQUIRE(ron.solver.choice == SolverChoice::Lm);
  REQUIRE(ron.init == InitChoice::Lambertian);
  REQUIRE(ron.spec_percentile == 90.0);
  REQUIRE(ron.curv_window == 7);
  REQUIRE(ron.integrator.tol == 1e-9);
  REQUIRE(ron.integrator.max_iter == 500);
}

TEST_CASE("choice names and parsers are inverse", "[config]") {
  for (SolverChoice c : {SolverChoice::Bfgs, SolverChoice::Lm, SolverChoice::Dogleg})
    REQUIRE(parse_solver_choice(solver_choice_name(c)) == c);
  for (InitChoice c : {InitChoice::Dgmc, InitChoice::Flat, InitChoice::Lambertian})
    REQUIRE(parse_init_choice(init_choice_name(c)) == c);
  REQUIRE_THROWS_AS(parse_solver_choice("newton"), ConfigError);
  REQUIRE_THROWS_AS(parse_init_choice("magic"), ConfigError);
}
