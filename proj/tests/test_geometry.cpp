#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "pstereo/geometry.hpp"

using namespace pstereo;

TEST_CASE("surface_point places pixels on the perspective ray", "[geometry]") {
  // Principal axis: (0,0) stays on the z axis at any depth.
  REQUIRE(surface_point(0.0, 0.0, 2.0, 1.0).isApprox(Vec3(0, 0, 2)));
  // Off-axis point at f=1: S = (-x z, -y z, z).
  REQUIRE(surface_point(0.5, -0.25, 2.0, 1.0).isApprox(Vec3(-1.0, 0.5, 2.0)));
  // Doubling f halves the lateral offset at fixed image coords.
  REQUIRE(surface_point(0.5, 0.0, 2.0, 2.0).isApprox(Vec3(-0.5, 0.0, 2.0)));
  REQUIRE_THROWS_AS(surface_point(0, 0, 1, 0.0), DegenerateCamera);
}

TEST_CASE("normal_from_gradient matches the analytic cross product", "[geometry]") {
  // Constant-depth plane: N = (0, 0, z^2/f^2).
  Vec3 flat = normal_from_gradient(0.3, -0.2, 2.0, 0.0, 0.0, 1.0);
  REQUIRE(flat.isApprox(Vec3(0, 0, 4.0)));

  // x = y = 0, z = 2, grad = (1, 0), f = 1:
  // dS/dx = (-2, 0, 1), dS/dy = (0, -2, 0), cross = (2, 0, 4).
  Vec3 n = normal_from_gradient(0.0, 0.0, 2.0, 1.0, 0.0, 1.0);
  REQUIRE(n.isApprox(Vec3(2.0, 0.0, 4.0)));
  Vec3 u = unit_normal_from_gradient(0.0, 0.0, 2.0, 1.0, 0.0, 1.0);
  REQUIRE(u.isApprox(Vec3(1.0 / std::sqrt(5.0), 0.0, 2.0 / std::sqrt(5.0))));

  REQUIRE_THROWS_AS(normal_from_gradient(0, 0, 1, 0, 0, -1.0), DegenerateCamera);
  REQUIRE_THROWS_AS(normal_from_gradient(0, 0, 0.0, 0, 0, 1.0), DegenerateNormal);
}

TEST_CASE("normal_from_gradient equals dS/dx x dS/dy on random tuples", "[geometry]") {
  std::mt19937 rng(41);
  std::uniform_real_distribution<double> coord(-0.4, 0.4);
  std::uniform_real_distribution<double> depth(0.5, 3.0);
  std::uniform_real_distribution<double> slope(-2.0, 2.0);
  std::uniform_real_distribution<double> focal(0.5, 2.0);

  for (int i = 0; i < 200; ++i) {
    const double x = coord(rng), y = coord(rng), z = depth(rng);
    const double zx = slope(rng), zy = slope(rng), f = focal(rng);
    // Tangents of S(x,y) with z(x,y) varying:
    const Vec3 Sx(-(z + x * zx) / f, -y * zx / f, zx);
    const Vec3 Sy(-x * zy / f, -(z + y * zy) / f, zy);
    const Vec3 expected = Sx.cross(Sy);
    const Vec3 got = normal_from_gradient(x, y, z, zx, zy, f);
    REQUIRE((got - expected).norm() <= 1e-10 * expected.norm());
  }
}

TEST_CASE("gradient_from_normal inverts the gradient map", "[geometry]") {
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> coord(-0.4, 0.4);
  std::uniform_real_distribution<double> depth(0.5, 3.0);
  std::uniform_real_distribution<double> slope(-2.0, 2.0);

  for (int i = 0; i < 200; ++i) {
    const double x = coord(rng), y = coord(rng), z = depth(rng);
    const double zx = slope(rng), zy = slope(rng);
    const Vec3 n = unit_normal_from_gradient(x, y, z, zx, zy, 1.0);
    const Vec2 g = gradient_from_normal(n, x, y, z, 1.0);
    REQUIRE(g.x() == Catch::Approx(zx).margin(1e-9));
    REQUIRE(g.y() == Catch::Approx(zy).margin(1e-9));
  }

  // Grazing fallback: a normal orthogonal to the recovery direction.
  const Vec2 flat = gradient_from_normal(Vec3(1, 0, 0), 0.0, 0.0, 1.0, 1.0);
  REQUIRE(flat == Vec2(0.0, 0.0));
}

TEST_CASE("pixel_to_image_coords applies the intrinsics", "[geometry]") {
  CameraIntrinsics cam = CameraIntrinsics::defaults(64, 64);
  // The principal point maps to the optical axis.
  Vec3 center = pixel_to_image_coords(31.5, 31.5, cam);
  REQUIRE(center.x() == 0.0);
  REQUIRE(center.y() == 0.0);
  REQUIRE(center.z() == cam.f);

  Vec3 corner = pixel_to_image_coords(0, 0, cam);
  REQUIRE(corner.x() == Catch::Approx(-31.5 / 64.0).margin(1e-15));
  REQUIRE(corner.y() == Catch::Approx(-31.5 / 64.0).margin(1e-15));

  CameraIntrinsics bad = cam;
  bad.psi_y = -1.0;
  REQUIRE_THROWS_AS(pixel_to_image_coords(0, 0, bad), DegenerateCamera);
}

TEST_CASE("viewing_vector points at the camera, shading_view away", "[geometry]") {
  const Vec3 S(3.0, 0.0, 4.0);
  const Vec3 v = viewing_vector(S);
  REQUIRE(v.isApprox(Vec3(-0.6, 0.0, -0.8)));
  REQUIRE(shading_view(S).isApprox(Vec3(0.6, 0.0, 0.8)));
  REQUIRE(viewing_vector(0.0, 0.0, 2.0, 1.0).isApprox(Vec3(0, 0, -1)));
  REQUIRE_THROWS_AS(viewing_vector(Vec3::Zero()), DegenerateView);
}

TEST_CASE("light_vector resolves both light kinds", "[geometry]") {
  const Vec3 S(0.0, 0.0, 1.0);

  LightSpec dir = LightSpec::directional(Vec3(0, 0, 1), 2.5);
  auto [ld, pid] = light_vector(dir, S);
  REQUIRE(ld.isApprox(Vec3(0, 0, 1)));
  REQUIRE(pid == 2.5);  // no attenuation

  // Point source 2 units above S: Pi = intensity / r^2 = 1 / 4.
  LightSpec pt = LightSpec::point(Vec3(0, 0, 3), 1.0);
  auto [lp, pip] = light_vector(pt, S);
  REQUIRE(lp.isApprox(Vec3(0, 0, 1)));
  REQUIRE(pip == Catch::Approx(0.25).margin(1e-15));

  LightSpec on_surface = LightSpec::point(S, 1.0);
  REQUIRE_THROWS_AS(light_vector(on_surface, S), SingularLight);
}

TEST_CASE("approximate_directional freezes point lights at the reference", "[geometry]") {
  LightSet lights = {LightSpec::point(Vec3(0, 0, 5), 8.0),
                     LightSpec::directional(Vec3(1, 0, 1), 1.0)};
  LightSet out = approximate_directional(lights, 1.0);
  REQUIRE(out.size() == 2);
  REQUIRE(out[0].kind == LightKind::Directional);
  REQUIRE(out[0].vec.isApprox(Vec3(0, 0, 1)));
  // r = 4 from (0,0,1): intensity 8/16 = 0.5 baked in.
  REQUIRE(out[0].intensity == Catch::Approx(0.5).margin(1e-15));
  // Directional lights pass through untouched.
  REQUIRE(out[1].vec == lights[1].vec);
  REQUIRE(out[1].intensity == lights[1].intensity);
}

TEST_CASE("distant point lights converge to their directional stand-in", "[geometry]") {
  // A point source far away shades a nearby scene like the fixed direction.
  const double D = 1e4;
  LightSpec pt = LightSpec::point(Vec3(0.3 * D, 0.2 * D, D), D * D);
  const Vec3 S(0.05, -0.02, 1.2);
  auto [l, pi] = light_vector(pt, S);
  const Vec3 expect = Vec3(0.3, 0.2, 1.0).normalized();
  REQUIRE((l - expect).norm() < 1e-3);
  // Pi = D^2 / r^2 with r ~ D * |(0.3, 0.2, 1)|.
  REQUIRE(pi == Catch::Approx(1.0 / (0.3 * 0.3 + 0.2 * 0.2 + 1.0)).epsilon(1e-3));
}
