#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "pstereo/reflectance.hpp"

using namespace pstereo;

namespace {

MaterialParams make_material(double kd, double ks, double m, double fl = 0.04) {
  MaterialParams mat;
  mat.k_d[0] = mat.k_d[1] = mat.k_d[2] = kd;
  mat.k_s = ks;
  mat.m = m;
  mat.f_lambda = fl;
  return mat;
}

}  // namespace

TEST_CASE("make_context normalizes inputs and derives H", "[reflectance]") {
  MaterialParams mat = make_material(0.5, 0.5, 0.3);
  ShadingContext ctx = make_context(Vec3(0, 0, 2), Vec3(0, 0, 3), Vec3(2, 0, 0), 1.5, mat);
  REQUIRE(ctx.N.isApprox(Vec3(0, 0, 1)));
  REQUIRE(ctx.V.isApprox(Vec3(0, 0, 1)));
  REQUIRE(ctx.L.isApprox(Vec3(1, 0, 0)));
  REQUIRE(ctx.H.isApprox(Vec3(1, 0, 1).normalized()));
  REQUIRE(ctx.half_valid);
  REQUIRE(ctx.Pi == 1.5);

  // Opposed L and V: the halfway vector degenerates.
  ShadingContext anti =
      make_context(Vec3(0, 0, 1), Vec3(0, 0, 1), Vec3(0, 0, -1), 1.0, mat);
  REQUIRE_FALSE(anti.half_valid);
  REQUIRE(anti.H == anti.N);

  REQUIRE_THROWS_AS(make_context(Vec3::Zero(), Vec3(0, 0, 1), Vec3(0, 0, 1), 1.0, mat),
                    DegenerateNormal);
  REQUIRE_THROWS_AS(make_context(Vec3(0, 0, 1), Vec3::Zero(), Vec3(0, 0, 1), 1.0, mat),
                    DegenerateView);
  REQUIRE_THROWS_AS(make_context(Vec3(0, 0, 1), Vec3(0, 0, 1), Vec3::Zero(), 1.0, mat),
                    SingularLight);
}

TEST_CASE("beckmann_D closed-form values", "[reflectance]") {
  MaterialParams mat = make_material(0.5, 0.5, 1.0);

  // Facet aligned with the normal: D = 1/(pi m^2).
  ShadingContext aligned =
      make_context(Vec3(0, 0, 1), Vec3(0, 0, 1), Vec3(0, 0, 1), 1.0, mat);
  REQUIRE(beckmann_D(aligned) == Catch::Approx(1.0 / kPi).margin(1e-15));

  // H at 45 degrees to N, m = 1: tan^2 = 1, cos^4 = 1/4, so D = 4 e^-1 / pi.
  ShadingContext tilted =
      make_context(Vec3(0, 0, 1), Vec3(0, 0, 1), Vec3(1, 0, 0), 1.0, mat);
  REQUIRE(tilted.H.isApprox(Vec3(1, 0, 1).normalized()));
  REQUIRE(beckmann_D(tilted) == Catch::Approx(4.0 * std::exp(-1.0) / kPi).epsilon(1e-12));

  // m = 0.5 sharpens the aligned peak to 1/(pi m^2) = 4/pi.
  ShadingContext sharp = make_context(Vec3(0, 0, 1), Vec3(0, 0, 1), Vec3(0, 0, 1), 1.0,
                                      make_material(0.5, 0.5, 0.5));
  REQUIRE(beckmann_D(sharp) == Catch::Approx(4.0 / kPi).epsilon(1e-12));

  // Back-facing facet contributes nothing.
  ShadingContext back = aligned;
  back.H = Vec3(0, 0, -1);
  REQUIRE(beckmann_D(back) == 0.0);
}

TEST_CASE("beckmann_D at a fixed off-normal angle grows with roughness", "[reflectance]") {
  // At 30 degrees the exponential dominates: rougher surfaces leak more.
  double prev = 0.0;
  for (double m : {0.1, 0.2, 0.3, 0.4, 0.5}) {
    ShadingContext ctx = make_context(Vec3(0, 0, 1), Vec3(0, 0, 1), Vec3(0, 0, 1), 1.0,
                                      make_material(0.5, 0.5, m));
    const double s = std::sin(kPi / 6.0), c = std::cos(kPi / 6.0);
    ctx.H = Vec3(s, 0, c);
    const double d = beckmann_D(ctx);
    REQUIRE(d > prev);
    prev = d;
  }
}

TEST_CASE("fresnel_F Schlick values", "[reflectance]") {
  MaterialParams mat = make_material(0.5, 0.5, 0.3, 0.04);
  ShadingContext ctx = make_context(Vec3(0, 0, 1), Vec3(0, 0, 1), Vec3(0, 0, 1), 1.0, mat);

  // H.V = 1: F = f_lambda exactly.
  REQUIRE(fresnel_F(ctx) == Catch::Approx(0.04).margin(1e-15));

  // H.V = 0.5: F = 0.04 + 0.96 / 32 = 0.07.
  ctx.H = Vec3(std::sqrt(3.0) / 2.0, 0.0, 0.5);
  REQUIRE(ctx.H.dot(ctx.V) == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(fresnel_F(ctx) == Catch::Approx(0.07).epsilon(1e-12));

  // Grazing limit H.V -> 0 gives F -> 1.
  ctx.H = Vec3(1, 0, 0);
  REQUIRE(fresnel_F(ctx) == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("geometric_G masking values", "[reflectance]") {
  MaterialParams mat = make_material(0.5, 0.5, 0.3);

  // N = V = (0,0,1), L = (0.6, 0, 0.8): H.N and the ratios keep G at 1.
  ShadingContext ctx =
      make_context(Vec3(0, 0, 1), Vec3(0, 0, 1), Vec3(0.6, 0, 0.8), 1.0, mat);
  const double Q = ctx.H.dot(ctx.V);
  const double T = 2.0 * ctx.H.dot(ctx.N) * ctx.V.dot(ctx.N) / Q;
  const double R = 2.0 * ctx.H.dot(ctx.N) * ctx.L.dot(ctx.N) / Q;
  REQUIRE(T == Catch::Approx(2.0).epsilon(1e-12));
  REQUIRE(R == Catch::Approx(1.6).epsilon(1e-12));
  REQUIRE(geometric_G(ctx) == 1.0);

  // Aligned configuration: T = R = 2, G = 1.
  ShadingContext top = make_context(Vec3(0, 0, 1), Vec3(0, 0, 1), Vec3(0, 0, 1), 1.0, mat);
  REQUIRE(geometric_G(top) == 1.0);

  // Degenerate half-angle: Q <= 0 forces G = 0.
  ShadingContext bad = top;
  bad.H = Vec3(-1, 0, 0);
  REQUIRE(geometric_G(bad) == 0.0);
  bad = top;
  bad.half_valid = false;
  REQUIRE(geometric_G(bad) == 0.0);
}

TEST_CASE("diffuse_shading clamps the cosine and scales by Pi", "[reflectance]") {
  MaterialParams mat = make_material(0.8, 0.2, 0.3);
  ShadingContext lit =
      make_context(Vec3(0, 0, 1), Vec3(0, 0, 1), Vec3(0.6, 0, 0.8), 2.0, mat);
  REQUIRE(diffuse_shading(lit) == Catch::Approx(1.6).epsilon(1e-12));

  ShadingContext shadowed =
      make_context(Vec3(0, 0, 1), Vec3(0, 0, 1), Vec3(0, 0.8, -0.6), 2.0, mat);
  REQUIRE(diffuse_shading(shadowed) == 0.0);
}

TEST_CASE("cook-torrance aligned-geometry oracle", "[reflectance]") {
  // N = V = L = (0,0,1), kd = 0.8, ks = 0.2, m = 0.5, f = 0.04, Pi = 1:
  // diffuse = 0.8; specular = G D F / 4 = 1 * (4/pi) * 0.04 / 4 = 0.04/pi;
  // I = 0.8 + 0.2 * 0.04 / pi.
  MaterialParams mat = make_material(0.8, 0.2, 0.5);
  ShadingContext ctx = make_context(Vec3(0, 0, 1), Vec3(0, 0, 1), Vec3(0, 0, 1), 1.0, mat);
  const double expected = 0.8 + 0.2 * 0.04 / kPi;
  REQUIRE(eval_cook_torrance(ctx, 0) == Catch::Approx(expected).epsilon(1e-14));
  REQUIRE(eval_lambertian(ctx, 0) == Catch::Approx(0.8).margin(1e-15));
  REQUIRE(specular_term(ctx) == Catch::Approx(0.04 / kPi).epsilon(1e-14));
}

TEST_CASE("k_s = 0 degenerates Cook-Torrance to Lambertian exactly", "[reflectance]") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> up(0.05, 1.0);
  MaterialParams mat = make_material(0.7, 0.0, 0.3);

  int checked = 0;
  while (checked < 100) {
    Vec3 N(u(rng), u(rng), up(rng));
    Vec3 V(u(rng), u(rng), up(rng));
    Vec3 L(u(rng), u(rng), u(rng));
    if (N.norm() < 1e-3 || V.norm() < 1e-3 || L.norm() < 1e-3) continue;
    ShadingContext ctx = make_context(N, V, L, up(rng) * 2.0, mat);
    REQUIRE(eval_cook_torrance(ctx, 0) == eval_lambertian(ctx, 0));
    ++checked;
  }
}

TEST_CASE("specular_term honors the grazing guard", "[reflectance]") {
  MaterialParams mat = make_material(0.5, 0.5, 0.3);

  // V nearly orthogonal to N: V.N below the guard kills the lobe.
  const double c = kCosEpsilon / 2.0;
  ShadingContext ctx = make_context(Vec3(0, 0, 1), Vec3(std::sqrt(1.0 - c * c), 0, c),
                                    Vec3(0, 0, 1), 1.0, mat);
  REQUIRE(specular_term(ctx) == 0.0);

  // L below the guard behaves the same.
  ShadingContext ctx2 = make_context(Vec3(0, 0, 1), Vec3(0, 0, 1),
                                     Vec3(std::sqrt(1.0 - c * c), 0, c), 1.0, mat);
  REQUIRE(specular_term(ctx2) == 0.0);
}

TEST_CASE("reflectance stays finite over random front-facing samples", "[reflectance]") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> up(0.01, 1.0);
  std::uniform_real_distribution<double> rough(0.05, 1.5);

  for (int i = 0; i < 500; ++i) {
    Vec3 N(u(rng), u(rng), up(rng));
    Vec3 V(u(rng), u(rng), up(rng));
    Vec3 L(u(rng), u(rng), u(rng));
    if (N.norm() < 1e-3 || V.norm() < 1e-3 || L.norm() < 1e-3) continue;
    MaterialParams mat = make_material(0.6, 0.4, rough(rng));
    ShadingContext ctx = make_context(N, V, L, 2.0, mat);
    const double v = eval_cook_torrance(ctx, 0);
    REQUIRE(std::isfinite(v));
    REQUIRE(v >= 0.0);
  }
}
