#pragma once

// Cook-Torrance irradiance and its factors (Beckmann distribution, Schlick
// Fresnel, min-based geometric attenuation), plus the Lambertian baseline.
//
//   I = k_d[c] * max(0, L.N) * Pi  +  k_s * Pi * G * D * F / (4 (V.N)(L.N))
//
// The specular lobe is channel-uniform (single f_lambda, white highlight) and
// weighted by the explicit k_s knob. All cosines are clamped to [0, 1] before
// use; configurations with L.N or V.N below cos_epsilon contribute no
// specular light (the denominator would blow up at grazing angles).

#include <cmath>

#include "pstereo/core.hpp"

namespace pstereo {

// Grazing guard for the specular denominator.
inline constexpr double kCosEpsilon = 1e-4;

struct ShadingContext {
  Vec3 N = Vec3(0, 0, 1);  // unit surface normal
  Vec3 V = Vec3(0, 0, 1);  // unit view vector (shading frame, +z hemisphere)
  Vec3 L = Vec3(0, 0, 1);  // unit light vector (surface toward source)
  Vec3 H = Vec3(0, 0, 1);  // halfway vector, recomputed from L and V
  double Pi = 1.0;         // incident light intensity at the surface
  MaterialParams material;
  bool half_valid = true;  // false when L + V vanishes (no specular)
};

// Builds a context, normalizing the direction inputs and deriving H.
inline ShadingContext make_context(const Vec3& N, const Vec3& V, const Vec3& L,
                                   double Pi, const MaterialParams& material) {
  ShadingContext ctx;
  double nn = N.norm(), nv = V.norm(), nl = L.norm();
  if (nn < 1e-12) throw DegenerateNormal("make_context: zero normal");
  if (nv < 1e-12) throw DegenerateView("make_context: zero view vector");
  if (nl < 1e-12) throw SingularLight("make_context: zero light vector");
  ctx.N = N / nn;
  ctx.V = V / nv;
  ctx.L = L / nl;
  Vec3 h = ctx.L + ctx.V;
  double nh = h.norm();
  ctx.half_valid = nh >= 1e-12;
  ctx.H = ctx.half_valid ? Vec3(h / nh) : ctx.N;
  ctx.Pi = Pi;
  ctx.material = material;
  return ctx;
}

// Beckmann facet distribution, D = exp(-tan^2(a)/m^2) / (pi m^2 cos^4 a) with
// cos a = H.N. Back-facing facets (cos a <= 0) contribute nothing.
inline double beckmann_D(const ShadingContext& ctx) {
  double c = ctx.H.dot(ctx.N);
  if (c <= 0.0) return 0.0;  // BackFacet: suppressed
  c = std::min(c, 1.0);
  double c2 = c * c;
  double tan2 = (1.0 - c2) / c2;
  double m2 = ctx.material.m * ctx.material.m;
  return std::exp(-tan2 / m2) / (kPi * m2 * c2 * c2);
}

// Schlick Fresnel on the halfway vector: F = f + (1-f)(1 - H.V)^5.
inline double fresnel_F(const ShadingContext& ctx) {
  double c = clamp01(ctx.H.dot(ctx.V));
  double f = ctx.material.f_lambda;
  double b = 1.0 - c;
  double b2 = b * b;
  return f + (1.0 - f) * b2 * b2 * b;
}

// Geometric attenuation G = min{1, 2(H.N)(V.N)/Q, 2(H.N)(L.N)/Q}, Q = V.H.
// Degenerate half-angle geometry (Q <= 0) yields 0.
inline double geometric_G(const ShadingContext& ctx) {
  double Q = ctx.H.dot(ctx.V);
  if (Q <= 0.0 || !ctx.half_valid) return 0.0;  // DegenerateHalfAngle
  double ch = clamp01(ctx.H.dot(ctx.N));
  double cv = clamp01(ctx.V.dot(ctx.N));
  double cl = clamp01(ctx.L.dot(ctx.N));
  double T = 2.0 * ch * cv / Q;
  double R = 2.0 * ch * cl / Q;
  return std::min(1.0, std::min(T, R));
}

// Diffuse shading factor without albedo: s = max(0, L.N) * Pi. The Lambertian
// intensity is k_d * s and the albedo update divides by it.
inline double diffuse_shading(const ShadingContext& ctx) {
  return clamp01(ctx.L.dot(ctx.N)) * ctx.Pi;
}

// Specular term without its weight: q = Pi * G * D * F / (4 (V.N)(L.N)), zero
// below the grazing guard. The full specular contribution is k_s * q.
inline double specular_term(const ShadingContext& ctx) {
  double cv = clamp01(ctx.V.dot(ctx.N));
  double cl = clamp01(ctx.L.dot(ctx.N));
  if (cv <= kCosEpsilon || cl <= kCosEpsilon || !ctx.half_valid) return 0.0;
  double g = geometric_G(ctx);
  if (g <= 0.0) return 0.0;
  double d = beckmann_D(ctx);
  double f = fresnel_F(ctx);
  return ctx.Pi * g * d * f / (4.0 * cv * cl);
}

inline double eval_lambertian(const ShadingContext& ctx, int channel) {
  return ctx.material.k_d[channel] * diffuse_shading(ctx);
}

inline double eval_cook_torrance(const ShadingContext& ctx, int channel) {
  return eval_lambertian(ctx, channel) + ctx.material.k_s * specular_term(ctx);
}

}  // namespace pstereo
