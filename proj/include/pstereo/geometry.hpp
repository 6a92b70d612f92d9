#pragma once

// Perspective projection geometry. The scene sits at z > 0 in front of a
// pinhole at the origin; metric image coordinates (x, y) at focal length f
// correspond to the surface point
//
//     S(x, y) = (-x z / f, -y z / f, z).
//
// A depth field z(x, y) has the (unnormalized) surface normal
//
//     N = dS/dx x dS/dy = ((z/f) z_x, (z/f) z_y, (z/f^2)(z_x x + z_y y + z)),
//
// which points into the +z hemisphere for front-facing surfaces (a constant
// depth plane gives (0, 0, z^2/f^2)). Shading uses a view vector in the same
// hemisphere, V_shade = S/|S| (see shading_view); the toward-camera unit
// vector -S/|S| is what viewing_vector returns.

#include <cmath>
#include <utility>

#include "pstereo/core.hpp"

namespace pstereo {

// Surface point for metric image coordinates (x, y) at depth z.
inline Vec3 surface_point(double x, double y, double z, double f) {
  if (!(f > 0.0)) throw DegenerateCamera("surface_point: f must be positive");
  return Vec3(-x * z / f, -y * z / f, z);
}

// Gradient-to-normal map; returns the raw cross product above, caller
// normalizes. All components scale with z, so z = 0 has no usable normal.
inline Vec3 normal_from_gradient(double x, double y, double z, double zx, double zy,
                                 double f) {
  if (!(f > 0.0)) throw DegenerateCamera("normal_from_gradient: f must be positive");
  Vec3 n(z / f * zx, z / f * zy, z / (f * f) * (zx * x + zy * y + z));
  if (n.norm() < 1e-300)
    throw DegenerateNormal("normal_from_gradient: zero-length normal");
  return n;
}

inline Vec3 unit_normal_from_gradient(double x, double y, double z, double zx,
                                      double zy, double f) {
  Vec3 n = normal_from_gradient(x, y, z, zx, zy, f);
  return n / n.norm();
}

// Inverse of the gradient-to-normal map: the (z_x, z_y) whose normal at
// (x, y, z) is parallel to n. Writing the unscaled normal as
// t*(n1, n2, n3) = (z_x, z_y, (z_x x + z_y y + z)/f) and eliminating gives
// t = z / (f n3 - n1 x - n2 y). Grazing normals (vanishing denominator) fall
// back to the flat gradient (0, 0).
inline Vec2 gradient_from_normal(const Vec3& n, double x, double y, double z, double f) {
  double den = f * n.z() - n.x() * x - n.y() * y;
  if (std::abs(den) < 1e-12 * n.norm()) return Vec2(0.0, 0.0);
  double t = z / den;
  return Vec2(t * n.x(), t * n.y());
}

// Pixel indices to metric image coordinates (mu, nu, f).
inline Vec3 pixel_to_image_coords(double px, double py, const CameraIntrinsics& cam) {
  cam.validate();
  return Vec3(cam.f * (px - cam.delta_x) / cam.psi_x,
              cam.f * (py - cam.delta_y) / cam.psi_y, cam.f);
}

// Unit vector from a surface point toward the camera center (the origin).
inline Vec3 viewing_vector(const Vec3& S) {
  double len = S.norm();
  if (len < 1e-300) throw DegenerateView("viewing_vector: surface point at origin");
  return -S / len;
}

inline Vec3 viewing_vector(double x, double y, double z, double f) {
  return viewing_vector(surface_point(x, y, z, f));
}

// View vector of the shading frame: the +z-hemisphere unit vector S/|S|.
// Gradient-map normals of z > 0 surfaces live in that hemisphere, so using
// this vector keeps every shading cosine positive on front-facing geometry
// (the N.V > 0 rule); it is the negated viewing_vector.
inline Vec3 shading_view(const Vec3& S) { return -viewing_vector(S); }

// Resolve a light against a surface point: unit direction from the surface
// toward the source, and the incident intensity (inverse-square attenuated
// for point sources).
inline std::pair<Vec3, double> light_vector(const LightSpec& light, const Vec3& S) {
  if (light.kind == LightKind::Directional) {
    return {light.span_direction(), light.intensity};
  }
  Vec3 d = light.vec - S;
  double r = d.norm();
  if (r < 1e-12) throw SingularLight("light_vector: point source coincides with surface");
  return {d / r, light.intensity / (r * r)};
}

// Replace point lights by the directional approximation an experimenter would
// use when treating the sources as distant: direction and attenuation taken
// at the reference surface point (0, 0, z_ref). Directional lights pass
// through unchanged.
inline LightSet approximate_directional(const LightSet& lights, double z_ref) {
  Vec3 S_ref(0.0, 0.0, z_ref);
  LightSet out;
  out.reserve(lights.size());
  for (const auto& l : lights) {
    if (l.kind == LightKind::Directional) {
      out.push_back(l);
      continue;
    }
    auto [dir, pi] = light_vector(l, S_ref);
    out.push_back(LightSpec::directional(dir, pi));
  }
  return out;
}

}  // namespace pstereo
