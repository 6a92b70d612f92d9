#pragma once

// Per-pixel residual system: with depth frozen at z_est, the unknowns are the
// metric depth gradient X = (z_x, z_y). Each light h contributes
//
//   f_h(X) = I_h - k_d * max(0, L_h.N^) * Pi_h - k_s * q_h(N^),
//
// where N^ is the unit gradient-map normal and q_h the unweighted specular
// term. View vector, light vectors, halfway vectors and the Fresnel factor
// are all fixed by (pixel, z_est, lights), so only N^ varies during a solve.
// The Jacobian is analytic: dN^/dX is the projector (I - N^ N^T)/|N| applied
// to the constant columns dN/dz_x, dN/dz_y, chained through the active
// branches of the clamped shading factors (finite differences are the test
// oracle for this, not the implementation).

#include <cmath>
#include <vector>

#include "pstereo/core.hpp"
#include "pstereo/geometry.hpp"
#include "pstereo/reflectance.hpp"
#include "pstereo/solver.hpp"

namespace pstereo {

// Scalar material as seen by a single-channel pixel solve.
struct PixelMaterial {
  double kd = 0.5;
  double ks = 0.5;
  double m = 0.3;
  double f_lambda = 0.04;
};

namespace detail {

struct PixelLight {
  Vec3 L;            // unit, surface toward source
  double Pi = 1.0;   // attenuated intensity at the surface
  Vec3 H;            // halfway with the shading view vector
  bool half_valid = true;
  double Q = 1.0;    // V.H
  double F = 0.0;    // Fresnel factor (depends on H.V only)
};

struct PixelFrame {
  double mu = 0, nu = 0, z = 1, f = 1;
  Vec3 Vsh;                       // shading view vector
  Vec3 Nx, Ny;                    // dN/dz_x, dN/dz_y (constant)
  std::vector<PixelLight> lights;
  std::vector<double> I;
  PixelMaterial mat;

  Vec3 raw_normal(double zx, double zy) const {
    return Vec3(z / f * zx, z / f * zy, z / (f * f) * (zx * mu + zy * nu + z));
  }

  // Intensity of light h at unit normal n, and its gradient w.r.t. n over the
  // active branches. Mirrors reflectance.hpp's composition exactly.
  double shade(int h, const Vec3& n, Vec3* dI_dn) const {
    const PixelLight& pl = lights[h];
    if (dI_dn) dI_dn->setZero();

    const double cl_raw = pl.L.dot(n);
    const double cv_raw = Vsh.dot(n);
    double I_model = 0.0;
    if (cl_raw > 0.0) {
      I_model += mat.kd * std::min(cl_raw, 1.0) * pl.Pi;
      if (dI_dn && cl_raw < 1.0) *dI_dn += mat.kd * pl.Pi * pl.L;
    }

    const double cv = clamp01(cv_raw);
    const double cl = clamp01(cl_raw);
    if (cv <= kCosEpsilon || cl <= kCosEpsilon || !pl.half_valid || pl.Q <= 0.0)
      return I_model;
    const double ch_raw = pl.H.dot(n);
    if (ch_raw <= 0.0) return I_model;  // back facet: D = 0
    const double ch = std::min(ch_raw, 1.0);

    const double m2 = mat.m * mat.m;
    const double c2 = ch * ch;
    const double D = std::exp(-(1.0 - c2) / (m2 * c2)) / (kPi * m2 * c2 * c2);

    const double T = 2.0 * ch * cv / pl.Q;
    const double R = 2.0 * ch * cl / pl.Q;
    const double G = std::min(1.0, std::min(T, R));
    if (G <= 0.0) return I_model;

    const double denom = 4.0 * cv * cl;
    const double q = pl.Pi * G * D * pl.F / denom;
    I_model += mat.ks * q;

    if (dI_dn) {
      // Clamp derivatives: active only strictly inside (0, 1).
      const Vec3 dch = (ch_raw < 1.0) ? Vec3(pl.H) : Vec3(0, 0, 0);
      const Vec3 dcv = (cv_raw > 0.0 && cv_raw < 1.0) ? Vec3(Vsh) : Vec3(0, 0, 0);
      const Vec3 dcl = (cl_raw > 0.0 && cl_raw < 1.0) ? Vec3(pl.L) : Vec3(0, 0, 0);
      const double dDdc = D * (2.0 / (m2 * c2 * ch) - 4.0 / ch);
      Vec3 dG = Vec3::Zero();
      if (T < 1.0 || R < 1.0) {
        if (T <= R)
          dG = (2.0 / pl.Q) * (cv * dch + ch * dcv);
        else
          dG = (2.0 / pl.Q) * (cl * dch + ch * dcl);
      }
      const Vec3 dnum = (dG * D + G * dDdc * dch) * (cv * cl) -
                        G * D * (dcv * cl + cv * dcl);
      *dI_dn += mat.ks * pl.Pi * pl.F / 4.0 * dnum / (cv * cl * cv * cl);
    }
    return I_model;
  }
};

}  // namespace detail

// Builds the 3-residual, 2-unknown system for one pixel. Light geometry is
// resolved at the frozen depth estimate; intensities are the per-image values
// at the pixel (channel means for RGB inputs, with kd the channel-mean
// albedo).
inline ResidualSystem build_pixel_system(double px, double py,
                                         const std::vector<double>& intensities,
                                         const LightSet& lights,
                                         const CameraIntrinsics& camera,
                                         const PixelMaterial& material, double z_est,
                                         double shadow_tau = 0.02) {
  if (lights.empty()) throw EmptySystem("build_pixel_system: no lights");
  if (intensities.size() != lights.size())
    throw DimensionError("build_pixel_system: intensity/light count mismatch");
  if (!(z_est > 0.0)) throw Error("build_pixel_system: z_est must be positive");
  bool any_lit = false;
  for (double v : intensities) any_lit = any_lit || v >= shadow_tau;
  if (!any_lit) throw EmptySystem("build_pixel_system: all intensities shadowed");

  detail::PixelFrame frame;
  const Vec3 coords = pixel_to_image_coords(px, py, camera);
  frame.mu = coords.x();
  frame.nu = coords.y();
  frame.z = z_est;
  frame.f = camera.f;
  const Vec3 S = surface_point(frame.mu, frame.nu, z_est, camera.f);
  frame.Vsh = shading_view(S);
  frame.Nx = Vec3(z_est / camera.f, 0.0, z_est * frame.mu / (camera.f * camera.f));
  frame.Ny = Vec3(0.0, z_est / camera.f, z_est * frame.nu / (camera.f * camera.f));
  frame.I = intensities;
  frame.mat = material;
  for (const auto& light : lights) {
    detail::PixelLight pl;
    auto [L, Pi] = light_vector(light, S);
    pl.L = L;
    pl.Pi = Pi;
    Vec3 h = L + frame.Vsh;
    const double nh = h.norm();
    pl.half_valid = nh >= 1e-12;
    pl.H = pl.half_valid ? Vec3(h / nh) : Vec3(0, 0, 1);
    pl.Q = frame.Vsh.dot(pl.H);
    const double chv = clamp01(pl.H.dot(frame.Vsh));
    const double b = 1.0 - chv;
    const double b2 = b * b;
    pl.F = material.f_lambda + (1.0 - material.f_lambda) * b2 * b2 * b;
    frame.lights.push_back(pl);
  }

  ResidualSystem sys;
  sys.dim_x = 2;
  sys.dim_f = static_cast<int>(lights.size());
  sys.residual = [frame](const VectorXd& x) {
    const Vec3 N = frame.raw_normal(x[0], x[1]);
    const Vec3 n = N / N.norm();
    VectorXd F(static_cast<int>(frame.lights.size()));
    for (int h = 0; h < F.size(); ++h)
      F[h] = frame.I[h] - frame.shade(h, n, nullptr);
    return F;
  };
  sys.jacobian = [frame](const VectorXd& x) {
    const Vec3 N = frame.raw_normal(x[0], x[1]);
    const double len = N.norm();
    const Vec3 n = N / len;
    // dn/dN = (I - n n^T)/|N|, applied to the constant columns.
    const Eigen::Matrix3d P = (Eigen::Matrix3d::Identity() - n * n.transpose()) / len;
    const Vec3 tx = P * frame.Nx;
    const Vec3 ty = P * frame.Ny;
    MatrixXd J(static_cast<int>(frame.lights.size()), 2);
    for (int h = 0; h < J.rows(); ++h) {
      Vec3 dI_dn;
      frame.shade(h, n, &dI_dn);
      J(h, 0) = -dI_dn.dot(tx);
      J(h, 1) = -dI_dn.dot(ty);
    }
    return J;
  };
  return sys;
}

}  // namespace pstereo
