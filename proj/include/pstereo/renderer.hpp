#pragma once

// Forward synthesis: evaluate the Cook-Torrance model on a known depth grid
// to produce the input images. This is the oracle every round-trip test is
// built on, so the discretization here (central differences for the depth
// gradient, one-sided at mask edges) deliberately matches the reconstruction
// side. Also provides the closed-form test surfaces with analytic normals.

#include <cmath>
#include <string>
#include <vector>

#include "pstereo/core.hpp"
#include "pstereo/geometry.hpp"
#include "pstereo/parallel.hpp"
#include "pstereo/reflectance.hpp"

namespace pstereo {

struct Scene {
  ImageGrid depth;  // 1 channel, scene units, > 0 on mask
  CameraIntrinsics camera;
  MaterialParams material;
  LightSet lights;
  PixelMask mask;     // foreground
  int channels = 1;   // rendered channels (1 uses k_d[0], 3 uses all)

  void validate() const {
    if (depth.empty() || depth.channels() != 1)
      throw DimensionError("Scene: depth must be a nonempty 1-channel grid");
    if (mask.width() != depth.width() || mask.height() != depth.height())
      throw DimensionError("Scene: mask/depth dimensions differ");
    if (channels != 1 && channels != 3) throw DimensionError("Scene: channels must be 1 or 3");
    camera.validate();
    material.validate();
    if (lights.empty()) throw TooFewLights("Scene: no lights");
    for (int y = 0; y < depth.height(); ++y)
      for (int x = 0; x < depth.width(); ++x)
        if (mask.at(x, y) && !(depth.at(x, y) > 0.0))
          throw InvalidImage("Scene: depth must be positive on the mask");
  }
};

// Metric-coordinate depth gradients on the pixel grid: central differences
// where both neighbors are inside the mask, one-sided where only one is,
// zero where isolated. Output grids are zero outside the mask.
inline std::pair<ImageGrid, ImageGrid> depth_gradients(const ImageGrid& depth,
                                                       const PixelMask& mask,
                                                       const CameraIntrinsics& camera) {
  const int W = depth.width(), H = depth.height();
  ImageGrid gx(W, H, 1), gy(W, H, 1);
  const double hx = camera.pitch_x(), hy = camera.pitch_y();
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (!mask.at(x, y)) continue;
      const bool xm = mask.contains(x - 1, y), xp = mask.contains(x + 1, y);
      if (xm && xp)
        gx.at(x, y) = (depth.at(x + 1, y) - depth.at(x - 1, y)) / (2.0 * hx);
      else if (xp)
        gx.at(x, y) = (depth.at(x + 1, y) - depth.at(x, y)) / hx;
      else if (xm)
        gx.at(x, y) = (depth.at(x, y) - depth.at(x - 1, y)) / hx;
      const bool ym = mask.contains(x, y - 1), yp = mask.contains(x, y + 1);
      if (ym && yp)
        gy.at(x, y) = (depth.at(x, y + 1) - depth.at(x, y - 1)) / (2.0 * hy);
      else if (yp)
        gy.at(x, y) = (depth.at(x, y + 1) - depth.at(x, y)) / hy;
      else if (ym)
        gy.at(x, y) = (depth.at(x, y) - depth.at(x, y - 1)) / hy;
    }
  return {gx, gy};
}

// Renders the image for one light. Masked-out pixels are 0; intensities are
// clipped to [0,1] (sensor saturation); no cast shadows, attached shadows
// fall out of the max(0, L.N) clamp.
inline ImageGrid render_image(const Scene& scene, int light_index, int threads = 1) {
  scene.validate();
  if (light_index < 0 || light_index >= static_cast<int>(scene.lights.size()))
    throw DimensionError("render_image: light index out of range");
  const auto [gx, gy] = depth_gradients(scene.depth, scene.mask, scene.camera);
  const int W = scene.depth.width(), H = scene.depth.height();
  ImageGrid img(W, H, scene.channels);
  const LightSpec& light = scene.lights[light_index];
  parallel_for_rows(H, threads, [&](int y) {
    for (int x = 0; x < W; ++x) {
      if (!scene.mask.at(x, y)) continue;
      const Vec3 coords = pixel_to_image_coords(x, y, scene.camera);
      const double z = scene.depth.at(x, y);
      const Vec3 N = unit_normal_from_gradient(coords.x(), coords.y(), z,
                                               gx.at(x, y), gy.at(x, y), scene.camera.f);
      const Vec3 S = surface_point(coords.x(), coords.y(), z, scene.camera.f);
      const auto [L, Pi] = light_vector(light, S);
      const ShadingContext ctx = make_context(N, shading_view(S), L, Pi, scene.material);
      for (int c = 0; c < scene.channels; ++c)
        img.at(x, y, c) = clamp01(eval_cook_torrance(ctx, c));
    }
  });
  return img;
}

// One image per light.
inline std::vector<ImageGrid> render_dataset(const Scene& scene, int threads = 1) {
  if (scene.lights.size() < 3) throw TooFewLights("render_dataset: needs at least 3 lights");
  std::vector<ImageGrid> images;
  images.reserve(scene.lights.size());
  for (std::size_t i = 0; i < scene.lights.size(); ++i)
    images.push_back(render_image(scene, static_cast<int>(i), threads));
  return images;
}

// ---------------------------------------------------------------------------
// Closed-form test surfaces. Depth and gradients are analytic in metric image
// coordinates; normals come from the gradient-to-normal map, normalized.
// ---------------------------------------------------------------------------

struct SurfaceParams {
  double z0 = 1.5;        // base plane distance
  double amplitude = 0.3; // bump height (gauss_bump)
  double sigma = 0.2;     // bump width, metric units (gauss_bump)
  double radius = 2.0;    // sphere radius (sphere)
  double slope_x = 0.1;   // plane/ramp slopes
  double slope_y = 0.05;
};

struct AnalyticSurface {
  ImageGrid depth;
  ImageGrid normals;  // 3 channels, unit vectors
  ImageGrid gx, gy;   // analytic metric gradients
  CameraIntrinsics camera;
};

inline AnalyticSurface analytic_surfaces(const std::string& name, int size,
                                         const SurfaceParams& params = {},
                                         const CameraIntrinsics* camera = nullptr) {
  if (size < 16) throw DimensionError("analytic_surfaces: size must be >= 16");
  AnalyticSurface out;
  out.camera = camera ? *camera : CameraIntrinsics::defaults(size, size);
  out.camera.validate();
  out.depth = ImageGrid(size, size, 1);
  out.normals = ImageGrid(size, size, 3);
  out.gx = ImageGrid(size, size, 1);
  out.gy = ImageGrid(size, size, 1);

  enum class Kind { Plane, Ramp, Sphere, GaussBump } kind;
  if (name == "plane")
    kind = Kind::Plane;
  else if (name == "ramp")
    kind = Kind::Ramp;
  else if (name == "sphere")
    kind = Kind::Sphere;
  else if (name == "gauss_bump")
    kind = Kind::GaussBump;
  else
    throw ConfigError("analytic_surfaces: unknown surface '" + name + "'");

  for (int py = 0; py < size; ++py)
    for (int px = 0; px < size; ++px) {
      const Vec3 coords = pixel_to_image_coords(px, py, out.camera);
      const double x = coords.x(), y = coords.y();
      double z, zx, zy;
      switch (kind) {
        case Kind::Plane:
          z = params.z0 + params.slope_x * x + params.slope_y * y;
          zx = params.slope_x;
          zy = params.slope_y;
          break;
        case Kind::Ramp:
          z = params.z0 + params.slope_x * x;
          zx = params.slope_x;
          zy = 0.0;
          break;
        case Kind::Sphere: {
          const double r2 = x * x + y * y;
          const double R2 = params.radius * params.radius;
          if (r2 >= R2)
            throw ConfigError("analytic_surfaces: sphere radius too small for the grid");
          const double root = std::sqrt(R2 - r2);
          z = params.z0 - root;
          zx = x / root;
          zy = y / root;
          break;
        }
        case Kind::GaussBump: {
          const double s2 = params.sigma * params.sigma;
          const double e = std::exp(-(x * x + y * y) / (2.0 * s2));
          z = params.z0 - params.amplitude * e;
          zx = params.amplitude * x / s2 * e;
          zy = params.amplitude * y / s2 * e;
          break;
        }
      }
      if (!(z > 0.0))
        throw ConfigError("analytic_surfaces: parameters give non-positive depth");
      out.depth.at(px, py) = z;
      out.gx.at(px, py) = zx;
      out.gy.at(px, py) = zy;
      const Vec3 n = unit_normal_from_gradient(x, y, z, zx, zy, out.camera.f);
      for (int c = 0; c < 3; ++c) out.normals.at(px, py, c) = n[c];
    }
  return out;
}

}  // namespace pstereo
