#pragma once

// Recurrent refinement loop: solve per-pixel normals, update albedo,
// integrate depth, update roughness, re-solve with the refreshed material,
// and repeat until the mean residual objective stops improving.

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "pstereo/core.hpp"
#include "pstereo/dgmc.hpp"
#include "pstereo/geometry.hpp"
#include "pstereo/integrator.hpp"
#include "pstereo/parallel.hpp"
#include "pstereo/pixel_system.hpp"
#include "pstereo/reflectance.hpp"
#include "pstereo/solver.hpp"

namespace pstereo {

enum class InitChoice { Dgmc, Flat, Lambertian };

struct RonConfig {
  int max_sweeps = 5;
  double sweep_tol = 1e-3;     // relative mean-objective improvement to keep going
  double initial_m = 0.3;
  double initial_kd = 0.5;     // per channel
  double initial_depth = 1.5;  // constant starting plane, metric units
  double f_lambda = 0.04;
  double shadow_tau = 0.02;
  // Pin the specular weight instead of the k_s = 1 - mean(k_d) closure. The
  // closure is the synthetic-data convention; captures with a known k_s (a
  // matte surface with k_s = 0, say) set this.
  std::optional<double> fixed_ks;
  SolverConfig solver;
  InitChoice init = InitChoice::Dgmc;
  double spec_percentile = 95.0;
  int curv_window = 5;
  double curv_sigma = 1.0;
  GmresOptions integrator;
  int threads = 1;

  void validate() const {
    if (max_sweeps < 1) throw ConfigError("RonConfig: max_sweeps must be >= 1");
    if (!(sweep_tol > 0.0)) throw ConfigError("RonConfig: sweep_tol must be positive");
    if (!(initial_m > 0.0)) throw ConfigError("RonConfig: initial_m must be positive");
    if (!(initial_kd >= 0.0 && initial_kd <= 1.0))
      throw ConfigError("RonConfig: initial_kd outside [0,1]");
    if (!(initial_depth > 0.0)) throw ConfigError("RonConfig: initial_depth must be positive");
    if (!(f_lambda >= 0.0 && f_lambda < 1.0))
      throw ConfigError("RonConfig: f_lambda outside [0,1)");
    if (fixed_ks && !(*fixed_ks >= 0.0 && *fixed_ks <= 1.0))
      throw ConfigError("RonConfig: fixed_ks outside [0,1]");
    if (threads < 1) throw ConfigError("RonConfig: threads must be >= 1");
  }
};

struct RonState {
  ImageGrid normals;  // unit normals, 3 channels
  ImageGrid albedo;   // per-channel diffuse albedo
  ImageGrid depth;    // absolute depth, anchored to the initial plane's mean
  ImageGrid grad_x;   // solved metric gradient field z_x
  ImageGrid grad_y;   // z_y
  double m = 0.3;
  double k_s = 0.5;   // follows k_s = 1 - mean(k_d)
  double f_lambda = 0.04;
  int iteration = 0;  // accepted sweeps
  std::vector<double> objective_history;  // mean Psi per sweep, after the re-solve
  PixelMask mask;
  int albedo_flagged = 0;  // pixels whose albedo kept its previous value
  int solve_failures = 0;  // pixels excluded from the last normal pass
};

// Eq-style roughness update: RMS deviation of masked depth around its mean,
// floored at 1e-3.
inline double update_roughness(const ImageGrid& depth, const PixelMask& mask) {
  if (depth.channels() != 1) throw DimensionError("update_roughness: depth must be 1-channel");
  if (mask.width() != depth.width() || mask.height() != depth.height())
    throw DimensionError("update_roughness: mask shape mismatch");
  double mean = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < depth.height(); ++y)
    for (int x = 0; x < depth.width(); ++x)
      if (mask.at(x, y)) {
        mean += depth.at(x, y);
        ++n;
      }
  if (n == 0) throw EmptyDomain("update_roughness: empty mask");
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (int y = 0; y < depth.height(); ++y)
    for (int x = 0; x < depth.width(); ++x)
      if (mask.at(x, y)) {
        const double d = depth.at(x, y) - mean;
        ss += d * d;
      }
  return std::max(1e-3, std::sqrt(ss / static_cast<double>(n)));
}

// Per-channel linear least squares for the diffuse albedo, holding geometry,
// roughness and the specular weight fixed:
//   k_d[c] = sum_h (I_h[c] - k_s q_h) s_h / sum_h s_h^2,
// with s_h the Lambertian shading and q_h the unweighted specular term.
// Pixels with negligible shading signal keep their previous albedo and are
// counted via `flagged`.
inline ImageGrid update_albedo(const std::vector<ImageGrid>& images,
                               const ImageGrid& normals, const LightSet& lights,
                               const CameraIntrinsics& camera, const RonState& state,
                               int* flagged = nullptr) {
  const int W = normals.width(), H = normals.height();
  if (normals.channels() != 3) throw DimensionError("update_albedo: normals must be 3-channel");
  const int C = images.front().channels();
  ImageGrid albedo = state.albedo;
  int local_flagged = 0;

  MaterialParams mat;
  mat.m = state.m;
  mat.f_lambda = state.f_lambda;

  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (!state.mask.at(x, y)) continue;
      const Vec3 N(normals.at(x, y, 0), normals.at(x, y, 1), normals.at(x, y, 2));
      const Vec3 img_pt = pixel_to_image_coords(x, y, camera);
      const Vec3 S = surface_point(img_pt.x(), img_pt.y(), state.depth.at(x, y), camera.f);
      const Vec3 V = shading_view(S);

      double denom = 0.0;
      std::vector<double> s(lights.size()), q(lights.size());
      bool ok = true;
      for (std::size_t h = 0; h < lights.size(); ++h) {
        try {
          auto [L, Pi] = light_vector(lights[h], S);
          ShadingContext ctx = make_context(N, V, L, Pi, mat);
          s[h] = diffuse_shading(ctx);
          q[h] = specular_term(ctx);
        } catch (const Error&) {
          ok = false;
          break;
        }
        denom += s[h] * s[h];
      }
      if (!ok || denom < 1e-12) {
        ++local_flagged;
        continue;
      }
      for (int c = 0; c < C; ++c) {
        double num = 0.0;
        for (std::size_t h = 0; h < lights.size(); ++h)
          num += (images[h].at(x, y, c % images[h].channels()) - state.k_s * q[h]) * s[h];
        const double kd = clamp01(num / denom);
        if (albedo.channels() == 3 && C == 1) {
          albedo.at(x, y, 0) = albedo.at(x, y, 1) = albedo.at(x, y, 2) = kd;
        } else {
          albedo.at(x, y, c) = kd;
        }
      }
    }
  }
  if (flagged) *flagged = local_flagged;
  return albedo;
}

namespace detail {

struct SolvePassStats {
  double mean_psi = 0.0;
  int failures = 0;
};

// One normal pass: per masked pixel, solve the 2-unknown system warm-started
// from the current gradient field, at the pixel's current depth and material.
// Writes the gradient grids in place; the per-pixel objective feeds the mean
// over successfully solved pixels.
inline SolvePassStats solve_pass(RonState& state,
                                 const std::vector<ImageGrid>& mean_images,
                                 const LightSet& lights, const CameraIntrinsics& camera,
                                 const RonConfig& cfg) {
  const int W = state.depth.width(), H = state.depth.height();
  ImageGrid psi(W, H, 1);
  ImageGrid failed(W, H, 1);

  parallel_for_rows(H, cfg.threads, [&](int y) {
    std::vector<double> intensities(lights.size());
    for (int x = 0; x < W; ++x) {
      if (!state.mask.at(x, y)) continue;
      for (std::size_t h = 0; h < lights.size(); ++h)
        intensities[h] = mean_images[h].at(x, y);
      PixelMaterial mat;
      mat.kd = channel_mean(state.albedo, x, y);
      mat.ks = state.k_s;
      mat.m = state.m;
      mat.f_lambda = state.f_lambda;
      try {
        ResidualSystem sys = build_pixel_system(x, y, intensities, lights, camera, mat,
                                                state.depth.at(x, y), cfg.shadow_tau);
        VectorXd x0(2);
        x0 << state.grad_x.at(x, y), state.grad_y.at(x, y);
        SolverReport rep = solve(sys, x0, cfg.solver);
        state.grad_x.at(x, y) = rep.x[0];
        state.grad_y.at(x, y) = rep.x[1];
        psi.at(x, y) = rep.final_objective;
      } catch (const Error&) {
        failed.at(x, y) = 1.0;
      }
    }
  });

  SolvePassStats stats;
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (!state.mask.at(x, y)) continue;
      if (failed.at(x, y) != 0.0) {
        ++stats.failures;
        continue;
      }
      sum += psi.at(x, y);
      ++n;
    }
  if (n == 0) throw EmptySystem("solve_pass: no pixel produced a usable system");
  stats.mean_psi = sum / static_cast<double>(n);
  return stats;
}

// Refresh the unit-normal grid from the gradient field at the current depth.
// Pixels whose depth went non-positive (integration blowups) keep their old
// normal; the next solve pass reports them as failures.
inline void refresh_normals(RonState& state, const CameraIntrinsics& camera) {
  for (int y = 0; y < state.depth.height(); ++y)
    for (int x = 0; x < state.depth.width(); ++x) {
      if (!state.mask.at(x, y) || !(state.depth.at(x, y) > 0.0)) continue;
      const Vec3 img_pt = pixel_to_image_coords(x, y, camera);
      const Vec3 n = unit_normal_from_gradient(img_pt.x(), img_pt.y(),
                                               state.depth.at(x, y),
                                               state.grad_x.at(x, y),
                                               state.grad_y.at(x, y), camera.f);
      state.normals.at(x, y, 0) = n.x();
      state.normals.at(x, y, 1) = n.y();
      state.normals.at(x, y, 2) = n.z();
    }
}

}  // namespace detail

// Full reconstruction loop. Sweep structure: (1) solve normals (seeded on the
// first sweep, warm-started afterwards), (2) update albedo and the k_s
// closure, (3) integrate the gradient field into depth, (4) update roughness,
// (5) re-solve with the refreshed material at the new depth. The per-sweep
// objective is the mean Psi after step 5; a sweep that makes it worse is
// rolled back and the loop stops.
inline RonState run_ron(const std::vector<ImageGrid>& images, const LightSet& lights,
                        const CameraIntrinsics& camera, const RonConfig& cfg,
                        const PixelMask* foreground = nullptr) {
  cfg.validate();
  camera.validate();
  validate_light_set(lights);
  if (images.size() < 3) throw TooFewLights("run_ron: need at least 3 images");
  if (images.size() != lights.size())
    throw DimensionError("run_ron: image/light count mismatch");
  for (const auto& img : images)
    if (!img.same_shape(images.front()))
      throw DimensionError("run_ron: image shapes differ");

  const int W = images.front().width(), H = images.front().height();
  RonState state;
  state.mask = foreground ? *foreground : PixelMask::full(W, H);
  if (state.mask.width() != W || state.mask.height() != H)
    throw DimensionError("run_ron: mask shape mismatch");
  if (state.mask.count() == 0) throw EmptyDomain("run_ron: empty foreground mask");

  state.normals = ImageGrid(W, H, 3);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) state.normals.at(x, y, 2) = 1.0;
  state.albedo = ImageGrid(W, H, 3, cfg.initial_kd);
  state.depth = ImageGrid(W, H, 1, cfg.initial_depth);
  state.grad_x = ImageGrid(W, H, 1);
  state.grad_y = ImageGrid(W, H, 1);
  state.m = cfg.initial_m;
  state.k_s = cfg.fixed_ks ? *cfg.fixed_ks : 1.0 - cfg.initial_kd;
  state.f_lambda = cfg.f_lambda;

  // The solver runs on channel-mean intensities (exact under channel-uniform
  // specular shading when paired with the channel-mean albedo).
  std::vector<ImageGrid> mean_images;
  mean_images.reserve(images.size());
  for (const auto& img : images) mean_images.push_back(channel_mean(img));

  // Seed the gradient field for the first sweep.
  switch (cfg.init) {
    case InitChoice::Flat:
      break;  // zeros already
    case InitChoice::Lambertian: {
      const ImageGrid normals = lambertian_normal_field(mean_images, lights, camera,
                                                        state.mask, cfg.initial_depth);
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          if (!state.mask.at(x, y)) continue;
          const Vec2 g = detail::lambertian_gradient_at(normals, Vec2i(x, y), camera,
                                                        cfg.initial_depth);
          state.grad_x.at(x, y) = g.x();
          state.grad_y.at(x, y) = g.y();
        }
      break;
    }
    case InitChoice::Dgmc: {
      const SeedField field =
          dgmc_seed_field(mean_images, lights, camera, state.mask, cfg.initial_depth,
                          cfg.spec_percentile, cfg.curv_window, cfg.curv_sigma);
      state.grad_x = field.seed_zx;
      state.grad_y = field.seed_zy;
      break;
    }
  }

  const double anchor = cfg.initial_depth;
  RonState accepted = state;

  for (int sweep = 1; sweep <= cfg.max_sweeps; ++sweep) {
    RonState prev = state;

    // Step 1: normal pass at the current depth/material.
    detail::solve_pass(state, mean_images, lights, camera, cfg);
    detail::refresh_normals(state, camera);

    // Step 2: albedo, then the k_s closure.
    state.albedo = update_albedo(images, state.normals, lights, camera, state,
                                 &state.albedo_flagged);
    if (!cfg.fixed_ks) {
      double kd_sum = 0.0;
      std::size_t kd_n = 0;
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          if (state.mask.at(x, y)) {
            kd_sum += channel_mean(state.albedo, x, y);
            ++kd_n;
          }
      state.k_s = clamp01(1.0 - kd_sum / static_cast<double>(kd_n));
    }

    // Step 3: integrate the gradient field; re-anchor to the starting plane.
    IntegrationResult integ =
        integrate_gradients(state.grad_x, state.grad_y, state.mask,
                            camera.pitch_x(), camera.pitch_y(), cfg.integrator);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        state.depth.at(x, y) = state.mask.at(x, y) ? integ.depth.at(x, y) + anchor : 0.0;

    // Step 4: roughness from the new depth.
    state.m = update_roughness(state.depth, state.mask);

    // Step 5: re-solve with the refreshed albedo, roughness and depth.
    detail::SolvePassStats pass5 = detail::solve_pass(state, mean_images, lights, camera, cfg);
    detail::refresh_normals(state, camera);
    state.solve_failures = pass5.failures;

    state.objective_history.push_back(pass5.mean_psi);
    state.iteration = sweep;

    if (sweep > 1) {
      const double prev_psi = state.objective_history[static_cast<std::size_t>(sweep) - 2];
      if (pass5.mean_psi > prev_psi) {
        return prev;  // worse sweep: roll back and stop
      }
      const double rel = prev_psi > 0.0 ? (prev_psi - pass5.mean_psi) / prev_psi : 0.0;
      accepted = state;
      if (rel < cfg.sweep_tol) break;
    } else {
      accepted = state;
      if (pass5.mean_psi == 0.0) break;
    }
  }
  return accepted;
}

}  // namespace pstereo
