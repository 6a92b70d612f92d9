#pragma once

// Depth-from-gradient integration: least-squares Poisson formulation with a
// spectral (DCT) initial solve on the bounding rectangle and restarted GMRES
// refinement on the masked domain.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <fftw3.h>

#include "pstereo/core.hpp"

namespace pstereo {

// Right-hand side of the normal equations for the least-squares functional
//   E(z) = sum over mask-interior edges ((z[q] - z[p]) / h - g_edge)^2,
// where g_edge is the average of the per-pixel gradient at the edge
// endpoints. Interior rows reduce to the central difference of the gradient
// field; rows at the mask boundary keep only the fluxes of edges that exist.
// The rhs telescopes to zero over the mask, so the pure-Neumann system is
// always compatible.
inline ImageGrid divergence_rhs(const ImageGrid& gx, const ImageGrid& gy,
                                const PixelMask& mask,
                                double hx = 1.0, double hy = 1.0) {
  if (!gx.same_shape(gy) || gx.channels() != 1)
    throw DimensionError("divergence_rhs: gradient grids must be single-channel, same shape");
  if (mask.width() != gx.width() || mask.height() != gx.height())
    throw DimensionError("divergence_rhs: mask shape mismatch");
  if (!(hx > 0.0) || !(hy > 0.0))
    throw DimensionError("divergence_rhs: pixel spacings must be positive");

  ImageGrid rhs(gx.width(), gx.height(), 1);
  for (int y = 0; y < gx.height(); ++y) {
    for (int x = 0; x < gx.width(); ++x) {
      if (!mask.at(x, y)) continue;
      double acc = 0.0;
      if (mask.contains(x + 1, y)) acc += 0.5 * (gx.at(x, y) + gx.at(x + 1, y)) / hx;
      if (mask.contains(x - 1, y)) acc -= 0.5 * (gx.at(x, y) + gx.at(x - 1, y)) / hx;
      if (mask.contains(x, y + 1)) acc += 0.5 * (gy.at(x, y) + gy.at(x, y + 1)) / hy;
      if (mask.contains(x, y - 1)) acc -= 0.5 * (gy.at(x, y) + gy.at(x, y - 1)) / hy;
      rhs.at(x, y) = acc;
    }
  }
  return rhs;
}

// 5-point Laplacian with homogeneous Neumann boundary realized by dropping
// edges that leave the mask. Symmetric negative semidefinite; constants span
// the null space on each connected component.
inline void masked_laplacian_apply(const ImageGrid& z, const PixelMask& mask,
                                   double hx, double hy, ImageGrid& out) {
  const double wx = 1.0 / (hx * hx);
  const double wy = 1.0 / (hy * hy);
  for (int y = 0; y < z.height(); ++y) {
    for (int x = 0; x < z.width(); ++x) {
      if (!mask.at(x, y)) {
        out.at(x, y) = 0.0;
        continue;
      }
      const double zc = z.at(x, y);
      double acc = 0.0;
      if (mask.contains(x + 1, y)) acc += wx * (z.at(x + 1, y) - zc);
      if (mask.contains(x - 1, y)) acc += wx * (z.at(x - 1, y) - zc);
      if (mask.contains(x, y + 1)) acc += wy * (z.at(x, y + 1) - zc);
      if (mask.contains(x, y - 1)) acc += wy * (z.at(x, y - 1) - zc);
      out.at(x, y) = acc;
    }
  }
}

// Spectral Poisson solve on the full bounding rectangle via the cosine
// transform, which diagonalizes the mirrored-Neumann Laplacian with
// eigenvalues (2 cos(pi i / W) - 2) / hx^2 + (2 cos(pi j / H) - 2) / hy^2.
// The zero mode is projected out, so the returned grid has zero mean.
inline ImageGrid simchony_initial(const ImageGrid& rhs,
                                  double hx = 1.0, double hy = 1.0) {
  if (rhs.channels() != 1)
    throw DimensionError("simchony_initial: rhs must be single-channel");
  if (!(hx > 0.0) || !(hy > 0.0))
    throw DimensionError("simchony_initial: pixel spacings must be positive");
  const int W = rhs.width(), H = rhs.height();
  if (W < 2 || H < 2) throw DimensionError("simchony_initial: grid must be at least 2x2");

  std::vector<double> buf(rhs.data());

  fftw_plan fwd = fftw_plan_r2r_2d(H, W, buf.data(), buf.data(),
                                   FFTW_REDFT10, FFTW_REDFT10, FFTW_ESTIMATE);
  fftw_execute(fwd);
  fftw_destroy_plan(fwd);

  for (int j = 0; j < H; ++j) {
    const double lam_y = (2.0 * std::cos(kPi * j / H) - 2.0) / (hy * hy);
    for (int i = 0; i < W; ++i) {
      const double lam = (2.0 * std::cos(kPi * i / W) - 2.0) / (hx * hx) + lam_y;
      const std::size_t idx = static_cast<std::size_t>(j) * W + i;
      buf[idx] = (i == 0 && j == 0) ? 0.0 : buf[idx] / lam;
    }
  }

  fftw_plan bwd = fftw_plan_r2r_2d(H, W, buf.data(), buf.data(),
                                   FFTW_REDFT01, FFTW_REDFT01, FFTW_ESTIMATE);
  fftw_execute(bwd);
  fftw_destroy_plan(bwd);

  ImageGrid z(W, H, 1);
  const double scale = 1.0 / (4.0 * W * H);
  double mean = 0.0;
  for (std::size_t k = 0; k < buf.size(); ++k) {
    z.data()[k] = buf[k] * scale;
    mean += z.data()[k];
  }
  mean /= static_cast<double>(buf.size());
  for (double& v : z.data()) v -= mean;
  return z;
}

struct PoissonSystem {
  ImageGrid rhs;
  PixelMask mask;
  double hx = 1.0;
  double hy = 1.0;
};

struct GmresOptions {
  double tol = 1e-10;   // relative residual target
  int restart = 50;
  int max_iter = 2000;  // total inner iterations across restarts
};

struct GmresResult {
  ImageGrid z;
  std::vector<double> residuals;  // one entry per inner iteration
  int iterations = 0;
  bool converged = false;
  bool stagnated = false;
};

namespace detail {

// Row-major packing of masked pixels, fixed so results are reproducible.
inline std::vector<int> mask_index(const PixelMask& mask) {
  std::vector<int> idx;
  idx.reserve(mask.count());
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (mask.at(x, y)) idx.push_back(y * mask.width() + x);
  return idx;
}

}  // namespace detail

// Restarted GMRES on the masked Neumann Laplacian, modified Gram-Schmidt with
// Givens rotations. The rhs and iterates are kept mean-free over the mask to
// factor out the constant null space; breakdown or a restart cycle with no
// residual improvement returns the best iterate with the stagnated flag set.
inline GmresResult gmres_refine(const PoissonSystem& sys, const ImageGrid& z0,
                                const GmresOptions& opts = {}) {
  if (sys.rhs.channels() != 1 || !sys.rhs.same_shape(z0))
    throw DimensionError("gmres_refine: rhs and initial depth must be single-channel, same shape");
  if (sys.mask.width() != sys.rhs.width() || sys.mask.height() != sys.rhs.height())
    throw DimensionError("gmres_refine: mask shape mismatch");
  if (opts.restart < 1 || opts.max_iter < 1 || !(opts.tol > 0.0))
    throw ConfigError("gmres_refine: restart, max_iter and tol must be positive");

  const std::vector<int> idx = detail::mask_index(sys.mask);
  const auto n = static_cast<Eigen::Index>(idx.size());
  GmresResult res;
  res.z = ImageGrid(sys.rhs.width(), sys.rhs.height(), 1);
  if (n == 0) throw EmptyDomain("gmres_refine: mask has no pixels");

  Eigen::VectorXd b(n), x(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto pix = static_cast<std::size_t>(idx[static_cast<std::size_t>(k)]);
    b[k] = sys.rhs.data()[pix];
    x[k] = z0.data()[pix];
  }
  // Project onto the range of the operator (remove the mean) and pin the
  // gauge of the iterate the same way. Constants are in the null space, so
  // this never changes residuals.
  b.array() -= b.mean();
  x.array() -= x.mean();

  ImageGrid scratch_in(sys.rhs.width(), sys.rhs.height(), 1);
  ImageGrid scratch_out(sys.rhs.width(), sys.rhs.height(), 1);
  auto apply = [&](const Eigen::VectorXd& v) {
    std::fill(scratch_in.data().begin(), scratch_in.data().end(), 0.0);
    for (Eigen::Index k = 0; k < n; ++k)
      scratch_in.data()[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])] = v[k];
    masked_laplacian_apply(scratch_in, sys.mask, sys.hx, sys.hy, scratch_out);
    Eigen::VectorXd out(n);
    for (Eigen::Index k = 0; k < n; ++k)
      out[k] = scratch_out.data()[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])];
    return out;
  };

  auto unpack = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd w = v;
    w.array() -= w.mean();
    std::fill(res.z.data().begin(), res.z.data().end(), 0.0);
    for (Eigen::Index k = 0; k < n; ++k)
      res.z.data()[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])] = w[k];
  };

  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    x.setZero();
    unpack(x);
    res.converged = true;
    return res;
  }

  const int m = opts.restart;
  Eigen::MatrixXd V(n, m + 1);
  Eigen::MatrixXd Hs(m + 1, m);
  Eigen::VectorXd g(m + 1), cs(m), sn(m);

  double best_res = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_x = x;
  double prev_cycle_res = std::numeric_limits<double>::infinity();
  bool done = false;

  while (!done) {
    Eigen::VectorXd r = b - apply(x);
    double beta = r.norm();
    if (beta < best_res) {
      best_res = beta;
      best_x = x;
    }
    if (beta / bnorm <= opts.tol) {
      res.converged = true;
      break;
    }
    if (res.iterations >= opts.max_iter) break;

    V.col(0) = r / beta;
    g.setZero();
    g[0] = beta;
    Hs.setZero();

    int j = 0;
    bool breakdown = false;
    for (; j < m; ++j) {
      Eigen::VectorXd w = apply(V.col(j));
      for (int i = 0; i <= j; ++i) {
        Hs(i, j) = V.col(i).dot(w);
        w -= Hs(i, j) * V.col(i);
      }
      Hs(j + 1, j) = w.norm();
      if (Hs(j + 1, j) > 1e-14 * beta) {
        V.col(j + 1) = w / Hs(j + 1, j);
      } else {
        breakdown = true;  // invariant subspace reached; solve and leave
      }
      for (int i = 0; i < j; ++i) {
        const double t = cs[i] * Hs(i, j) + sn[i] * Hs(i + 1, j);
        Hs(i + 1, j) = -sn[i] * Hs(i, j) + cs[i] * Hs(i + 1, j);
        Hs(i, j) = t;
      }
      const double denom = std::hypot(Hs(j, j), Hs(j + 1, j));
      if (denom == 0.0) {
        cs[j] = 1.0;
        sn[j] = 0.0;
      } else {
        cs[j] = Hs(j, j) / denom;
        sn[j] = Hs(j + 1, j) / denom;
      }
      Hs(j, j) = cs[j] * Hs(j, j) + sn[j] * Hs(j + 1, j);
      Hs(j + 1, j) = 0.0;
      g[j + 1] = -sn[j] * g[j];
      g[j] = cs[j] * g[j];

      ++res.iterations;
      res.residuals.push_back(std::abs(g[j + 1]));
      if (std::abs(g[j + 1]) / bnorm <= opts.tol || res.iterations >= opts.max_iter ||
          breakdown) {
        ++j;
        break;
      }
    }

    if (j > 0) {
      Eigen::VectorXd y =
          Hs.topLeftCorner(j, j).triangularView<Eigen::Upper>().solve(g.head(j));
      x += V.leftCols(j) * y;
      x.array() -= x.mean();
    }

    Eigen::VectorXd rnew = b - apply(x);
    const double cycle_res = rnew.norm();
    if (cycle_res < best_res) {
      best_res = cycle_res;
      best_x = x;
    }
    if (cycle_res / bnorm <= opts.tol) {
      res.converged = true;
      done = true;
    } else if (res.iterations >= opts.max_iter) {
      done = true;
    } else if (breakdown || cycle_res >= prev_cycle_res * (1.0 - 1e-14)) {
      res.stagnated = true;
      done = true;
    }
    prev_cycle_res = cycle_res;
  }

  unpack(best_x);
  return res;
}

struct IntegrationResult {
  ImageGrid depth;        // zero mean over the mask, zero outside it
  GmresResult gmres;
  int grazing_count = 0;  // pixels whose normal had to be clamped
};

// Shared integration path: build the least-squares rhs, take the spectral
// solution on the bounding rectangle as the starting point, then refine on
// the masked domain with GMRES.
inline IntegrationResult integrate_gradients(const ImageGrid& gx, const ImageGrid& gy,
                                             const PixelMask& mask,
                                             double hx = 1.0, double hy = 1.0,
                                             const GmresOptions& opts = {}) {
  IntegrationResult out;
  ImageGrid rhs = divergence_rhs(gx, gy, mask, hx, hy);
  ImageGrid z0 = simchony_initial(rhs, hx, hy);
  out.gmres = gmres_refine(PoissonSystem{std::move(rhs), mask, hx, hy}, z0, opts);
  out.depth = out.gmres.z;
  return out;
}

// Integration entry point for a normal map in the orthographic reading
// n = (-z_x, -z_y, 1)/|.|. Normals too close to grazing (n_z <= 1e-6) get
// n_z clamped before the division and are counted in grazing_count.
inline IntegrationResult integrate_normals(const ImageGrid& normals,
                                           const PixelMask& mask,
                                           double hx = 1.0, double hy = 1.0,
                                           const GmresOptions& opts = {}) {
  if (normals.channels() != 3)
    throw DimensionError("integrate_normals: normal map must have 3 channels");
  if (mask.width() != normals.width() || mask.height() != normals.height())
    throw DimensionError("integrate_normals: mask shape mismatch");

  constexpr double kGrazingFloor = 1e-6;
  ImageGrid gx(normals.width(), normals.height(), 1);
  ImageGrid gy(normals.width(), normals.height(), 1);
  int grazing = 0;
  for (int y = 0; y < normals.height(); ++y) {
    for (int x = 0; x < normals.width(); ++x) {
      if (!mask.at(x, y)) continue;
      const double nx = normals.at(x, y, 0);
      const double ny = normals.at(x, y, 1);
      double nz = normals.at(x, y, 2);
      if (nz <= kGrazingFloor) {
        nz = kGrazingFloor;
        ++grazing;
      }
      gx.at(x, y) = -nx / nz;
      gy.at(x, y) = -ny / nz;
    }
  }
  IntegrationResult out = integrate_gradients(gx, gy, mask, hx, hy, opts);
  out.grazing_count = grazing;
  return out;
}

}  // namespace pstereo
