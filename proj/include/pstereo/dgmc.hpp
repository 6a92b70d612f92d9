#pragma once

// Highlight seeding: detect specular pixels, walk the outer highlight
// boundary in shortest-path order, and copy the Lambertian gradient estimate
// from the first boundary pixel whose local curvature matches.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <queue>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pstereo/core.hpp"
#include "pstereo/geometry.hpp"

namespace pstereo {

struct CurvatureDescriptor {
  double gc = 0.0;  // k1 * k2
  double mc = 0.0;  // (k1 + k2) / 2
  double k1 = 0.0;  // smaller Hessian eigenvalue
  double k2 = 0.0;  // larger Hessian eigenvalue
};

struct HighlightRegion {
  PixelMask specular_mask;
  std::vector<Vec2i> boundary;  // outer ring, row-major construction order
};

// Per-pixel scalar used by the detector: channel mean, maximized over the
// image stack.
inline ImageGrid max_intensity(const std::vector<ImageGrid>& images) {
  if (images.empty()) throw InvalidImage("max_intensity: no images");
  ImageGrid out(images.front().width(), images.front().height(), 1);
  for (const ImageGrid& img : images) {
    if (img.width() != out.width() || img.height() != out.height())
      throw DimensionError("max_intensity: image shapes differ");
    for (int y = 0; y < out.height(); ++y)
      for (int x = 0; x < out.width(); ++x)
        out.at(x, y) = std::max(out.at(x, y), channel_mean(img, x, y));
  }
  return out;
}

// Flag pixels whose max-over-images intensity strictly exceeds the
// nearest-rank percentile of the foreground intensities. A constant image
// has nothing strictly above the threshold, hence an empty mask.
inline PixelMask detect_specular_mask(const std::vector<ImageGrid>& images,
                                      const PixelMask& foreground,
                                      double tau_spec = 95.0) {
  if (!(tau_spec > 0.0) || !(tau_spec <= 100.0))
    throw ConfigError("detect_specular_mask: percentile must lie in (0, 100]");
  ImageGrid intensity = max_intensity(images);
  if (foreground.width() != intensity.width() || foreground.height() != intensity.height())
    throw DimensionError("detect_specular_mask: mask shape mismatch");

  std::vector<double> vals;
  vals.reserve(foreground.count());
  for (int y = 0; y < intensity.height(); ++y)
    for (int x = 0; x < intensity.width(); ++x)
      if (foreground.at(x, y)) vals.push_back(intensity.at(x, y));

  PixelMask mask(intensity.width(), intensity.height());
  if (vals.empty()) return mask;

  std::sort(vals.begin(), vals.end());
  const auto n = vals.size();
  auto rank = static_cast<std::size_t>(std::ceil(tau_spec / 100.0 * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  const double threshold = vals[rank - 1];

  for (int y = 0; y < intensity.height(); ++y)
    for (int x = 0; x < intensity.width(); ++x)
      if (foreground.at(x, y) && intensity.at(x, y) > threshold) mask.set(x, y, true);
  return mask;
}

// Outer ring: foreground pixels outside the specular mask that touch it
// 8-adjacently. Row-major order so downstream tie rules are reproducible.
inline HighlightRegion extract_boundary(const PixelMask& specular,
                                        const PixelMask& foreground) {
  if (!specular.same_shape(foreground))
    throw DimensionError("extract_boundary: mask shape mismatch");
  if (specular.count() == 0) throw EmptyDomain("extract_boundary: specular mask is empty");

  HighlightRegion region;
  region.specular_mask = specular;
  for (int y = 0; y < specular.height(); ++y) {
    for (int x = 0; x < specular.width(); ++x) {
      if (specular.at(x, y) || !foreground.at(x, y)) continue;
      bool touches = false;
      for (int dy = -1; dy <= 1 && !touches; ++dy)
        for (int dx = -1; dx <= 1 && !touches; ++dx) {
          if (dx == 0 && dy == 0) continue;
          if (specular.contains(x + dx, y + dy)) touches = true;
        }
      if (touches) region.boundary.emplace_back(x, y);
    }
  }
  if (region.boundary.empty())
    throw NoBoundary("extract_boundary: specular mask has no outer ring");
  return region;
}

namespace detail {

// Grid path length a + b*sqrt(2) tracked as integer step counts; the
// comparison scalar is recomputed from the counts, so an independent
// implementation summing the same counts reproduces it bit for bit.
struct GridDist {
  int axis = -1;
  int diag = -1;
  bool reached() const { return axis >= 0; }
  double value() const {
    return static_cast<double>(axis) + static_cast<double>(diag) * std::sqrt(2.0);
  }
};

}  // namespace detail

// Boundary pixels ordered by 8-connected shortest-path distance from p, the
// path running over specular and boundary pixels only (axis steps cost 1,
// diagonal steps sqrt(2)). Ties resolve by row-major pixel index. If any
// boundary pixel is unreachable, the whole ordering falls back to Euclidean
// distance from p.
inline std::vector<Vec2i> dijkstra_nearest(const Vec2i& p, const HighlightRegion& region) {
  if (region.boundary.empty()) throw NoBoundary("dijkstra_nearest: region has no boundary");
  const PixelMask& spec = region.specular_mask;
  const int W = spec.width(), H = spec.height();
  if (!spec.contains(p.x(), p.y()))
    throw Error("dijkstra_nearest: p is not a specular pixel");

  std::vector<std::uint8_t> walkable(static_cast<std::size_t>(W) * H, 0);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      if (spec.at(x, y)) walkable[static_cast<std::size_t>(y) * W + x] = 1;
  for (const Vec2i& b : region.boundary)
    walkable[static_cast<std::size_t>(b.y()) * W + b.x()] = 1;

  std::vector<detail::GridDist> dist(static_cast<std::size_t>(W) * H);
  using QueueItem = std::pair<double, int>;  // (distance value, row-major index)
  std::priority_queue<QueueItem, std::vector<QueueItem>, std::greater<>> pq;

  const int start = p.y() * W + p.x();
  dist[static_cast<std::size_t>(start)] = {0, 0};
  pq.emplace(0.0, start);
  while (!pq.empty()) {
    auto [d, idx] = pq.top();
    pq.pop();
    const detail::GridDist cur = dist[static_cast<std::size_t>(idx)];
    if (!cur.reached() || d > cur.value()) continue;
    const int cx = idx % W, cy = idx / W;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        const int nx = cx + dx, ny = cy + dy;
        if (nx < 0 || ny < 0 || nx >= W || ny >= H) continue;
        const std::size_t nidx = static_cast<std::size_t>(ny) * W + nx;
        if (!walkable[nidx]) continue;
        detail::GridDist cand = cur;
        if (dx != 0 && dy != 0)
          ++cand.diag;
        else
          ++cand.axis;
        if (!dist[nidx].reached() || cand.value() < dist[nidx].value()) {
          dist[nidx] = cand;
          pq.emplace(cand.value(), static_cast<int>(nidx));
        }
      }
    }
  }

  bool all_reached = true;
  for (const Vec2i& b : region.boundary)
    if (!dist[static_cast<std::size_t>(b.y()) * W + b.x()].reached()) {
      all_reached = false;
      break;
    }

  std::vector<std::pair<double, int>> order;
  order.reserve(region.boundary.size());
  for (const Vec2i& b : region.boundary) {
    const int idx = b.y() * W + b.x();
    double d;
    if (all_reached) {
      d = dist[static_cast<std::size_t>(idx)].value();
    } else {
      const double ex = b.x() - p.x();
      const double ey = b.y() - p.y();
      d = std::sqrt(ex * ex + ey * ey);
    }
    order.emplace_back(d, idx);
  }
  std::sort(order.begin(), order.end());

  std::vector<Vec2i> out;
  out.reserve(order.size());
  for (const auto& [d, idx] : order) out.emplace_back(idx % W, idx / W);
  return out;
}

// Separable Gaussian blur with half-sample mirror padding; kernel radius
// 3*sigma, normalized.
inline ImageGrid gaussian_blur(const ImageGrid& img, double sigma) {
  if (img.channels() != 1) throw DimensionError("gaussian_blur: expected single-channel grid");
  if (!(sigma > 0.0)) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    const double v = std::exp(-0.5 * (k * k) / (sigma * sigma));
    kernel[static_cast<std::size_t>(k + radius)] = v;
    sum += v;
  }
  for (double& v : kernel) v /= sum;

  auto mirror = [](int i, int n) {
    while (i < 0 || i >= n) {
      if (i < 0) i = -i - 1;
      if (i >= n) i = 2 * n - i - 1;
    }
    return i;
  };

  ImageGrid tmp(img.width(), img.height(), 1);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k)
        acc += kernel[static_cast<std::size_t>(k + radius)] * img.at(mirror(x + k, img.width()), y);
      tmp.at(x, y) = acc;
    }
  ImageGrid out(img.width(), img.height(), 1);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k)
        acc += kernel[static_cast<std::size_t>(k + radius)] * tmp.at(x, mirror(y + k, img.height()));
      out.at(x, y) = acc;
    }
  return out;
}

// Reference image for curvature: channel-mean averaged over the stack, then
// blurred.
inline ImageGrid curvature_reference(const std::vector<ImageGrid>& images,
                                     double sigma = 1.0) {
  if (images.empty()) throw InvalidImage("curvature_reference: no images");
  ImageGrid mean(images.front().width(), images.front().height(), 1);
  for (const ImageGrid& img : images) {
    if (img.width() != mean.width() || img.height() != mean.height())
      throw DimensionError("curvature_reference: image shapes differ");
    for (int y = 0; y < mean.height(); ++y)
      for (int x = 0; x < mean.width(); ++x)
        mean.at(x, y) += channel_mean(img, x, y) / static_cast<double>(images.size());
  }
  return gaussian_blur(mean, sigma);
}

// Local intensity Hessian from a least-squares quadratic fit over the
// centered window (the window-wide generalization of central second
// differences; both are exact on quadratics). Eigenvalues are signed and
// sorted; gc and mc are formed from them directly so the advertised
// identities hold exactly.
inline CurvatureDescriptor curvature_descriptor(const Vec2i& pixel,
                                                const ImageGrid& ref_image,
                                                int window = 5) {
  if (ref_image.channels() != 1)
    throw DimensionError("curvature_descriptor: reference image must be single-channel");
  if (window < 3 || window % 2 == 0)
    throw ConfigError("curvature_descriptor: window must be odd and >= 3");
  const int r = window / 2;
  if (pixel.x() - r < 0 || pixel.y() - r < 0 || pixel.x() + r >= ref_image.width() ||
      pixel.y() + r >= ref_image.height())
    throw BorderError("curvature_descriptor: window leaves the image");

  const int n = window * window;
  Eigen::MatrixXd A(n, 6);
  Eigen::VectorXd b(n);
  int row = 0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx, ++row) {
      const double fx = dx, fy = dy;
      A(row, 0) = 1.0;
      A(row, 1) = fx;
      A(row, 2) = fy;
      A(row, 3) = fx * fx;
      A(row, 4) = fx * fy;
      A(row, 5) = fy * fy;
      b(row) = ref_image.at(pixel.x() + dx, pixel.y() + dy);
    }
  }
  const Eigen::VectorXd coef = A.colPivHouseholderQr().solve(b);
  const double hxx = 2.0 * coef(3);
  const double hyy = 2.0 * coef(5);
  const double hxy = coef(4);

  const double half_tr = 0.5 * (hxx + hyy);
  const double disc = std::sqrt(0.25 * (hxx - hyy) * (hxx - hyy) + hxy * hxy);
  CurvatureDescriptor d;
  d.k1 = half_tr - disc;
  d.k2 = half_tr + disc;
  d.gc = d.k1 * d.k2;
  d.mc = 0.5 * (d.k1 + d.k2);
  return d;
}

// Classical three-light Lambertian inversion on channel-mean intensities.
// Point lights are evaluated at depth z_est. Rows of the per-pixel system
// are Pi_h * L_h; singular or unmasked pixels fall back to (0,0,1).
inline ImageGrid lambertian_normal_field(const std::vector<ImageGrid>& images,
                                         const LightSet& lights,
                                         const CameraIntrinsics& camera,
                                         const PixelMask& mask, double z_est) {
  if (images.size() < 3 || lights.size() < 3)
    throw TooFewLights("lambertian_normal_field: need >= 3 images and lights");
  if (!(z_est > 0.0)) throw Error("lambertian_normal_field: depth estimate must be positive");
  const int W = images.front().width(), H = images.front().height();
  ImageGrid normals(W, H, 3);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) normals.at(x, y, 2) = 1.0;

  Eigen::Matrix3d M;
  Eigen::Vector3d rhs;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (!mask.at(x, y)) continue;
      const Vec3 img_pt = pixel_to_image_coords(x, y, camera);
      const Vec3 S = surface_point(img_pt.x(), img_pt.y(), z_est, camera.f);
      for (int h = 0; h < 3; ++h) {
        auto [dir, pi] = light_vector(lights[static_cast<std::size_t>(h)], S);
        M.row(h) = (pi * dir).transpose();
        rhs(h) = channel_mean(images[static_cast<std::size_t>(h)], x, y);
      }
      Eigen::FullPivLU<Eigen::Matrix3d> lu(M);
      if (!lu.isInvertible()) continue;
      Vec3 nvec = lu.solve(rhs);
      const double len = nvec.norm();
      if (!(len > 1e-12) || !nvec.allFinite()) continue;
      nvec /= len;
      if (nvec.z() < 0.0) nvec = -nvec;
      normals.at(x, y, 0) = nvec.x();
      normals.at(x, y, 1) = nvec.y();
      normals.at(x, y, 2) = nvec.z();
    }
  }
  return normals;
}

struct SeedResult {
  Vec2 gradient = Vec2::Zero();
  Vec2i source = Vec2i(-1, -1);  // boundary pixel the seed came from
  bool no_match = false;
};

namespace detail {

inline Vec2 lambertian_gradient_at(const ImageGrid& normals, const Vec2i& q,
                                   const CameraIntrinsics& camera, double z_est) {
  const Vec3 n(normals.at(q.x(), q.y(), 0), normals.at(q.x(), q.y(), 1),
               normals.at(q.x(), q.y(), 2));
  const Vec3 img_pt = pixel_to_image_coords(q.x(), q.y(), camera);
  return gradient_from_normal(n, img_pt.x(), img_pt.y(), z_est, camera.f);
}

inline bool curvature_close(double ref, double cand) {
  const double tol = (std::abs(ref) < 1e-6) ? 1e-6 : 0.05 * std::abs(ref);
  return std::abs(cand - ref) <= tol;
}

}  // namespace detail

// Walk boundary candidates in shortest-path order and adopt the Lambertian
// gradient of the first one whose Gaussian and mean curvature both sit
// within 5% of p's (absolute floor 1e-6 near zero). Candidates whose
// descriptor window leaves the image are skipped; if nothing qualifies the
// nearest boundary pixel is used and the result flagged.
inline SeedResult dgmc_seed(const Vec2i& pixel_p, const HighlightRegion& region,
                            const ImageGrid& ref_image,
                            const ImageGrid& lambertian_normals,
                            const CameraIntrinsics& camera, double z_est,
                            int window = 5) {
  const std::vector<Vec2i> order = dijkstra_nearest(pixel_p, region);

  SeedResult fallback;
  fallback.source = order.front();
  fallback.gradient =
      detail::lambertian_gradient_at(lambertian_normals, order.front(), camera, z_est);
  fallback.no_match = true;

  CurvatureDescriptor dp;
  try {
    dp = curvature_descriptor(pixel_p, ref_image, window);
  } catch (const BorderError&) {
    return fallback;
  }

  for (const Vec2i& q : order) {
    CurvatureDescriptor dq;
    try {
      dq = curvature_descriptor(q, ref_image, window);
    } catch (const BorderError&) {
      continue;
    }
    if (detail::curvature_close(dp.gc, dq.gc) && detail::curvature_close(dp.mc, dq.mc)) {
      SeedResult res;
      res.source = q;
      res.gradient =
          detail::lambertian_gradient_at(lambertian_normals, q, camera, z_est);
      return res;
    }
  }
  return fallback;
}

struct SeedField {
  ImageGrid seed_zx;  // one grid per gradient component (grids hold 1 or 3 channels)
  ImageGrid seed_zy;
  PixelMask specular;
  int no_match_count = 0;
};

// Full-frame seeding: Lambertian gradients everywhere, DGMC substitution on
// detected specular pixels. When the specular mask is empty or has no usable
// ring the Lambertian field is returned untouched.
inline SeedField dgmc_seed_field(const std::vector<ImageGrid>& images,
                                 const LightSet& lights,
                                 const CameraIntrinsics& camera,
                                 const PixelMask& foreground, double z_est,
                                 double tau_spec = 95.0, int window = 5,
                                 double sigma = 1.0) {
  const int W = images.front().width(), H = images.front().height();
  SeedField field;
  field.seed_zx = ImageGrid(W, H, 1);
  field.seed_zy = ImageGrid(W, H, 1);
  field.specular = detect_specular_mask(images, foreground, tau_spec);

  const ImageGrid normals = lambertian_normal_field(images, lights, camera, foreground, z_est);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (!foreground.at(x, y)) continue;
      const Vec2 g = detail::lambertian_gradient_at(normals, Vec2i(x, y), camera, z_est);
      field.seed_zx.at(x, y) = g.x();
      field.seed_zy.at(x, y) = g.y();
    }

  if (field.specular.count() == 0) return field;
  HighlightRegion region;
  try {
    region = extract_boundary(field.specular, foreground);
  } catch (const NoBoundary&) {
    return field;
  }
  const ImageGrid ref = curvature_reference(images, sigma);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (!field.specular.at(x, y)) continue;
      const SeedResult seed =
          dgmc_seed(Vec2i(x, y), region, ref, normals, camera, z_est, window);
      field.seed_zx.at(x, y) = seed.gradient.x();
      field.seed_zy.at(x, y) = seed.gradient.y();
      if (seed.no_match) ++field.no_match_count;
    }
  return field;
}

}  // namespace pstereo
