#pragma once

// Core value types shared by every module: image grids, pixel masks, camera
// intrinsics, light descriptions, material parameters, and the error types
// thrown by validation code. Numeric work happens in double throughout; 8/16
// bit integer rasters only exist at the IO boundary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pstereo {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec2i = Eigen::Vector2i;

inline constexpr double kPi = 3.14159265358979323846;

// ---------------------------------------------------------------------------
// Errors. Validation failures throw; numeric routines prefer status flags in
// their return values (throwing out of a per-pixel loop is not a control flow
// we ever want).
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidImage : Error { using Error::Error; };
struct DimensionError : Error { using Error::Error; };
struct TooFewLights : Error { using Error::Error; };
struct CoplanarError : Error { using Error::Error; };
struct SingularLight : Error { using Error::Error; };
struct DegenerateCamera : Error { using Error::Error; };
struct DegenerateNormal : Error { using Error::Error; };
struct DegenerateView : Error { using Error::Error; };
struct BorderError : Error { using Error::Error; };
struct NoBoundary : Error { using Error::Error; };
struct EmptySystem : Error { using Error::Error; };
struct EmptyDomain : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct NumericalError : Error { using Error::Error; };

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// ---------------------------------------------------------------------------
// ImageGrid: dense row-major float image, 1 or 3 channels. Role-agnostic; the
// same container carries intensities, depth, normals and albedo.
// ---------------------------------------------------------------------------

class ImageGrid {
 public:
  ImageGrid() = default;

  ImageGrid(int width, int height, int channels = 1, double fill = 0.0)
      : width_(width), height_(height), channels_(channels) {
    if (width <= 0 || height <= 0 || (channels != 1 && channels != 3))
      throw DimensionError("ImageGrid: bad shape " + std::to_string(width) + "x" +
                           std::to_string(height) + "x" + std::to_string(channels));
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }
  std::size_t size() const { return data_.size(); }

  double& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
  double at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const ImageGrid& o) const {
    return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
  }

  friend bool operator==(const ImageGrid& a, const ImageGrid& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ &&
           a.channels_ == b.channels_ && a.data_ == b.data_;
  }

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

// Mean over channels at one pixel.
inline double channel_mean(const ImageGrid& img, int x, int y) {
  double s = 0.0;
  for (int c = 0; c < img.channels(); ++c) s += img.at(x, y, c);
  return s / img.channels();
}

// Mean over channels; identity for 1-channel grids.
inline ImageGrid channel_mean(const ImageGrid& img) {
  if (img.channels() == 1) return img;
  ImageGrid out(img.width(), img.height(), 1);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      double s = 0.0;
      for (int c = 0; c < img.channels(); ++c) s += img.at(x, y, c);
      out.at(x, y) = s / img.channels();
    }
  return out;
}

// ---------------------------------------------------------------------------
// PixelMask: boolean grid. "true" means the pixel belongs to the set the mask
// describes (the solve domain, the specular region, ...).
// ---------------------------------------------------------------------------

class PixelMask {
 public:
  PixelMask() = default;

  PixelMask(int width, int height, bool fill = false)
      : width_(width), height_(height),
        bits_(static_cast<std::size_t>(width) * height, fill ? 1 : 0) {
    if (width <= 0 || height <= 0)
      throw DimensionError("PixelMask: bad shape");
  }

  static PixelMask full(int width, int height) { return PixelMask(width, height, true); }

  int width() const { return width_; }
  int height() const { return height_; }

  bool at(int x, int y) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  void set(int x, int y, bool v) { bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0; }

  bool contains(int x, int y) const {
    return x >= 0 && x < width_ && y >= 0 && y < height_ && at(x, y);
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : bits_) n += b;
    return n;
  }

  bool same_shape(const PixelMask& o) const {
    return width_ == o.width_ && height_ == o.height_;
  }

  friend bool operator==(const PixelMask& a, const PixelMask& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.bits_ == b.bits_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

// ---------------------------------------------------------------------------
// Camera intrinsics. Pixel (px,py) maps to metric image coordinates
// (f*(px-delta_x)/psi_x, f*(py-delta_y)/psi_y); see geometry.hpp. Defaults put
// the principal point at the pixel-grid center and use max(w,h) as the focal
// scale, so the wider image axis spans one metric unit.
// ---------------------------------------------------------------------------

struct CameraIntrinsics {
  double psi_x = 0.0;   // focal scale, x (pixels per metric unit at f = 1)
  double psi_y = 0.0;
  double delta_x = 0.0; // principal point, pixels
  double delta_y = 0.0;
  double f = 1.0;       // focal length, metric units

  static CameraIntrinsics defaults(int width, int height) {
    CameraIntrinsics c;
    c.psi_x = c.psi_y = static_cast<double>(std::max(width, height));
    c.delta_x = (width - 1) / 2.0;
    c.delta_y = (height - 1) / 2.0;
    c.f = 1.0;
    return c;
  }

  void validate() const {
    if (!(psi_x > 0.0) || !(psi_y > 0.0) || !(f > 0.0))
      throw DegenerateCamera("CameraIntrinsics: psi_x, psi_y, f must be positive");
  }

  // Metric size of one pixel step along each axis.
  double pitch_x() const { return f / psi_x; }
  double pitch_y() const { return f / psi_y; }

  friend bool operator==(const CameraIntrinsics& a, const CameraIntrinsics& b) {
    return a.psi_x == b.psi_x && a.psi_y == b.psi_y && a.delta_x == b.delta_x &&
           a.delta_y == b.delta_y && a.f == b.f;
  }
};

// ---------------------------------------------------------------------------
// Lights. The stored vector is a unit direction (surface -> source) for
// Directional lights and a world position for Point lights. Intensity is the
// source strength; Point lights attenuate with inverse square distance when
// resolved against a surface point (geometry.hpp).
// ---------------------------------------------------------------------------

enum class LightKind { Directional, Point };

struct LightSpec {
  LightKind kind = LightKind::Directional;
  Vec3 vec = Vec3(0, 0, 1);
  double intensity = 1.0;

  static LightSpec directional(const Vec3& dir, double intensity) {
    double n = dir.norm();
    if (n < 1e-12) throw SingularLight("LightSpec: zero direction");
    return LightSpec{LightKind::Directional, dir / n, intensity};
  }
  static LightSpec point(const Vec3& pos, double intensity) {
    return LightSpec{LightKind::Point, pos, intensity};
  }

  // Unit vector used for the span test in validate_light_set.
  Vec3 span_direction() const {
    Vec3 v = vec;
    double n = v.norm();
    if (n < 1e-12) throw SingularLight("LightSpec: zero direction");
    return v / n;
  }
};

using LightSet = std::vector<LightSpec>;

// Three lights minimum, first three directions must span 3-space, every light
// must have a usable direction and positive intensity.
inline void validate_light_set(const LightSet& lights) {
  if (lights.size() < 3)
    throw TooFewLights("light set needs at least 3 lights, got " +
                       std::to_string(lights.size()));
  for (const auto& l : lights) {
    (void)l.span_direction();  // throws SingularLight on zero vectors
    if (!(l.intensity > 0.0))
      throw SingularLight("light intensity must be positive");
  }
  Eigen::Matrix3d M;
  for (int i = 0; i < 3; ++i) M.row(i) = lights[i].span_direction().transpose();
  if (std::abs(M.determinant()) <= 1e-8)
    throw CoplanarError("first three light directions are coplanar");
}

// ---------------------------------------------------------------------------
// Material: per-channel diffuse albedo, one specular weight, Beckmann
// roughness, Fresnel base reflectance. Synthetic scenes follow the convention
// k_s = 1 - mean(k_d); reconstruction relies on the same closure since k_s is
// not separately observable.
// ---------------------------------------------------------------------------

struct MaterialParams {
  double k_d[3] = {0.5, 0.5, 0.5};
  double k_s = 0.5;
  double m = 0.3;          // Beckmann RMS slope
  double f_lambda = 0.04;  // Fresnel reflectance at normal incidence

  double mean_kd() const { return (k_d[0] + k_d[1] + k_d[2]) / 3.0; }

  void validate() const {
    for (double v : k_d)
      if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("MaterialParams: k_d outside [0,1]");
    if (!(k_s >= 0.0 && k_s <= 1.0)) throw ConfigError("MaterialParams: k_s outside [0,1]");
    if (!(m > 0.0)) throw ConfigError("MaterialParams: m must be positive");
    if (!(f_lambda >= 0.0 && f_lambda < 1.0))
      throw ConfigError("MaterialParams: f_lambda outside [0,1)");
  }

  friend bool operator==(const MaterialParams& a, const MaterialParams& b) {
    return a.k_d[0] == b.k_d[0] && a.k_d[1] == b.k_d[1] && a.k_d[2] == b.k_d[2] &&
           a.k_s == b.k_s && a.m == b.m && a.f_lambda == b.f_lambda;
  }
};

// ---------------------------------------------------------------------------
// Intensity normalization and shadow masking.
// ---------------------------------------------------------------------------

// Map integer samples (as doubles) in [0, 2^bit_depth - 1] to [0, 1].
inline ImageGrid normalize_intensities(const ImageGrid& raw, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16)
    throw InvalidImage("normalize_intensities: bit depth must be 8 or 16");
  const double maxv = static_cast<double>((1u << bit_depth) - 1);
  ImageGrid out = raw;
  for (double& v : out.data()) {
    if (!std::isfinite(v) || v < 0.0 || v > maxv)
      throw InvalidImage("normalize_intensities: sample out of range");
    v /= maxv;
  }
  return out;
}

// Pixels whose minimum intensity over all images (and channels) falls below
// tau. "true" marks a shadowed pixel; callers subtract this from the solve
// domain and report the holes.
inline PixelMask shadow_mask(const std::vector<ImageGrid>& images, double tau = 0.02) {
  if (images.empty()) throw InvalidImage("shadow_mask: no images");
  for (const auto& img : images)
    if (!img.same_shape(images[0]))
      throw DimensionError("shadow_mask: image shapes differ");
  const int W = images[0].width(), H = images[0].height();
  PixelMask shadowed(W, H, false);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double lo = std::numeric_limits<double>::infinity();
      for (const auto& img : images)
        for (int c = 0; c < img.channels(); ++c) lo = std::min(lo, img.at(x, y, c));
      if (lo < tau) shadowed.set(x, y, true);
    }
  return shadowed;
}

}  // namespace pstereo
