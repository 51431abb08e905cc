#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "loom/event_core.hpp"

namespace loom {

// Pinhole intrinsics with radial-tangential distortion (k1, k2, p1, p2, k3).
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  std::array<double, 5> distortion{};

  bool has_distortion() const;
  void validate() const;

  friend bool operator==(const Intrinsics&, const Intrinsics&) = default;
};

// Rotation + translation mapping points from a source frame into a target frame.
class RigidTransform {
 public:
  RigidTransform() = default;
  // Throws InvalidArgument unless `rotation` is orthonormal with det +1 (1e-9).
  RigidTransform(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation);

  static RigidTransform identity() { return {}; }
  static RigidTransform from_translation(const Eigen::Vector3d& t) {
    return {Eigen::Matrix3d::Identity(), t};
  }

  const Eigen::Matrix3d& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation_ * p + translation_; }
  RigidTransform inverse() const;

  // (a * b).apply(p) == a.apply(b.apply(p))
  friend RigidTransform operator*(const RigidTransform& a, const RigidTransform& b);
  friend bool operator==(const RigidTransform&, const RigidTransform&) = default;

 private:
  Eigen::Matrix3d rotation_ = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation_ = Eigen::Vector3d::Zero();
};

// Dense multi-channel 2D grid, channel-last: values[(y * width + x) * channels + c].
class Grid2D {
 public:
  Grid2D() = default;
  Grid2D(int width, int height, int channels, double fill_value = 0.0);
  Grid2D(int width, int height, int channels, std::vector<double> values);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }

  double at(int x, int y, int c = 0) const { return values_[index(x, y, c)]; }
  double& at(int x, int y, int c = 0) { return values_[index(x, y, c)]; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  // Value returned for samples outside [0, w-1] x [0, h-1].
  double out_of_range_fill() const { return fill_; }
  void set_out_of_range_fill(double fill) { fill_ = fill; }

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  double fill_ = 0.0;
  std::vector<double> values_;
};

Eigen::Vector2d distort(const Intrinsics& intr, const Eigen::Vector2d& normalized);

// Fixed-point inversion of distort(); throws NoConvergence when the residual
// is still above 1e-6 after 20 iterations.
Eigen::Vector2d undistort(const Intrinsics& intr, const Eigen::Vector2d& distorted);

// Throws BehindCamera when point.z() <= 0.
Eigen::Vector2d project_point(const Intrinsics& intr, const Eigen::Vector3d& point,
                              bool apply_distortion = false);

// Normalized, undistorted ray (x, y, 1) through pixel (u, v).
Eigen::Vector3d pixel_ray(const Intrinsics& intr, const Eigen::Vector2d& pixel,
                          bool remove_distortion = false);

// Per destination pixel: the source pixel seen along the same ray when depth
// is taken to be infinite. Invalid entries hold NaN.
struct PixelMap {
  int width = 0;
  int height = 0;
  std::vector<Eigen::Vector2d> source;  // row-major, size width * height

  const Eigen::Vector2d& at(int x, int y) const {
    return source[static_cast<std::size_t>(y) * width + x];
  }
  static bool valid(const Eigen::Vector2d& p) { return !p.hasNaN(); }
};

// `rotation` maps source-camera rays into the destination camera frame.
// Returns NaN when the ray points away from the source camera.
Eigen::Vector2d infinite_depth_pixel(const Intrinsics& src, const Intrinsics& dst,
                                     const Eigen::Matrix3d& rotation,
                                     const Eigen::Vector2d& dst_pixel);

PixelMap infinite_depth_map(const Intrinsics& src, SensorSize src_size, const Intrinsics& dst,
                            SensorSize dst_size, const Eigen::Matrix3d& rotation);

enum class Interpolation { kBilinear, kNearest };

// Bilinear blend of the four neighbours of (u, v); the grid's fill value
// outside [0, w-1] x [0, h-1]. Writes `channels()` values into `out`.
void bilinear_sample(const Grid2D& grid, double u, double v, std::span<double> out);
std::vector<double> bilinear_sample(const Grid2D& grid, double u, double v);
std::vector<double> nearest_sample(const Grid2D& grid, double u, double v);

// Resamples `src` through a pixel map (e.g. RGB into the event camera view).
Grid2D remap(const Grid2D& src, const PixelMap& map,
             Interpolation interpolation = Interpolation::kBilinear);

struct CameraModel {
  Intrinsics intrinsics;
  SensorSize size;
};

struct CameraPair {
  std::string from;
  std::string to;
  RigidTransform to_from_from;  // maps points in `from` into `to`
};

struct Calibration {
  std::map<std::string, CameraModel> cameras;
  std::vector<CameraPair> pairs;
};

Calibration load_calibration(const std::filesystem::path& path);
void save_calibration(const Calibration& calib, const std::filesystem::path& path);

}  // namespace loom
