#include "loom/camera_geometry.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "loom/error.hpp"

namespace loom {

namespace {

constexpr double kOrthonormalTol = 1e-9;
constexpr int kUndistortIterations = 20;
constexpr double kUndistortTarget = 1e-14;
constexpr double kUndistortFailure = 1e-6;

const Eigen::Vector2d kInvalidPixel(std::numeric_limits<double>::quiet_NaN(),
                                    std::numeric_limits<double>::quiet_NaN());

}  // namespace

bool Intrinsics::has_distortion() const {
  for (double k : distortion) {
    if (k != 0.0) return true;
  }
  return false;
}

void Intrinsics::validate() const {
  if (!(fx > 0.0 && fy > 0.0)) throw Error(ErrorCode::kInvalidArgument, "focal lengths must be positive");
  for (double k : distortion) {
    if (!std::isfinite(k)) throw Error(ErrorCode::kInvalidArgument, "distortion must be finite");
  }
}

RigidTransform::RigidTransform(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
    : rotation_(rotation), translation_(translation) {
  const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (!(ortho <= kOrthonormalTol) || !(std::abs(rotation.determinant() - 1.0) <= kOrthonormalTol)) {
    throw Error(ErrorCode::kInvalidArgument, "rotation is not a proper orthonormal matrix");
  }
  if (!translation.allFinite()) throw Error(ErrorCode::kInvalidArgument, "translation must be finite");
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.rotation_ = rotation_.transpose();
  inv.translation_ = -(inv.rotation_ * translation_);
  return inv;
}

RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
  RigidTransform out;
  out.rotation_ = a.rotation_ * b.rotation_;
  out.translation_ = a.rotation_ * b.translation_ + a.translation_;
  return out;
}

Grid2D::Grid2D(int width, int height, int channels, double fill_value)
    : width_(width), height_(height), channels_(channels),
      values_(static_cast<std::size_t>(width) * height * channels, fill_value) {
  if (width < 0 || height < 0 || channels < 1) throw Error(ErrorCode::kInvalidArgument, "bad grid shape");
}

Grid2D::Grid2D(int width, int height, int channels, std::vector<double> values)
    : width_(width), height_(height), channels_(channels), values_(std::move(values)) {
  if (width < 0 || height < 0 || channels < 1 ||
      values_.size() != static_cast<std::size_t>(width) * height * channels) {
    throw Error(ErrorCode::kInvalidArgument, "grid values do not match its shape");
  }
}

Eigen::Vector2d distort(const Intrinsics& intr, const Eigen::Vector2d& n) {
  const auto& [k1, k2, p1, p2, k3] = intr.distortion;
  const double x = n.x();
  const double y = n.y();
  const double r2 = x * x + y * y;
  const double radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
  return {x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x),
          y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y};
}

Eigen::Vector2d undistort(const Intrinsics& intr, const Eigen::Vector2d& distorted) {
  if (!intr.has_distortion()) return distorted;
  const auto& [k1, k2, p1, p2, k3] = intr.distortion;

  Eigen::Vector2d n = distorted;
  double residual = std::numeric_limits<double>::infinity();
  for (int it = 0; it < kUndistortIterations; ++it) {
    const double x = n.x();
    const double y = n.y();
    const double r2 = x * x + y * y;
    const double radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
    const double dx = 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
    const double dy = p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
    n = {(distorted.x() - dx) / radial, (distorted.y() - dy) / radial};
    residual = (distort(intr, n) - distorted).norm();
    if (residual < kUndistortTarget) break;
  }
  if (!(residual <= kUndistortFailure)) {
    throw Error(ErrorCode::kNoConvergence, "undistortion did not converge");
  }
  return n;
}

Eigen::Vector2d project_point(const Intrinsics& intr, const Eigen::Vector3d& point, bool apply_distortion) {
  if (!(point.z() > 0.0)) throw Error(ErrorCode::kBehindCamera, "point is behind the camera");
  Eigen::Vector2d n(point.x() / point.z(), point.y() / point.z());
  if (apply_distortion) n = distort(intr, n);
  return {intr.fx * n.x() + intr.cx, intr.fy * n.y() + intr.cy};
}

Eigen::Vector3d pixel_ray(const Intrinsics& intr, const Eigen::Vector2d& pixel, bool remove_distortion) {
  Eigen::Vector2d n((pixel.x() - intr.cx) / intr.fx, (pixel.y() - intr.cy) / intr.fy);
  if (remove_distortion) n = undistort(intr, n);
  return {n.x(), n.y(), 1.0};
}

Eigen::Vector2d infinite_depth_pixel(const Intrinsics& src, const Intrinsics& dst,
                                     const Eigen::Matrix3d& rotation, const Eigen::Vector2d& dst_pixel) {
  const Eigen::Vector3d ray = rotation.transpose() * pixel_ray(dst, dst_pixel, dst.has_distortion());
  if (!(ray.z() > 0.0)) return kInvalidPixel;
  return project_point(src, ray, src.has_distortion());
}

PixelMap infinite_depth_map(const Intrinsics& src, SensorSize src_size, const Intrinsics& dst,
                            SensorSize dst_size, const Eigen::Matrix3d& rotation) {
  src.validate();
  dst.validate();
  const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (!(ortho <= kOrthonormalTol)) throw Error(ErrorCode::kInvalidArgument, "rotation is not orthonormal");

  PixelMap map;
  map.width = dst_size.width;
  map.height = dst_size.height;
  map.source.resize(static_cast<std::size_t>(dst_size.width) * dst_size.height);

  // Same model and no rotation: every pixel maps onto itself.
  const bool identity = src == dst && rotation == Eigen::Matrix3d::Identity();
  for (int y = 0; y < dst_size.height; ++y) {
    for (int x = 0; x < dst_size.width; ++x) {
      Eigen::Vector2d s(x, y);
      if (!identity) {
        try {
          s = infinite_depth_pixel(src, dst, rotation, s);
        } catch (const Error&) {
          s = kInvalidPixel;
        }
      }
      if (PixelMap::valid(s) &&
          (s.x() < 0.0 || s.y() < 0.0 || s.x() > src_size.width - 1 || s.y() > src_size.height - 1)) {
        s = kInvalidPixel;
      }
      map.source[static_cast<std::size_t>(y) * map.width + x] = s;
    }
  }
  return map;
}

void bilinear_sample(const Grid2D& grid, double u, double v, std::span<double> out) {
  const int c = grid.channels();
  if (!(u >= 0.0 && v >= 0.0 && u <= grid.width() - 1 && v <= grid.height() - 1)) {
    std::fill(out.begin(), out.begin() + c, grid.out_of_range_fill());
    return;
  }
  const int x0 = static_cast<int>(u);
  const int y0 = static_cast<int>(v);
  const int x1 = std::min(x0 + 1, grid.width() - 1);
  const int y1 = std::min(y0 + 1, grid.height() - 1);
  const double ax = u - x0;
  const double ay = v - y0;
  for (int k = 0; k < c; ++k) {
    const double top = grid.at(x0, y0, k) * (1.0 - ax) + grid.at(x1, y0, k) * ax;
    const double bottom = grid.at(x0, y1, k) * (1.0 - ax) + grid.at(x1, y1, k) * ax;
    out[k] = top * (1.0 - ay) + bottom * ay;
  }
}

std::vector<double> bilinear_sample(const Grid2D& grid, double u, double v) {
  std::vector<double> out(grid.channels());
  bilinear_sample(grid, u, v, out);
  return out;
}

std::vector<double> nearest_sample(const Grid2D& grid, double u, double v) {
  std::vector<double> out(grid.channels(), grid.out_of_range_fill());
  if (!(u >= 0.0 && v >= 0.0 && u <= grid.width() - 1 && v <= grid.height() - 1)) return out;
  const int x = static_cast<int>(std::lround(u));
  const int y = static_cast<int>(std::lround(v));
  for (int k = 0; k < grid.channels(); ++k) out[k] = grid.at(x, y, k);
  return out;
}

Grid2D remap(const Grid2D& src, const PixelMap& map, Interpolation interpolation) {
  Grid2D out(map.width, map.height, src.channels(), src.out_of_range_fill());
  out.set_out_of_range_fill(src.out_of_range_fill());
  std::vector<double> px(src.channels());
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      const auto& s = map.at(x, y);
      if (!PixelMap::valid(s)) continue;
      if (interpolation == Interpolation::kBilinear) {
        bilinear_sample(src, s.x(), s.y(), px);
      } else {
        px = nearest_sample(src, s.x(), s.y());
      }
      for (int c = 0; c < src.channels(); ++c) out.at(x, y, c) = px[c];
    }
  }
  return out;
}

namespace {

using nlohmann::json;

Intrinsics intrinsics_from_json(const json& j) {
  Intrinsics intr;
  intr.fx = j.at("fx").get<double>();
  intr.fy = j.at("fy").get<double>();
  intr.cx = j.at("cx").get<double>();
  intr.cy = j.at("cy").get<double>();
  if (j.contains("dist")) {
    const auto d = j.at("dist").get<std::vector<double>>();
    if (d.size() > 5) throw Error(ErrorCode::kInvalidArgument, "at most 5 distortion coefficients");
    std::copy(d.begin(), d.end(), intr.distortion.begin());
  }
  intr.validate();
  return intr;
}

}  // namespace

Calibration load_calibration(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  Calibration calib;
  try {
    const json j = json::parse(in);
    for (const auto& [name, cam] : j.at("cameras").items()) {
      CameraModel model;
      model.intrinsics = intrinsics_from_json(cam);
      const auto size = cam.at("size").get<std::vector<int>>();
      if (size.size() != 2) throw Error(ErrorCode::kInvalidArgument, "size must be [w, h]");
      model.size = {size[0], size[1]};
      calib.cameras.emplace(name, model);
    }
    if (j.contains("pairs")) {
      for (const auto& p : j.at("pairs")) {
        const auto r = p.at("rotation").get<std::vector<double>>();
        const auto t = p.at("translation").get<std::vector<double>>();
        if (r.size() != 9 || t.size() != 3) {
          throw Error(ErrorCode::kInvalidArgument, "rotation needs 9 values, translation 3");
        }
        Eigen::Matrix3d rot;
        rot << r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8];
        calib.pairs.push_back({p.at("from").get<std::string>(), p.at("to").get<std::string>(),
                               RigidTransform(rot, Eigen::Vector3d(t[0], t[1], t[2]))});
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("calibration: ") + e.what());
  }
  return calib;
}

void save_calibration(const Calibration& calib, const std::filesystem::path& path) {
  json j;
  j["cameras"] = json::object();
  for (const auto& [name, cam] : calib.cameras) {
    const auto& k = cam.intrinsics;
    j["cameras"][name] = {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy},
                          {"dist", k.distortion}, {"size", {cam.size.width, cam.size.height}}};
  }
  j["pairs"] = json::array();
  for (const auto& p : calib.pairs) {
    const auto& r = p.to_from_from.rotation();
    const auto& t = p.to_from_from.translation();
    j["pairs"].push_back({{"from", p.from},
                          {"to", p.to},
                          {"rotation", {r(0, 0), r(0, 1), r(0, 2), r(1, 0), r(1, 1), r(1, 2), r(2, 0), r(2, 1), r(2, 2)}},
                          {"translation", {t.x(), t.y(), t.z()}},
                          {"units", "meters"}});
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace loom
