#pragma once

#include <array>
#include <optional>
#include <string>

#include <Eigen/Core>

#include "loom/event_core.hpp"

namespace loom {

// Upright 3D box in a z-up frame. Yaw rotates the length axis about +z.
struct Box3D {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double length = 1.0;  // along the heading
  double width = 1.0;
  double height = 1.0;  // along +z
  double yaw = 0.0;     // (-pi, pi]
  std::string category = "car";
  Micros t = 0;
  std::optional<double> score;
  std::optional<int> id;

  std::array<Eigen::Vector3d, 8> corners() const;
  // Ground-plane footprint, counter-clockwise.
  std::array<Eigen::Vector2d, 4> footprint() const;
  double volume() const { return length * width * height; }
};

// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

// Intersection-over-union of the ground-plane footprints.
double bev_iou(const Box3D& a, const Box3D& b);

// Distance between box centres projected on the ground plane.
double ground_distance(const Box3D& a, const Box3D& b);

}  // namespace loom
