#include "loom/box3d.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include <boost/geometry.hpp>
#include <boost/geometry/geometries/point_xy.hpp>
#include <boost/geometry/geometries/polygon.hpp>

namespace loom {

namespace {

namespace bg = boost::geometry;
using Point = bg::model::d2::point_xy<double>;
using Polygon = bg::model::polygon<Point, /*clockwise=*/false>;

Polygon to_polygon(const Box3D& box) {
  Polygon poly;
  for (const auto& p : box.footprint()) bg::append(poly.outer(), Point(p.x(), p.y()));
  bg::append(poly.outer(), Point(box.footprint()[0].x(), box.footprint()[0].y()));
  bg::correct(poly);
  return poly;
}

}  // namespace

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

std::array<Eigen::Vector2d, 4> Box3D::footprint() const {
  const Eigen::Vector2d heading(std::cos(yaw), std::sin(yaw));
  const Eigen::Vector2d side(-heading.y(), heading.x());
  const Eigen::Vector2d c = center.head<2>();
  const Eigen::Vector2d hl = 0.5 * length * heading;
  const Eigen::Vector2d hw = 0.5 * width * side;
  return {c - hl - hw, c + hl - hw, c + hl + hw, c - hl + hw};
}

std::array<Eigen::Vector3d, 8> Box3D::corners() const {
  std::array<Eigen::Vector3d, 8> out;
  const auto fp = footprint();
  for (int i = 0; i < 4; ++i) {
    out[i] = {fp[i].x(), fp[i].y(), center.z() - 0.5 * height};
    out[i + 4] = {fp[i].x(), fp[i].y(), center.z() + 0.5 * height};
  }
  return out;
}

double bev_iou(const Box3D& a, const Box3D& b) {
  const Polygon pa = to_polygon(a);
  const Polygon pb = to_polygon(b);
  std::vector<Polygon> inter;
  bg::intersection(pa, pb, inter);
  double overlap = 0.0;
  for (const auto& p : inter) overlap += bg::area(p);
  const double uni = a.length * a.width + b.length * b.width - overlap;
  return uni > 0.0 ? overlap / uni : 0.0;
}

double ground_distance(const Box3D& a, const Box3D& b) {
  return (a.center.head<2>() - b.center.head<2>()).norm();
}

}  // namespace loom
