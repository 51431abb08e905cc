#include "loom/ttc_geometry.hpp"

#include <cmath>

#include "loom/error.hpp"

namespace loom {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::kInvalidArgument, what);
}

}  // namespace

double ttc_from_depth_speed(double z_min, double v_rel) {
  require(z_min > 0.0, "depth must be positive");
  if (!(std::abs(v_rel) >= kMinClosingSpeed)) {
    throw Error(ErrorCode::kUndefinedTtc, "relative depth speed is too small");
  }
  return z_min / v_rel;
}

double ttc_from_depths(double z1, double z2, double dt) {
  require(z1 > 0.0 && z2 > 0.0, "depths must be positive");
  require(dt > 0.0, "dt must be positive");
  const double dz = z1 - z2;
  if (!(std::abs(dz) >= kMinDepthChange)) throw Error(ErrorCode::kUndefinedTtc, "depth did not change");
  return dt * z1 / dz;
}

double visible_height(double fy, double object_height, double z) {
  require(z > 0.0, "depth must be positive");
  require(object_height >= 0.0, "object height must be non-negative");
  return fy * object_height / z;
}

double ttc_from_ratio(double height_ratio, double dt) {
  require(dt > 0.0, "dt must be positive");
  const double looming = 1.0 - height_ratio;
  if (!(std::abs(looming) >= kMinLoomingRatio)) {
    throw Error(ErrorCode::kUndefinedTtc, "no measurable looming");
  }
  return dt / looming;
}

double ttc_from_height_ratio(double h1, double h2, double dt) {
  require(h1 > 0.0 && h2 > 0.0, "heights must be positive");
  return ttc_from_ratio(h1 / h2, dt);
}

double eta_from_ttc(double tau, double dt) {
  if (tau == 0.0 || !std::isfinite(tau)) throw Error(ErrorCode::kUndefinedTtc, "TTC must be finite and non-zero");
  return 1.0 - dt / tau;
}

double ttc_from_eta(double eta, double dt) {
  if (eta == 1.0 || !std::isfinite(eta)) throw Error(ErrorCode::kUndefinedEta, "eta of 1 has no TTC");
  return dt / (1.0 - eta);
}

LossValue smooth_l1(double pred, double gt) {
  const double d = gt - pred;
  if (std::abs(d) < 1.0) return {0.5 * d * d, -d};
  return {std::abs(d) - 0.5, d > 0.0 ? -1.0 : 1.0};
}

HeightRatioLoss height_ratio_loss(double pred_h1, double pred_h2, double gt_h1, double gt_h2) {
  if (!(pred_h1 > 0.0 && pred_h2 > 0.0 && gt_h1 > 0.0 && gt_h2 > 0.0)) {
    throw Error(ErrorCode::kNonPositiveHeight, "heights must be positive");
  }
  const double diff = std::log(pred_h1 / pred_h2) - std::log(gt_h1 / gt_h2);
  if (diff == 0.0) return {0.0, 0.0, 0.0};
  const double sign = diff > 0.0 ? 1.0 : -1.0;
  return {std::abs(diff), sign / pred_h1, -sign / pred_h2};
}

}  // namespace loom
