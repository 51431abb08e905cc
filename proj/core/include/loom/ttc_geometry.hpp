#pragma once

// Closed-form time-to-contact relations and the loss kernels built on them.
// Sign convention: positive TTC means the object is approaching.

namespace loom {

inline constexpr double kMinClosingSpeed = 1e-3;     // m/s
inline constexpr double kMinDepthChange = 1e-6;      // m
inline constexpr double kMinLoomingRatio = 1e-6;     // |1 - h1/h2|

// tau = z_min / v_rel. Throws UndefinedTTC when |v_rel| < kMinClosingSpeed.
double ttc_from_depth_speed(double z_min, double v_rel);

// tau = dt * z1 / (z1 - z2), the TTC at the first observation.
double ttc_from_depths(double z1, double z2, double dt);

// Pixel height of an upright object of metric height H at depth z.
double visible_height(double fy, double object_height, double z);

// tau = dt / (1 - h1 / h2). Growth (h2 > h1) gives a positive TTC.
double ttc_from_height_ratio(double h1, double h2, double dt);

// Same, from the ratio h1/h2 directly.
double ttc_from_ratio(double height_ratio, double dt);

// Motion in depth: eta = 1 - dt / tau, equal to z2 / z1.
double eta_from_ttc(double tau, double dt);
double ttc_from_eta(double eta, double dt);

struct LossValue {
  double value = 0.0;
  double grad = 0.0;  // d value / d pred
};

// 0.5 d^2 for |d| < 1, |d| - 0.5 otherwise, with d = gt - pred.
LossValue smooth_l1(double pred, double gt);

struct HeightRatioLoss {
  double value = 0.0;
  double grad_h1 = 0.0;
  double grad_h2 = 0.0;
};

// |ln(pred_h1 / pred_h2) - ln(gt_h1 / gt_h2)|; subgradient 0 at the kink.
HeightRatioLoss height_ratio_loss(double pred_h1, double pred_h2, double gt_h1, double gt_h2);

}  // namespace loom
