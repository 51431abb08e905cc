#pragma once

#include <optional>
#include <span>
#include <string>

#include <Eigen/Core>

#include "loom/camera_geometry.hpp"
#include "loom/event_core.hpp"

namespace loom {

struct ScaleSearchOptions {
  double min_scale = 0.5;
  double max_scale = 2.0;
  int max_shift = 4;            // px, translation search radius at full resolution
  double tolerance = 1e-4;      // golden-section stopping width, in scale units
  int coarse_samples = 25;      // log-spaced bracketing scan over [min, max]
  double blur_sigma = 1.0;      // px, applied to both maps before matching
  int min_event_cells = 20;
  double min_prominence = 0.02;
};

struct ScaleResult {
  double scale = 1.0;        // current relative to previous (> 1 means growth)
  double peak = 0.0;         // NCC at the optimum
  double prominence = 0.0;   // peak minus the mean NCC of the bracketing scan
  double confidence = 0.0;   // prominence clamped to [0, 1]
  Eigen::Vector2i shift = Eigen::Vector2i::Zero();
};

// Scale maximizing the normalized cross-correlation of `prev` against `cur`
// scaled by 1/s about `center`. Background cells count as 0, events as +-1.
// Throws NoEvents or FlatObjective.
ScaleResult estimate_scale_events(const EventVoxelGrid& prev, const EventVoxelGrid& cur,
                                  const Eigen::Vector2d& center, const ScaleSearchOptions& opts = {});

// Same search on gradient-magnitude maps of two grayscale crops.
ScaleResult estimate_scale_frames(const Grid2D& prev, const Grid2D& cur, const Eigen::Vector2d& center,
                                  const ScaleSearchOptions& opts = {});

enum class EstimatorMode { kEvents, kFrames, kFused };

EstimatorMode parse_mode(std::string_view name);
std::string_view to_string(EstimatorMode mode);

// Two observations of one object, already cropped to a common ROI geometry.
struct RoiObservation {
  RoiRect roi;          // sensor-space rectangle shared by both crops
  Micros t_prev = 0;
  Micros t_cur = 0;
  double dt = 0.1;      // s
  std::optional<EventVoxelGrid> voxel_prev;
  std::optional<EventVoxelGrid> voxel_cur;
  std::optional<Grid2D> frame_prev;
  std::optional<Grid2D> frame_cur;

  // Scaling centre in crop coordinates (the ROI centre).
  Eigen::Vector2d center() const;
};

struct TtcEstimate {
  double ttc = 0.0;           // s
  double height_ratio = 1.0;  // h_prev / h_cur
  double confidence = 0.0;
  std::string method;
};

// Throws the estimator's error; fused mode throws only when both modalities
// fail, with both causes in the message.
TtcEstimate estimate_ttc(const RoiObservation& obs, EstimatorMode mode,
                         const ScaleSearchOptions& opts = {});

struct ObservationOptions {
  int roi_size = 128;
  int bins = 5;
  double window = 0.1;  // s, event window centred on each observation time
};

// Square ROI of side margin * max(w, h) centred on an image-space box.
RoiRect square_roi(const RoiRect& box, double margin = 1.5);

// Bilinear resampling of `image` over `roi` onto an out_size grid.
Grid2D crop_resample(const Grid2D& image, const RoiRect& roi, SensorSize out_size);

// Event crops use windows centred on t_prev and t_cur; frames are optional.
RoiObservation make_observation(const EventStream& events, Micros t_prev, Micros t_cur,
                                const RoiRect& roi, const ObservationOptions& opts = {},
                                const Grid2D* frame_prev = nullptr, const Grid2D* frame_cur = nullptr);

struct DepthSample {
  double t = 0.0;  // s
  double z = 0.0;  // m
};

// Least-squares line through z(t); tau = z(t_last) / -slope.
double linear_extrapolation_baseline(std::span<const DepthSample> samples);

}  // namespace loom
