#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "loom/box3d.hpp"
#include "loom/camera_geometry.hpp"
#include "loom/event_core.hpp"

namespace loom {

// A fronto-parallel rectangle moving along the optical axis of a static
// camera. The camera sits at the world origin; the world frame is x forward,
// y left, z up and the rectangle faces the camera at depth Z(t) = Z0 - v t.
struct SceneSpec {
  double object_width = 1.8;          // m
  double object_height = 1.5;         // m
  double object_length = 4.0;         // m, depth extent of the 3D label box
  double contrast = 2.5;              // object / background intensity
  double background_intensity = 0.3;  // in (0, 1]
  double initial_depth = 15.0;        // m, depth of the facing side at t = 0
  double velocity = 5.0;              // m/s, positive approaching
  double lateral_offset = 0.0;        // m along the camera x axis
  Intrinsics camera{600.0, 600.0, 320.0, 240.0, {}};
  SensorSize sensor{640, 480};
  double frame_rate = 10.0;           // Hz
  double contrast_threshold = 0.15;   // log-intensity step per event
  double duration = 0.3;              // s
  double noise_rate = 0.0;            // background events / px / s
  double pixel_jitter = 0.0;          // px, std-dev applied to signal events
};

struct SynthFrame {
  Micros t = 0;
  Grid2D image;  // linear intensity, one channel
};

struct SynthBundle {
  SceneSpec spec;
  EventStream events;
  std::size_t signal_event_count = 0;
  std::vector<SynthFrame> frames;
  std::vector<Box3D> boxes;            // one per frame, world frame
  Eigen::Vector3d object_velocity;     // world frame
  std::vector<double> ttc;             // analytic, one per frame
  std::vector<double> pixel_height;    // analytic, one per frame
  RigidTransform world_from_camera;
};

// Rotation taking camera axes (x right, y down, z forward) into the world frame.
Eigen::Matrix3d camera_to_world_rotation();

// Throws DegenerateSpec for invalid specs or an object that is never in view.
SynthBundle generate(const SceneSpec& spec, std::uint64_t seed);

double analytic_depth(const SceneSpec& spec, double t);
double analytic_ttc(const SceneSpec& spec, double t);
double analytic_height(const SceneSpec& spec, double t);

// Image-plane rectangle of the object at time t (pixel edges, not centres).
RoiRect projected_rect(const SceneSpec& spec, double t);

// Writes events.bin, frame_NNN.pgm, boxes.jsonl, poses.jsonl and ttc.jsonl
// (analytic labels at every frame time) into `dir`, labelled `object_id`.
void write_bundle(const SynthBundle& bundle, const std::filesystem::path& dir, int object_id = 0);

// Ten scenes whose TTC at t = 0 is 0.5, 1, 2, 3, 4, 5, 6, 8, -2 and -5 s.
std::vector<SceneSpec> benchmark_ladder();
inline constexpr double kLadderTtc[] = {0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, -2.0, -5.0};

}  // namespace loom
