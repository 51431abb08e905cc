#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "loom/box3d.hpp"
#include "loom/camera_geometry.hpp"
#include "loom/event_core.hpp"

namespace loom {

using StateVector = Eigen::Matrix<double, 11, 1>;
using StateCovariance = Eigen::Matrix<double, 11, 11>;

// Index layout of the state: x, y, z, yaw, l, w, h, vx, vy, vz, vyaw.
enum StateIndex : int { kX, kY, kZ, kYaw, kL, kW, kH, kVx, kVy, kVz, kVyaw };

struct TrackerConfig {
  // Process noise, per predict step.
  double q_position = 0.01;
  double q_yaw = 1e-4;
  double q_size = 1e-6;
  double q_velocity = 0.1;
  double q_yaw_rate = 1e-3;
  // Measurement noise.
  double r_position = 0.04;
  double r_yaw = 1e-2;
  double r_size = 0.01;
  // Prior variance of the unobserved rates when a track is born.
  double init_velocity_var = 100.0;
  double init_yaw_rate_var = 1.0;

  double iou_gate = 0.1;
  int min_hits = 2;
  int max_age = 3;

  StateCovariance process_noise() const;
  Eigen::Matrix<double, 7, 7> measurement_noise() const;
};

struct TrackState {
  StateVector x = StateVector::Zero();
  StateCovariance P = StateCovariance::Identity();
  int id = 0;
  int age = 0;        // frames since birth
  int hit_count = 0;  // matched detections, including the one that spawned it
  int time_since_update = 0;
  std::string category = "car";
  Micros t = 0;

  Eigen::Vector3d position() const { return x.head<3>(); }
  Eigen::Vector3d velocity() const { return x.segment<3>(kVx); }
  Box3D box() const;
};

TrackState track_from_detection(const Box3D& det, int id, const TrackerConfig& cfg = {});

// Constant-velocity prediction. Throws InvalidArgument for dt <= 0.
TrackState predict(const TrackState& track, double dt, const TrackerConfig& cfg = {});

// Throws SingularInnovationCovariance when S cannot be factorized.
TrackState update(const TrackState& track, const Box3D& detection, const TrackerConfig& cfg = {});

struct Association {
  std::vector<std::pair<int, int>> matches;  // (track index, detection index)
  std::vector<int> unmatched_tracks;
  std::vector<int> unmatched_detections;
};

// Minimum-cost assignment for a rows x cols cost matrix (either may be larger).
// Returns, per row, the assigned column or -1.
std::vector<int> hungarian(const Eigen::MatrixXd& cost);

// Hungarian assignment on 1 - BEV IoU; pairs below `iou_gate` are rejected.
Association associate(std::span<const TrackState> tracks, std::span<const Box3D> detections,
                      double iou_gate = 0.1);

class Tracker {
 public:
  explicit Tracker(TrackerConfig cfg = {}) : cfg_(cfg) {}

  // predict -> associate -> update -> spawn / retire. Detections share time t.
  void step(std::span<const Box3D> detections, Micros t);

  const std::vector<TrackState>& tracks() const { return tracks_; }
  std::vector<TrackState> confirmed_tracks() const;

  // Per-id state after each frame in which the track was matched, for every
  // track that reached min_hits. Ordered by id then time.
  std::map<int, std::vector<TrackState>> histories() const;

  const TrackerConfig& config() const { return cfg_; }

 private:
  TrackerConfig cfg_;
  std::vector<TrackState> tracks_;
  std::map<int, std::vector<TrackState>> history_;
  std::optional<Micros> last_t_;
  int next_id_ = 0;
};

// Centred moving average over positions and velocities; yaw is averaged as
// unit vectors. Windows shrink symmetrically at the ends.
std::vector<TrackState> smooth_trajectory(std::span<const TrackState> history, int window = 5);

struct EgoPose {
  Micros t = 0;
  RigidTransform world_from_camera;
};

struct TTCRecord {
  enum class Status { kValid, kUndefined, kBehindCamera };

  int id = 0;
  Micros t = 0;
  std::optional<double> ttc;  // s, present iff status is kValid
  double z_min = 0.0;         // m
  double v_rel = 0.0;         // m/s, positive closing
  Status status = Status::kValid;
};

// Per state: nearest box corner depth in the camera frame and the closing
// speed along the camera axis. Poses must cover every state timestamp; the
// ego velocity is differenced from the pose positions. A single pose means a
// static ego.
std::vector<TTCRecord> label_ttc(std::span<const TrackState> trajectory,
                                 std::span<const EgoPose> poses);

// JSON-lines I/O.
std::vector<Box3D> read_boxes_jsonl(const std::filesystem::path& path);
void write_boxes_jsonl(std::span<const Box3D> boxes, const std::filesystem::path& path);
std::vector<EgoPose> read_poses_jsonl(const std::filesystem::path& path);
void write_poses_jsonl(std::span<const EgoPose> poses, const std::filesystem::path& path);
std::vector<TTCRecord> read_ttc_jsonl(const std::filesystem::path& path);
void write_ttc_jsonl(std::span<const TTCRecord> records, const std::filesystem::path& path);

// Whole pipeline over a detection sequence: track, smooth, label.
std::vector<TTCRecord> annotate(std::span<const Box3D> detections, std::span<const EgoPose> poses,
                                const TrackerConfig& cfg = {}, int smoothing_window = 5);

}  // namespace loom
