#include "loom/annotator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <Eigen/Cholesky>
#include <nlohmann/json.hpp>

#include "loom/error.hpp"
#include "loom/ttc_geometry.hpp"

namespace loom {

namespace {

using json = nlohmann::json;
using MeasurementMatrix = Eigen::Matrix<double, 7, 11>;

MeasurementMatrix measurement_matrix() {
  MeasurementMatrix h = MeasurementMatrix::Zero();
  h.leftCols<7>().setIdentity();
  return h;
}

Eigen::Matrix<double, 7, 1> measurement_of(const Box3D& b) {
  Eigen::Matrix<double, 7, 1> z;
  z << b.center.x(), b.center.y(), b.center.z(), wrap_angle(b.yaw), b.length, b.width, b.height;
  return z;
}

void symmetrize(StateCovariance& p) { p = 0.5 * (p + p.transpose()).eval(); }

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  return out;
}

// Calls `fn(json, line_number)` for every non-blank line.
template <typename Fn>
void for_each_jsonl(const std::filesystem::path& path, Fn fn) {
  auto in = open_in(path);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line), n);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kMalformedRecord, path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

Eigen::Vector3d vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::kMalformedRecord, "expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

const EgoPose& pose_at(std::span<const EgoPose> poses, Micros t) {
  const auto it = std::lower_bound(poses.begin(), poses.end(), t,
                                   [](const EgoPose& p, Micros v) { return p.t < v; });
  if (it == poses.end() || it->t != t) {
    throw Error(ErrorCode::kInvalidArgument, "no ego pose at t_us=" + std::to_string(t));
  }
  return *it;
}

Eigen::Vector3d ego_velocity(std::span<const EgoPose> poses, Micros t) {
  if (poses.size() < 2) return Eigen::Vector3d::Zero();
  const auto idx = static_cast<std::size_t>(&pose_at(poses, t) - poses.data());
  const std::size_t a = idx == 0 ? 0 : idx - 1;
  const std::size_t b = idx + 1 == poses.size() ? idx : idx + 1;
  const double dt = 1e-6 * static_cast<double>(poses[b].t - poses[a].t);
  return (poses[b].world_from_camera.translation() - poses[a].world_from_camera.translation()) / dt;
}

}  // namespace

StateCovariance TrackerConfig::process_noise() const {
  StateVector d;
  d << q_position, q_position, q_position, q_yaw, q_size, q_size, q_size, q_velocity, q_velocity,
      q_velocity, q_yaw_rate;
  return d.asDiagonal();
}

Eigen::Matrix<double, 7, 7> TrackerConfig::measurement_noise() const {
  Eigen::Matrix<double, 7, 1> d;
  d << r_position, r_position, r_position, r_yaw, r_size, r_size, r_size;
  return d.asDiagonal();
}

Box3D TrackState::box() const {
  Box3D b;
  b.center = position();
  b.yaw = x(kYaw);
  b.length = x(kL);
  b.width = x(kW);
  b.height = x(kH);
  b.category = category;
  b.t = t;
  b.id = id;
  return b;
}

TrackState track_from_detection(const Box3D& det, int id, const TrackerConfig& cfg) {
  TrackState s;
  s.x.head<7>() = measurement_of(det);
  s.P.setZero();
  s.P.topLeftCorner<7, 7>() = cfg.measurement_noise();
  s.P(kVx, kVx) = s.P(kVy, kVy) = s.P(kVz, kVz) = cfg.init_velocity_var;
  s.P(kVyaw, kVyaw) = cfg.init_yaw_rate_var;
  s.id = id;
  s.hit_count = 1;
  s.category = det.category;
  s.t = det.t;
  return s;
}

TrackState predict(const TrackState& track, double dt, const TrackerConfig& cfg) {
  if (!(dt > 0.0)) throw Error(ErrorCode::kInvalidArgument, "dt must be positive");
  StateCovariance f = StateCovariance::Identity();
  f(kX, kVx) = f(kY, kVy) = f(kZ, kVz) = f(kYaw, kVyaw) = dt;

  TrackState out = track;
  out.x = f * track.x;
  out.x(kYaw) = wrap_angle(out.x(kYaw));
  out.P = f * track.P * f.transpose() + cfg.process_noise();
  symmetrize(out.P);
  out.age = track.age + 1;
  out.t = track.t + static_cast<Micros>(std::llround(dt * 1e6));
  return out;
}

TrackState update(const TrackState& track, const Box3D& detection, const TrackerConfig& cfg) {
  const MeasurementMatrix h = measurement_matrix();
  Eigen::Matrix<double, 7, 1> y = measurement_of(detection) - h * track.x;
  y(3) = wrap_angle(y(3));

  const Eigen::Matrix<double, 7, 7> s = h * track.P * h.transpose() + cfg.measurement_noise();
  const Eigen::LLT<Eigen::Matrix<double, 7, 7>> llt(s);
  if (llt.info() != Eigen::Success || !s.allFinite()) {
    throw Error(ErrorCode::kSingularInnovationCovariance, "innovation covariance is not positive definite");
  }
  const Eigen::Matrix<double, 11, 7> k = llt.solve(h * track.P).transpose();

  TrackState out = track;
  out.x = track.x + k * y;
  out.x(kYaw) = wrap_angle(out.x(kYaw));
  // Joseph form keeps P symmetric positive semi-definite.
  const StateCovariance a = StateCovariance::Identity() - k * h;
  out.P = a * track.P * a.transpose() + k * cfg.measurement_noise() * k.transpose();
  symmetrize(out.P);
  out.hit_count = track.hit_count + 1;
  out.time_since_update = 0;
  out.t = detection.t;
  return out;
}

std::vector<int> hungarian(const Eigen::MatrixXd& cost) {
  const int rows = static_cast<int>(cost.rows());
  const int cols = static_cast<int>(cost.cols());
  if (rows == 0 || cols == 0) return std::vector<int>(rows, -1);
  if (rows > cols) {
    const std::vector<int> t = hungarian(cost.transpose());
    std::vector<int> out(rows, -1);
    for (int c = 0; c < cols; ++c) {
      if (t[c] >= 0) out[t[c]] = c;
    }
    return out;
  }

  // Shortest augmenting path with potentials, 1-based, rows <= cols.
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(rows + 1, 0.0), v(cols + 1, 0.0);
  std::vector<int> p(cols + 1, 0), way(cols + 1, 0);
  for (int i = 1; i <= rows; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(cols + 1, inf);
    std::vector<char> used(cols + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= cols; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= cols; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> out(rows, -1);
  for (int j = 1; j <= cols; ++j) {
    if (p[j] != 0) out[p[j] - 1] = j - 1;
  }
  return out;
}

Association associate(std::span<const TrackState> tracks, std::span<const Box3D> detections,
                      double iou_gate) {
  const auto nt = static_cast<int>(tracks.size());
  const auto nd = static_cast<int>(detections.size());
  Eigen::MatrixXd iou(nt, nd);
  for (int i = 0; i < nt; ++i) {
    const Box3D tb = tracks[i].box();
    for (int j = 0; j < nd; ++j) iou(i, j) = bev_iou(tb, detections[j]);
  }
  const std::vector<int> assign = hungarian(Eigen::MatrixXd::Ones(nt, nd) - iou);

  Association out;
  std::vector<char> det_used(nd, 0);
  for (int i = 0; i < nt; ++i) {
    const int j = assign[i];
    if (j >= 0 && iou(i, j) >= iou_gate) {
      out.matches.emplace_back(i, j);
      det_used[j] = 1;
    } else {
      out.unmatched_tracks.push_back(i);
    }
  }
  for (int j = 0; j < nd; ++j) {
    if (!det_used[j]) out.unmatched_detections.push_back(j);
  }
  return out;
}

void Tracker::step(std::span<const Box3D> detections, Micros t) {
  if (last_t_) {
    if (t <= *last_t_) throw Error(ErrorCode::kNonMonotonicTime, "tracker frames must advance in time");
    const double dt = 1e-6 * static_cast<double>(t - *last_t_);
    for (auto& tr : tracks_) tr = predict(tr, dt, cfg_);
  }
  last_t_ = t;

  std::vector<Box3D> dets(detections.begin(), detections.end());
  for (auto& d : dets) d.t = t;
  const Association a = associate(tracks_, dets, cfg_.iou_gate);

  for (const auto& [ti, di] : a.matches) tracks_[ti] = update(tracks_[ti], dets[di], cfg_);
  for (int ti : a.unmatched_tracks) ++tracks_[ti].time_since_update;
  for (int di : a.unmatched_detections) tracks_.push_back(track_from_detection(dets[di], next_id_++, cfg_));

  std::erase_if(tracks_, [this](const TrackState& tr) { return tr.time_since_update > cfg_.max_age; });
  for (const auto& tr : tracks_) {
    if (tr.time_since_update == 0) history_[tr.id].push_back(tr);
  }
}

std::vector<TrackState> Tracker::confirmed_tracks() const {
  std::vector<TrackState> out;
  for (const auto& tr : tracks_) {
    if (tr.hit_count >= cfg_.min_hits) out.push_back(tr);
  }
  return out;
}

std::map<int, std::vector<TrackState>> Tracker::histories() const {
  std::map<int, std::vector<TrackState>> out;
  for (const auto& [id, states] : history_) {
    if (states.back().hit_count >= cfg_.min_hits) out.emplace(id, states);
  }
  return out;
}

std::vector<TrackState> smooth_trajectory(std::span<const TrackState> history, int window) {
  if (history.empty()) throw Error(ErrorCode::kInvalidArgument, "empty trajectory");
  if (window < 1) throw Error(ErrorCode::kInvalidArgument, "window must be >= 1");
  const int n = static_cast<int>(history.size());
  const int half = window / 2;
  std::vector<TrackState> out(history.begin(), history.end());
  for (int i = 0; i < n; ++i) {
    const int r = std::min({half, i, n - 1 - i});
    Eigen::Vector3d pos = Eigen::Vector3d::Zero();
    Eigen::Vector3d vel = Eigen::Vector3d::Zero();
    double c = 0.0, s = 0.0;
    for (int k = i - r; k <= i + r; ++k) {
      pos += history[k].position();
      vel += history[k].velocity();
      c += std::cos(history[k].x(kYaw));
      s += std::sin(history[k].x(kYaw));
    }
    const double m = 2.0 * r + 1.0;
    out[i].x.head<3>() = pos / m;
    out[i].x.segment<3>(kVx) = vel / m;
    if (r > 0) out[i].x(kYaw) = wrap_angle(std::atan2(s, c));
  }
  return out;
}

std::vector<TTCRecord> label_ttc(std::span<const TrackState> trajectory, std::span<const EgoPose> poses) {
  std::vector<EgoPose> sorted(poses.begin(), poses.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const EgoPose& a, const EgoPose& b) { return a.t < b.t; });

  std::vector<TTCRecord> out;
  out.reserve(trajectory.size());
  for (const auto& st : trajectory) {
    const EgoPose& pose = pose_at(sorted, st.t);
    const RigidTransform cam_from_world = pose.world_from_camera.inverse();

    TTCRecord rec;
    rec.id = st.id;
    rec.t = st.t;
    rec.z_min = std::numeric_limits<double>::infinity();
    for (const auto& corner : st.box().corners()) {
      rec.z_min = std::min(rec.z_min, cam_from_world.apply(corner).z());
    }
    const Eigen::Vector3d rel_world = ego_velocity(sorted, st.t) - st.velocity();
    rec.v_rel = (cam_from_world.rotation() * rel_world).z();

    if (!(rec.z_min > 0.0)) {
      rec.status = TTCRecord::Status::kBehindCamera;
    } else {
      try {
        rec.ttc = ttc_from_depth_speed(rec.z_min, rec.v_rel);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kUndefinedTtc) throw;
        rec.status = TTCRecord::Status::kUndefined;
      }
    }
    out.push_back(rec);
  }
  return out;
}

std::vector<TTCRecord> annotate(std::span<const Box3D> detections, std::span<const EgoPose> poses,
                                const TrackerConfig& cfg, int smoothing_window) {
  std::vector<Box3D> dets(detections.begin(), detections.end());
  std::stable_sort(dets.begin(), dets.end(), [](const Box3D& a, const Box3D& b) { return a.t < b.t; });

  Tracker tracker(cfg);
  for (std::size_t i = 0; i < dets.size();) {
    std::size_t j = i;
    while (j < dets.size() && dets[j].t == dets[i].t) ++j;
    tracker.step(std::span(dets).subspan(i, j - i), dets[i].t);
    i = j;
  }

  std::vector<TTCRecord> out;
  for (const auto& [id, states] : tracker.histories()) {
    const auto smooth = smooth_trajectory(states, smoothing_window);
    const auto labels = label_ttc(smooth, poses);
    out.insert(out.end(), labels.begin(), labels.end());
  }
  return out;
}

std::vector<Box3D> read_boxes_jsonl(const std::filesystem::path& path) {
  std::vector<Box3D> out;
  for_each_jsonl(path, [&](const json& j, int line) {
    Box3D b;
    b.t = j.at("t_us").get<Micros>();
    if (j.contains("id") && !j["id"].is_null()) b.id = j["id"].get<int>();
    b.category = j.value("category", std::string("car"));
    b.center = vec3(j.at("center"));
    const Eigen::Vector3d size = vec3(j.at("size"));
    b.length = size.x();
    b.width = size.y();
    b.height = size.z();
    b.yaw = wrap_angle(j.at("yaw").get<double>());
    if (j.contains("score") && !j["score"].is_null()) b.score = j["score"].get<double>();
    if (!(b.length > 0.0 && b.width > 0.0 && b.height > 0.0)) {
      throw Error(ErrorCode::kMalformedRecord, path.string() + ":" + std::to_string(line) + ": box size must be positive");
    }
    out.push_back(std::move(b));
  });
  return out;
}

void write_boxes_jsonl(std::span<const Box3D> boxes, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const auto& b : boxes) {
    json j;
    j["t_us"] = b.t;
    if (b.id) j["id"] = *b.id;
    j["category"] = b.category;
    j["center"] = {b.center.x(), b.center.y(), b.center.z()};
    j["size"] = {b.length, b.width, b.height};
    j["yaw"] = b.yaw;
    if (b.score) j["score"] = *b.score;
    out << j.dump() << '\n';
  }
}

std::vector<EgoPose> read_poses_jsonl(const std::filesystem::path& path) {
  std::vector<EgoPose> out;
  for_each_jsonl(path, [&](const json& j, int) {
    const auto& r = j.at("rotation");
    if (!r.is_array() || r.size() != 9) throw Error(ErrorCode::kMalformedRecord, "rotation needs 9 values");
    Eigen::Matrix3d rot;
    for (int i = 0; i < 9; ++i) rot(i / 3, i % 3) = r[i].get<double>();
    out.push_back({j.at("t_us").get<Micros>(), RigidTransform(rot, vec3(j.at("translation")))});
  });
  return out;
}

void write_poses_jsonl(std::span<const EgoPose> poses, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const auto& p : poses) {
    json j;
    j["t_us"] = p.t;
    const auto& r = p.world_from_camera.rotation();
    j["rotation"] = json::array();
    for (int i = 0; i < 9; ++i) j["rotation"].push_back(r(i / 3, i % 3));
    const auto& t = p.world_from_camera.translation();
    j["translation"] = {t.x(), t.y(), t.z()};
    out << j.dump() << '\n';
  }
}

std::vector<TTCRecord> read_ttc_jsonl(const std::filesystem::path& path) {
  std::vector<TTCRecord> out;
  for_each_jsonl(path, [&](const json& j, int) {
    TTCRecord r;
    r.t = j.at("t_us").get<Micros>();
    r.id = j.value("id", 0);
    r.z_min = j.value("z_min", 0.0);
    r.v_rel = j.value("v_rel", 0.0);
    const auto& v = j.at("ttc_s");
    if (v.is_number()) {
      r.ttc = v.get<double>();
    } else {
      r.status = j.value("status", std::string()) == "behind_camera" ? TTCRecord::Status::kBehindCamera
                                                                    : TTCRecord::Status::kUndefined;
    }
    out.push_back(r);
  });
  return out;
}

void write_ttc_jsonl(std::span<const TTCRecord> records, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const auto& r : records) {
    json j;
    j["t_us"] = r.t;
    j["id"] = r.id;
    if (r.ttc) {
      j["ttc_s"] = *r.ttc;
    } else {
      j["ttc_s"] = "undefined";
    }
    j["z_min"] = r.z_min;
    j["v_rel"] = r.v_rel;
    if (r.status == TTCRecord::Status::kBehindCamera) j["status"] = "behind_camera";
    out << j.dump() << '\n';
  }
}

}  // namespace loom
