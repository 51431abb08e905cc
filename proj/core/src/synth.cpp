#include "loom/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "loom/annotator.hpp"
#include "loom/error.hpp"
#include "loom/image_io.hpp"

namespace loom {

namespace {

constexpr int kMicroStepsPerFrame = 20;
constexpr int kBandMargin = 2;

// Fraction of the unit pixel centred at `x` covered by [lo, hi].
double coverage_1d(double x, double lo, double hi) {
  return std::max(0.0, std::min(x + 0.5, hi) - std::max(x - 0.5, lo));
}

void validate(const SceneSpec& s) {
  const auto fail = [](const char* why) { throw Error(ErrorCode::kDegenerateSpec, why); };
  if (!(s.initial_depth > 0.0)) fail("initial depth must be positive");
  if (!(s.object_width > 0.0 && s.object_height > 0.0 && s.object_length > 0.0)) fail("object size must be positive");
  if (!(s.contrast > 0.0) || !(s.background_intensity > 0.0)) fail("intensities must be positive");
  if (!(s.frame_rate > 0.0) || !(s.duration > 0.0)) fail("frame rate and duration must be positive");
  if (!(s.contrast_threshold > 0.0)) fail("contrast threshold must be positive");
  if (!(s.noise_rate >= 0.0) || !(s.pixel_jitter >= 0.0)) fail("noise parameters must be non-negative");
  if (s.sensor.width < 1 || s.sensor.height < 1) fail("sensor size must be positive");
  if (!(s.camera.fx > 0.0 && s.camera.fy > 0.0)) fail("focal lengths must be positive");
  if (s.velocity > 0.0 && !(s.duration * s.velocity < s.initial_depth)) {
    fail("object would reach the image plane within the duration");
  }
}

bool intersects_sensor(const RoiRect& r, SensorSize size) {
  return r.x0 + r.width > -0.5 && r.x0 < size.width - 0.5 && r.y0 + r.height > -0.5 &&
         r.y0 < size.height - 0.5;
}

struct Band {
  int x0, x1, y0, y1;  // inclusive pixel bounds
};

Band pixel_band(const SceneSpec& spec) {
  const RoiRect a = projected_rect(spec, 0.0);
  const RoiRect b = projected_rect(spec, spec.duration);
  const double lo_x = std::min(a.x0, b.x0);
  const double hi_x = std::max(a.x0 + a.width, b.x0 + b.width);
  const double lo_y = std::min(a.y0, b.y0);
  const double hi_y = std::max(a.y0 + a.height, b.y0 + b.height);
  return {std::max(0, static_cast<int>(std::floor(lo_x)) - kBandMargin),
          std::min(spec.sensor.width - 1, static_cast<int>(std::ceil(hi_x)) + kBandMargin),
          std::max(0, static_cast<int>(std::floor(lo_y)) - kBandMargin),
          std::min(spec.sensor.height - 1, static_cast<int>(std::ceil(hi_y)) + kBandMargin)};
}

// Log intensity inside the band at time t, row-major over the band.
void render_log_band(const SceneSpec& spec, const Band& band, double t, std::vector<double>& covx,
                     std::vector<double>& covy, std::vector<double>& out) {
  const RoiRect r = projected_rect(spec, t);
  const int bw = band.x1 - band.x0 + 1;
  const int bh = band.y1 - band.y0 + 1;
  covx.resize(bw);
  covy.resize(bh);
  for (int i = 0; i < bw; ++i) covx[i] = coverage_1d(band.x0 + i, r.x0, r.x0 + r.width);
  for (int j = 0; j < bh; ++j) covy[j] = coverage_1d(band.y0 + j, r.y0, r.y0 + r.height);
  out.resize(static_cast<std::size_t>(bw) * bh);
  const double gain = spec.contrast - 1.0;
  const double log_bg = std::log(spec.background_intensity);
  for (int j = 0; j < bh; ++j) {
    for (int i = 0; i < bw; ++i) {
      const double cov = covx[i] * covy[j];
      out[static_cast<std::size_t>(j) * bw + i] =
          cov == 0.0 ? log_bg : log_bg + std::log1p(gain * cov);
    }
  }
}

Micros to_micros(double seconds) { return static_cast<Micros>(std::llround(seconds * 1e6)); }

}  // namespace

Eigen::Matrix3d camera_to_world_rotation() {
  Eigen::Matrix3d r;
  // columns: camera x (right) -> -y, camera y (down) -> -z, camera z -> +x
  r << 0.0, 0.0, 1.0,
      -1.0, 0.0, 0.0,
      0.0, -1.0, 0.0;
  return r;
}

double analytic_depth(const SceneSpec& spec, double t) { return spec.initial_depth - spec.velocity * t; }

double analytic_ttc(const SceneSpec& spec, double t) {
  return (spec.initial_depth - spec.velocity * t) / spec.velocity;
}

double analytic_height(const SceneSpec& spec, double t) {
  return spec.camera.fy * spec.object_height / (spec.initial_depth - spec.velocity * t);
}

RoiRect projected_rect(const SceneSpec& spec, double t) {
  const double z = analytic_depth(spec, t);
  const auto& k = spec.camera;
  const double u0 = k.cx + k.fx * (spec.lateral_offset - 0.5 * spec.object_width) / z;
  const double u1 = k.cx + k.fx * (spec.lateral_offset + 0.5 * spec.object_width) / z;
  const double v0 = k.cy - k.fy * 0.5 * spec.object_height / z;
  const double v1 = k.cy + k.fy * 0.5 * spec.object_height / z;
  return {u0, v0, u1 - u0, v1 - v0};
}

SynthBundle generate(const SceneSpec& spec, std::uint64_t seed) {
  validate(spec);

  SynthBundle bundle;
  bundle.spec = spec;
  bundle.world_from_camera = RigidTransform(camera_to_world_rotation(), Eigen::Vector3d::Zero());
  bundle.object_velocity = Eigen::Vector3d(-spec.velocity, 0.0, 0.0);

  const int frame_count = static_cast<int>(std::floor(spec.duration * spec.frame_rate + 1e-9)) + 1;
  bool visible = false;
  for (int k = 0; k < frame_count; ++k) {
    visible = visible || intersects_sensor(projected_rect(spec, k / spec.frame_rate), spec.sensor);
  }
  if (!visible) throw Error(ErrorCode::kDegenerateSpec, "object is never inside the image");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> jitter(0.0, 1.0);

  // Signal events from log-intensity threshold crossings between micro-steps.
  const Band band = pixel_band(spec);
  const int bw = band.x1 - band.x0 + 1;
  std::vector<double> covx, covy, level, prev;
  render_log_band(spec, band, 0.0, covx, covy, prev);
  std::vector<double> reference = prev;

  const double step = 1.0 / (kMicroStepsPerFrame * spec.frame_rate);
  const int steps = static_cast<int>(std::ceil(spec.duration / step - 1e-9));
  const double c = spec.contrast_threshold;
  std::vector<Event> raw;
  for (int s = 1; s <= steps; ++s) {
    const double t_prev = (s - 1) * step;
    const double t_cur = std::min(s * step, spec.duration);
    render_log_band(spec, band, t_cur, covx, covy, level);
    for (std::size_t i = 0; i < level.size(); ++i) {
      const double l0 = prev[i];
      const double l1 = level[i];
      if (l1 == l0) continue;
      const auto x = static_cast<std::uint16_t>(band.x0 + static_cast<int>(i % bw));
      const auto y = static_cast<std::uint16_t>(band.y0 + static_cast<int>(i / bw));
      while (l1 - reference[i] >= c || reference[i] - l1 >= c) {
        const std::int8_t p = l1 > reference[i] ? 1 : -1;
        reference[i] += p * c;
        const double frac = (reference[i] - l0) / (l1 - l0);
        raw.push_back({x, y, to_micros(t_prev + frac * (t_cur - t_prev)), p});
      }
    }
    prev.swap(level);
  }
  bundle.signal_event_count = raw.size();

  if (spec.pixel_jitter > 0.0) {
    for (auto& e : raw) {
      const double jx = std::round(e.x + spec.pixel_jitter * jitter(rng));
      const double jy = std::round(e.y + spec.pixel_jitter * jitter(rng));
      e.x = static_cast<std::uint16_t>(std::clamp(jx, 0.0, spec.sensor.width - 1.0));
      e.y = static_cast<std::uint16_t>(std::clamp(jy, 0.0, spec.sensor.height - 1.0));
    }
  }

  if (spec.noise_rate > 0.0) {
    const double mean = spec.noise_rate * spec.sensor.width * spec.sensor.height * spec.duration;
    const auto count = std::poisson_distribution<long>(mean)(rng);
    std::uniform_int_distribution<int> ux(0, spec.sensor.width - 1);
    std::uniform_int_distribution<int> uy(0, spec.sensor.height - 1);
    std::uniform_real_distribution<double> ut(0.0, spec.duration);
    std::bernoulli_distribution up(0.5);
    for (long i = 0; i < count; ++i) {
      const auto x = static_cast<std::uint16_t>(ux(rng));
      const auto y = static_cast<std::uint16_t>(uy(rng));
      const Micros t = std::min(to_micros(ut(rng)), to_micros(spec.duration));
      raw.push_back({x, y, t, static_cast<std::int8_t>(up(rng) ? 1 : -1)});
    }
  }

  std::stable_sort(raw.begin(), raw.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
  bundle.events = EventStream(spec.sensor, std::move(raw));

  // Frames, labels and closed-form references at each frame time.
  const double gain = spec.contrast - 1.0;
  for (int k = 0; k < frame_count; ++k) {
    const double t = k / spec.frame_rate;
    const RoiRect r = projected_rect(spec, t);
    Grid2D image(spec.sensor.width, spec.sensor.height, 1, spec.background_intensity);
    for (int y = band.y0; y <= band.y1; ++y) {
      const double cy = coverage_1d(y, r.y0, r.y0 + r.height);
      if (cy == 0.0) continue;
      for (int x = band.x0; x <= band.x1; ++x) {
        const double cov = cy * coverage_1d(x, r.x0, r.x0 + r.width);
        image.at(x, y) = spec.background_intensity * (1.0 + gain * cov);
      }
    }
    bundle.frames.push_back({to_micros(t), std::move(image)});

    const double z = analytic_depth(spec, t);
    Box3D box;
    box.center = {z + 0.5 * spec.object_length, -spec.lateral_offset, 0.0};
    box.length = spec.object_length;
    box.width = spec.object_width;
    box.height = spec.object_height;
    box.yaw = 0.0;
    box.t = to_micros(t);
    box.id = 0;
    bundle.boxes.push_back(box);
    bundle.ttc.push_back(analytic_ttc(spec, t));
    bundle.pixel_height.push_back(analytic_height(spec, t));
  }
  return bundle;
}

void write_bundle(const SynthBundle& bundle, const std::filesystem::path& dir, int object_id) {
  std::filesystem::create_directories(dir);
  write_events_binary(bundle.events, dir / "events.bin");

  std::vector<Box3D> boxes = bundle.boxes;
  std::vector<EgoPose> poses;
  std::vector<TTCRecord> labels;
  for (std::size_t k = 0; k < bundle.frames.size(); ++k) {
    const auto& f = bundle.frames[k];
    char name[32];
    std::snprintf(name, sizeof name, "frame_%03zu.pgm", k);
    write_pgm(f.image, dir / name);
    boxes[k].id = object_id;
    poses.push_back({f.t, bundle.world_from_camera});
    TTCRecord rec{object_id, f.t, bundle.ttc[k], analytic_depth(bundle.spec, f.t * 1e-6), bundle.spec.velocity,
                  TTCRecord::Status::kValid};
    if (!std::isfinite(bundle.ttc[k])) {
      rec.ttc.reset();
      rec.status = TTCRecord::Status::kUndefined;
    }
    labels.push_back(rec);
  }
  write_boxes_jsonl(boxes, dir / "boxes.jsonl");
  write_poses_jsonl(poses, dir / "poses.jsonl");
  write_ttc_jsonl(labels, dir / "ttc.jsonl");
}

std::vector<SceneSpec> benchmark_ladder() {
  // HD sensor with a 1645 px focal length; every scene puts the object 10 m
  // away at t = 0.2 s, so only the closing speed differs across the ladder.
  constexpr double kReferenceTime = 0.2;
  constexpr double kReferenceDepth = 10.0;
  std::vector<SceneSpec> ladder;
  for (double tau : kLadderTtc) {
    SceneSpec s;
    s.camera = {1645.0, 1645.0, 640.0, 360.0, {}};
    s.sensor = {1280, 720};
    s.velocity = kReferenceDepth / (tau - kReferenceTime);
    s.initial_depth = s.velocity * tau;
    ladder.push_back(s);
  }
  return ladder;
}

}  // namespace loom
