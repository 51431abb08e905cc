// loom: command-line driver for the looming/TTC toolkit.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "loom/annotator.hpp"
#include "loom/error.hpp"
#include "loom/estimators.hpp"
#include "loom/event_core.hpp"
#include "loom/image_io.hpp"
#include "loom/metrics.hpp"
#include "loom/synth.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace loom;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;

struct Globals {
  std::uint64_t seed = 0;
  double dt = 0.1;
  std::string mode = "events";
  int roi_size = 128;
  std::string out;
};

// Outputs written so far; removed again when the command fails.
std::vector<fs::path> g_outputs;

fs::path claim_output(const fs::path& p) {
  g_outputs.push_back(p);
  return p;
}

void remove_outputs() {
  std::error_code ec;
  for (auto it = g_outputs.rbegin(); it != g_outputs.rend(); ++it) fs::remove_all(*it, ec);
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord, path.string() + ": " + e.what());
  }
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kMalformedRecord, path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(claim_output(path), std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path q(p);
  return q.is_absolute() ? q : base / q;
}

void require_out(const Globals& g) {
  if (g.out.empty()) throw Error(ErrorCode::kInvalidArgument, "--out is required");
}

// ---- ingest ---------------------------------------------------------------

struct IngestArgs {
  std::string in;
  int width = 0;
  int height = 0;
};

void run_ingest(const IngestArgs& a, const Globals& g) {
  require_out(g);
  std::optional<SensorSize> size;
  if (a.width > 0 && a.height > 0) size = SensorSize{a.width, a.height};
  const EventStream s = ingest_events(a.in, size);
  write_events_binary(s, claim_output(g.out));
  std::cout << json{{"events", s.size()},
                    {"triggers", s.trigger_marks().size()},
                    {"partial", s.partial()},
                    {"width", s.sensor_size().width},
                    {"height", s.sensor_size().height}}
                   .dump()
            << '\n';
}

// ---- sync -----------------------------------------------------------------

void run_sync(const std::string& manifest_path, const Globals& g) {
  require_out(g);
  const json m = read_json(manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  const EventStream s = ingest_events(resolve(base, m.at("events").get<std::string>()));

  std::vector<std::string> names;
  std::size_t frame_count = 0;
  if (m.at("frames").is_array()) {
    names = m["frames"].get<std::vector<std::string>>();
    frame_count = names.size();
  } else {
    frame_count = m["frames"].get<std::size_t>();
  }
  std::optional<std::size_t> offset;
  if (m.contains("offset")) offset = m["offset"].get<std::size_t>();

  const auto stamps = remap_clock(frame_count, s.trigger_marks(), offset);
  json out = json::array();
  for (std::size_t i = 0; i < stamps.size(); ++i) {
    json f = {{"index", i}, {"t_us", stamps[i]}};
    if (!names.empty()) f["frame"] = names[i];
    out.push_back(f);
  }
  write_text(g.out, json{{"frames", out}, {"partial", s.partial()}}.dump(2) + "\n");
}

// ---- synth ----------------------------------------------------------------

SceneSpec scene_from_json(const json& j) {
  SceneSpec s;
  s.object_width = j.value("object_width", s.object_width);
  s.object_height = j.value("object_height", s.object_height);
  s.object_length = j.value("object_length", s.object_length);
  s.contrast = j.value("contrast", s.contrast);
  s.background_intensity = j.value("background_intensity", s.background_intensity);
  s.initial_depth = j.value("initial_depth", s.initial_depth);
  s.velocity = j.value("velocity", s.velocity);
  s.lateral_offset = j.value("lateral_offset", s.lateral_offset);
  s.frame_rate = j.value("frame_rate", s.frame_rate);
  s.contrast_threshold = j.value("contrast_threshold", s.contrast_threshold);
  s.duration = j.value("duration", s.duration);
  s.noise_rate = j.value("noise_rate", s.noise_rate);
  s.pixel_jitter = j.value("pixel_jitter", s.pixel_jitter);
  if (j.contains("camera")) {
    const auto& c = j["camera"];
    s.camera.fx = c.value("fx", s.camera.fx);
    s.camera.fy = c.value("fy", s.camera.fy);
    s.camera.cx = c.value("cx", s.camera.cx);
    s.camera.cy = c.value("cy", s.camera.cy);
  }
  if (j.contains("sensor")) {
    const auto wh = j["sensor"].get<std::vector<int>>();
    if (wh.size() != 2) throw Error(ErrorCode::kInvalidArgument, "sensor must be [width, height]");
    s.sensor = {wh[0], wh[1]};
  }
  return s;
}

// One estimation sample per pair of frames dt apart whose event windows fit
// inside the recording.
void add_samples(const SynthBundle& b, const fs::path& rel, int id, double dt, json& samples,
                 std::vector<TTCRecord>& labels) {
  const auto us = [](double s) { return static_cast<Micros>(std::llround(s * 1e6)); };
  const Micros half = us(0.5 * dt);
  const Micros end = us(b.spec.duration);
  for (std::size_t k = 0; k < b.frames.size(); ++k) {
    const Micros t_prev = b.frames[k].t;
    const Micros t_cur = t_prev + us(dt);
    if (t_prev - half < 0 || t_cur + half > end) continue;
    const auto cur = std::find_if(b.frames.begin(), b.frames.end(), [&](const SynthFrame& f) { return f.t == t_cur; });
    const RoiRect box = projected_rect(b.spec, t_cur * 1e-6);
    json s = {{"id", id},
              {"events", (rel / "events.bin").generic_string()},
              {"t_prev_us", t_prev},
              {"t_cur_us", t_cur},
              {"box", {box.x0, box.y0, box.width, box.height}}};
    if (cur != b.frames.end()) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%03zu.pgm", k);
      s["frame_prev"] = (rel / name).generic_string();
      std::snprintf(name, sizeof name, "frame_%03zu.pgm", static_cast<std::size_t>(cur - b.frames.begin()));
      s["frame_cur"] = (rel / name).generic_string();
    }
    samples.push_back(s);
    labels.push_back({id, t_prev, analytic_ttc(b.spec, t_prev * 1e-6), analytic_depth(b.spec, t_prev * 1e-6),
                      b.spec.velocity, TTCRecord::Status::kValid});
  }
}

void run_synth(bool ladder, const std::string& spec_path, const Globals& g) {
  require_out(g);
  std::vector<SceneSpec> specs;
  if (ladder) {
    specs = benchmark_ladder();
  } else {
    if (spec_path.empty()) throw Error(ErrorCode::kInvalidArgument, "synth needs --ladder or --spec");
    specs.push_back(scene_from_json(read_json(spec_path)));
  }

  const fs::path out(g.out);
  const bool existed = fs::exists(out);
  fs::create_directories(out);
  if (!existed) claim_output(out);

  json samples = json::array();
  std::vector<TTCRecord> labels;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "scene_%02zu", i);
    const SynthBundle b = generate(specs[i], g.seed + i);
    write_bundle(b, claim_output(out / name), static_cast<int>(i));
    add_samples(b, name, static_cast<int>(i), g.dt, samples, labels);
  }
  std::string manifest;
  for (const auto& sample : samples) manifest += sample.dump() + "\n";
  write_text(out / "manifest.jsonl", manifest);
  write_ttc_jsonl(labels, claim_output(out / "labels.jsonl"));
  std::cout << json{{"scenes", specs.size()}, {"samples", samples.size()}}.dump() << '\n';
}

// ---- annotate -------------------------------------------------------------

struct AnnotateArgs {
  std::string detections;
  std::string poses;
  int window = 5;
  TrackerConfig tracker;
};

void run_annotate(const AnnotateArgs& a, const Globals& g) {
  require_out(g);
  const auto dets = read_boxes_jsonl(a.detections);
  const auto poses = read_poses_jsonl(a.poses);
  const auto labels = annotate(dets, poses, a.tracker, a.window);
  write_ttc_jsonl(labels, claim_output(g.out));
  std::cout << json{{"detections", dets.size()}, {"labels", labels.size()}}.dump() << '\n';
}

// ---- estimate -------------------------------------------------------------

struct EstimateArgs {
  std::string manifest;
  int bins = 5;
  int benchmark = 0;
};

RoiRect box_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 4) throw Error(ErrorCode::kInvalidArgument, "box must be [x0, y0, width, height]");
  return {v[0], v[1], v[2], v[3]};
}

// Times the events estimator on one observation, with and without the
// voxelization that precedes it. Rates are medians over five batches.
json benchmark_events(const EventStream& events, Micros t_prev, Micros t_cur, const RoiRect& roi,
                      const ObservationOptions& opts, int n) {
  using clock = std::chrono::steady_clock;
  constexpr int kBatches = 5;
  const int per_batch = std::max(1, n / kBatches);
  const RoiObservation obs = make_observation(events, t_prev, t_cur, roi, opts);
  double sink = estimate_ttc(obs, EstimatorMode::kEvents).ttc;  // warm-up

  const auto median_rate = [&](auto&& body) {
    std::vector<double> rates;
    for (int k = 0; k < kBatches; ++k) {
      const auto t0 = clock::now();
      for (int i = 0; i < per_batch; ++i) sink += body();
      rates.push_back(per_batch / std::chrono::duration<double>(clock::now() - t0).count());
    }
    std::sort(rates.begin(), rates.end());
    return rates[kBatches / 2];
  };
  const double est = median_rate([&] { return estimate_ttc(obs, EstimatorMode::kEvents).ttc; });
  const double full = median_rate([&] {
    return estimate_ttc(make_observation(events, t_prev, t_cur, roi, opts), EstimatorMode::kEvents).ttc;
  });

  return {{"n", per_batch * kBatches},
          {"roi_size", opts.roi_size},
          {"bins", opts.bins},
          {"estimator_roi_per_s", est},
          {"estimator_ms_per_roi", 1e3 / est},
          {"with_voxelization_roi_per_s", full},
          {"with_voxelization_ms_per_roi", 1e3 / full},
          {"mean_ttc_s", sink / (2 * per_batch * kBatches + 1)}};
}

void run_estimate(const EstimateArgs& a, const Globals& g) {
  const EstimatorMode mode = parse_mode(g.mode);
  ObservationOptions opts;
  opts.roi_size = g.roi_size;
  opts.bins = a.bins;
  opts.window = g.dt;

  if (a.benchmark > 0 && a.manifest.empty()) {
    // Built-in scene: the ladder's 2 s rung.
    const SceneSpec spec = benchmark_ladder()[2];
    const SynthBundle b = generate(spec, g.seed);
    const RoiRect roi = square_roi(projected_rect(spec, 0.2));
    std::cout << benchmark_events(b.events, 100000, 200000, roi, opts, a.benchmark).dump() << '\n';
    return;
  }
  if (a.manifest.empty()) throw Error(ErrorCode::kInvalidArgument, "estimate needs --manifest");

  const std::vector<json> samples = read_jsonl(a.manifest);
  if (samples.empty()) throw Error(ErrorCode::kInvalidArgument, a.manifest + " holds no samples");
  const fs::path base = fs::path(a.manifest).parent_path();
  std::map<fs::path, EventStream> streams;
  const auto stream = [&](const fs::path& p) -> const EventStream& {
    auto it = streams.find(p);
    if (it == streams.end()) it = streams.emplace(p, ingest_events(p)).first;
    return it->second;
  };

  if (a.benchmark > 0) {
    const json& s = samples.front();
    const RoiRect roi = square_roi(box_from_json(s.at("box")));
    std::cout << benchmark_events(stream(resolve(base, s.at("events"))), s.at("t_prev_us"), s.at("t_cur_us"), roi,
                                  opts, a.benchmark)
                     .dump()
              << '\n';
    return;
  }

  require_out(g);
  std::ostringstream lines;
  std::size_t failed = 0;
  for (const json& s : samples) {
    const Micros t_prev = s.at("t_prev_us");
    const Micros t_cur = s.at("t_cur_us");
    const RoiRect roi = square_roi(box_from_json(s.at("box")));
    std::optional<Grid2D> f_prev, f_cur;
    if (mode != EstimatorMode::kEvents && s.contains("frame_prev") && s.contains("frame_cur")) {
      f_prev = read_pgm(resolve(base, s["frame_prev"]));
      f_cur = read_pgm(resolve(base, s["frame_cur"]));
    }
    const RoiObservation obs =
        make_observation(stream(resolve(base, s.at("events"))), t_prev, t_cur, roi, opts,
                         f_prev ? &*f_prev : nullptr, f_cur ? &*f_cur : nullptr);
    json rec = {{"t_us", t_prev}, {"id", s.value("id", 0)}};
    try {
      const TtcEstimate e = estimate_ttc(obs, mode);
      rec["ttc_s"] = e.ttc;
      rec["height_ratio"] = e.height_ratio;
      rec["confidence"] = e.confidence;
      rec["method"] = e.method;
    } catch (const Error& e) {
      if (!is_numeric_failure(e.code())) throw;
      ++failed;
      rec["ttc_s"] = "undefined";
      rec["error"] = to_string(e.code());
    }
    lines << rec.dump() << '\n';
  }
  write_text(g.out, lines.str());
  std::cout << json{{"samples", samples.size()}, {"failed", failed}, {"mode", to_string(mode)}}.dump()
            << '\n';
}

// ---- evaluate -------------------------------------------------------------

struct EvaluateArgs {
  std::string pred;
  std::string gt;
  std::string pred_boxes;
  std::string gt_boxes;
};

void run_evaluate(const EvaluateArgs& a, const Globals& g) {
  require_out(g);
  MetricsReport report;
  std::ostringstream records_csv;
  records_csv << "id,t_us,pred_ttc_s,gt_ttc_s\n";

  if (!a.pred.empty() || !a.gt.empty()) {
    if (a.pred.empty() || a.gt.empty()) throw Error(ErrorCode::kInvalidArgument, "--pred and --gt go together");
    std::map<std::pair<int, Micros>, double> preds;
    for (const auto& r : read_ttc_jsonl(a.pred)) preds[{r.id, r.t}] = r.ttc.value_or(std::nan(""));

    std::vector<TTCRecord> gts = read_ttc_jsonl(a.gt);
    std::stable_sort(gts.begin(), gts.end(),
                     [](const TTCRecord& x, const TTCRecord& y) { return std::pair(x.id, x.t) < std::pair(y.id, y.t); });
    std::vector<TtcPair> pairs;
    for (const auto& r : gts) {
      if (!r.ttc) continue;
      const auto it = preds.find({r.id, r.t});
      const double p = it == preds.end() ? std::nan("") : it->second;
      pairs.push_back({p, *r.ttc});
      records_csv << r.id << ',' << r.t << ',' << (std::isfinite(p) ? json(p).dump() : "") << ','
                  << json(*r.ttc).dump() << '\n';
    }
    TtcEvalConfig cfg;
    cfg.dt = g.dt;
    report.ttc = aggregate(pairs, cfg);
  }
  if (!a.pred_boxes.empty() || !a.gt_boxes.empty()) {
    if (a.pred_boxes.empty() || a.gt_boxes.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "--pred-boxes and --gt-boxes go together");
    }
    report.detection = evaluate_detections(read_boxes_jsonl(a.pred_boxes), read_boxes_jsonl(a.gt_boxes));
  }
  if (!report.ttc && !report.detection) throw Error(ErrorCode::kInvalidArgument, "nothing to evaluate");

  const fs::path out(g.out);
  fs::path stem = out;
  stem.replace_extension();
  const std::string text = to_json(report);
  write_text(out, text + "\n");
  write_text(stem.string() + ".csv", to_csv(report));
  if (report.ttc) write_text(stem.string() + ".records.csv", records_csv.str());
  std::cout << text << '\n';
}

// ---- report ---------------------------------------------------------------

void run_report(const std::string& in_path, const Globals& g) {
  require_out(g);
  std::ifstream in(in_path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + in_path);
  std::string line;
  std::getline(in, line);
  if (line.rfind("id,t_us,pred_ttc_s,gt_ttc_s", 0) != 0) {
    throw Error(ErrorCode::kMalformedRecord, in_path + ": expected an evaluate records CSV");
  }

  struct Series {
    std::vector<std::pair<Micros, std::pair<json, double>>> rows;
  };
  std::map<int, Series> by_id;
  int n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 4) throw Error(ErrorCode::kMalformedRecord, in_path + ":" + std::to_string(n) + ": expected 4 fields");
    try {
      const json pred = f[2].empty() ? json(nullptr) : json(std::stod(f[2]));
      by_id[std::stoi(f[0])].rows.push_back({std::stoll(f[1]), {pred, std::stod(f[3])}});
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::kMalformedRecord, in_path + ":" + std::to_string(n) + ": bad number");
    }
  }

  json objects = json::array();
  for (auto& [id, s] : by_id) {
    std::stable_sort(s.rows.begin(), s.rows.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    json t = json::array(), pred = json::array(), gt = json::array();
    for (const auto& [ts, v] : s.rows) {
      t.push_back(ts * 1e-6);
      pred.push_back(v.first);
      gt.push_back(v.second);
    }
    objects.push_back({{"id", id}, {"t_s", t}, {"pred_ttc_s", pred}, {"gt_ttc_s", gt}});
  }
  write_text(g.out, json{{"objects", objects}}.dump(2) + "\n");
}

void print_error(std::string_view code, const std::string& message, const std::string& sub) {
  std::cerr << json{{"error", code}, {"message", message}, {"subcommand", sub}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"loom: event-camera time-to-contact toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "Key-value config file (TOML/INI); flags override it");

  Globals g;
  app.add_option("--seed", g.seed, "Seed for all randomness")->capture_default_str();
  app.add_option("--dt", g.dt, "Observation spacing / event window, seconds")->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--mode", g.mode, "Estimator: events, frames or fused")->capture_default_str()
      ->check(CLI::IsMember({"events", "frames", "fused"}));
  app.add_option("--roi-size", g.roi_size, "ROI side in cells")->capture_default_str()->check(CLI::Range(8, 4096));
  app.add_option("--out", g.out, "Output path");

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Convert CSV or raw events to the binary format");
  c_ingest->add_option("--in", ingest.in, "Input events (EVT1 or CSV x,y,t_us,p)")->required();
  c_ingest->add_option("--width", ingest.width, "Sensor width for CSV input");
  c_ingest->add_option("--height", ingest.height, "Sensor height for CSV input");

  std::string sync_manifest;
  auto* c_sync = app.add_subcommand("sync", "Stamp frames with trigger times");
  c_sync->add_option("--manifest", sync_manifest, "JSON {events, frames, offset?}")->required();

  bool ladder = false;
  std::string spec_path;
  auto* c_synth = app.add_subcommand("synth", "Generate synthetic looming scenes");
  c_synth->add_flag("--ladder", ladder, "The ten-scene benchmark ladder");
  c_synth->add_option("--spec", spec_path, "JSON scene specification");

  AnnotateArgs ann;
  auto* c_ann = app.add_subcommand("annotate", "Track detections and label TTC");
  c_ann->add_option("--detections", ann.detections, "Detections JSON-lines")->required();
  c_ann->add_option("--poses", ann.poses, "Ego poses JSON-lines")->required();
  c_ann->add_option("--smoothing-window", ann.window)->capture_default_str();
  c_ann->add_option("--iou-gate", ann.tracker.iou_gate)->capture_default_str();
  c_ann->add_option("--min-hits", ann.tracker.min_hits)->capture_default_str();
  c_ann->add_option("--max-age", ann.tracker.max_age)->capture_default_str();
  c_ann->add_option("--q-position", ann.tracker.q_position)->capture_default_str();
  c_ann->add_option("--q-velocity", ann.tracker.q_velocity)->capture_default_str();
  c_ann->add_option("--r-position", ann.tracker.r_position)->capture_default_str();

  EstimateArgs est;
  auto* c_est = app.add_subcommand("estimate", "Estimate TTC for the samples of a manifest");
  c_est->add_option("--manifest", est.manifest, "JSON-lines {id, events, t_prev_us, t_cur_us, box, frame_prev?, frame_cur?}");
  c_est->add_option("--bins", est.bins, "Temporal bins per voxel grid")->capture_default_str()
      ->check(CLI::PositiveNumber);
  c_est->add_option("--benchmark", est.benchmark, "Time N events-mode estimates and print ROI/s")
      ->check(CLI::NonNegativeNumber);

  EvaluateArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "Score predictions against labels");
  c_eval->add_option("--pred", ev.pred, "Predicted TTC JSON-lines");
  c_eval->add_option("--gt", ev.gt, "Ground-truth TTC JSON-lines");
  c_eval->add_option("--pred-boxes", ev.pred_boxes, "Predicted boxes JSON-lines (with scores)");
  c_eval->add_option("--gt-boxes", ev.gt_boxes, "Ground-truth boxes JSON-lines");

  std::string report_in;
  auto* c_report = app.add_subcommand("report", "Per-object TTC series from an evaluate records CSV");
  c_report->add_option("--in", report_in, "<out>.records.csv written by evaluate")->required();

  std::string sub = "loom";
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    print_error("InvalidArgument", e.what(), sub);
    return kExitInput;
  }

  try {
    if (*c_ingest) sub = "ingest", run_ingest(ingest, g);
    else if (*c_sync) sub = "sync", run_sync(sync_manifest, g);
    else if (*c_synth) sub = "synth", run_synth(ladder, spec_path, g);
    else if (*c_ann) sub = "annotate", run_annotate(ann, g);
    else if (*c_est) sub = "estimate", run_estimate(est, g);
    else if (*c_eval) sub = "evaluate", run_evaluate(ev, g);
    else if (*c_report) sub = "report", run_report(report_in, g);
  } catch (const Error& e) {
    remove_outputs();
    print_error(to_string(e.code()), e.what(), sub);
    return is_numeric_failure(e.code()) ? kExitNumeric : kExitInput;
  } catch (const json::exception& e) {
    remove_outputs();
    print_error("MalformedRecord", e.what(), sub);
    return kExitInput;
  } catch (const std::exception& e) {
    remove_outputs();
    print_error("IoError", e.what(), sub);
    return kExitInput;
  }
  return 0;
}
