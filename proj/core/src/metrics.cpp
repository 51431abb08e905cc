#include "loom/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>

#include <nlohmann/json.hpp>

#include "loom/error.hpp"

namespace loom {

namespace {

using json = nlohmann::json;

// Sorted before summing so the mean does not depend on record order.
std::optional<double> sorted_mean(std::vector<double> v) {
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Linear interpolation of (xp, fp) at x with fp[0] to the left and 0 to the
// right of the last sample.
double interp_right_zero(double x, const std::vector<double>& xp, const std::vector<double>& fp) {
  const std::size_t n = xp.size();
  if (n == 0 || x > xp.back()) return 0.0;
  if (x == xp.back()) return fp.back();
  if (x < xp.front()) return fp.front();
  const auto it = std::upper_bound(xp.begin(), xp.end(), x);
  const std::size_t j = static_cast<std::size_t>(it - xp.begin()) - 1;
  const double slope = (fp[j + 1] - fp[j]) / (xp[j + 1] - xp[j]);
  return slope * (x - xp[j]) + fp[j];
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

std::string_view to_string(TtcBucket b) {
  switch (b) {
    case TtcBucket::kCrucial: return "crucial";
    case TtcBucket::kSmall: return "small";
    case TtcBucket::kLarge: return "large";
    case TtcBucket::kNegative: return "negative";
  }
  return "unknown";
}

void TtcEvalConfig::validate() const {
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "bucket weights must be non-negative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::kInvalidArgument, "bucket weights must sum to 1");
  if (!(dt > 0.0)) throw Error(ErrorCode::kInvalidArgument, "dt must be positive");
}

std::optional<TtcBucket> bucket_of(double gt) {
  if (gt > 0.0 && gt <= 3.0) return TtcBucket::kCrucial;
  if (gt > 3.0 && gt <= 6.0) return TtcBucket::kSmall;
  if (gt > 6.0 && gt <= 10.0) return TtcBucket::kLarge;
  if (gt >= -10.0 && gt < 0.0) return TtcBucket::kNegative;
  return std::nullopt;
}

double mid_error(double pred, double gt, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorCode::kInvalidArgument, "dt must be positive");
  const double eta_gt = 1.0 - dt / gt;
  if (!(eta_gt > 0.0) || !std::isfinite(eta_gt)) {
    throw Error(ErrorCode::kInvalidArgument, "ground-truth eta is not positive");
  }
  const double eta_pred = 1.0 - dt / pred;
  if (!(eta_pred > 0.0) || !std::isfinite(eta_pred)) {
    throw Error(ErrorCode::kInvalidPrediction, "predicted eta is not positive");
  }
  return std::abs(std::log(eta_pred) - std::log(eta_gt)) * 1e4;
}

double rte(double pred, double gt) {
  if (gt == 0.0) throw Error(ErrorCode::kInvalidArgument, "ground-truth TTC must be non-zero");
  return std::abs(gt - pred) / std::abs(gt) * 100.0;
}

bool is_invalid_prediction(double pred, const TtcEvalConfig& cfg) {
  if (!std::isfinite(pred) || std::abs(pred) > cfg.max_abs_ttc) return true;
  const double eta = 1.0 - cfg.dt / pred;
  return !(eta > 0.0) || !std::isfinite(eta);
}

std::optional<double> weighted_overall(const std::array<std::optional<double>, 4>& values,
                                       const std::array<double, 4>& weights, std::array<double, 4>* effective) {
  double wsum = 0.0;
  for (int b = 0; b < 4; ++b) {
    if (values[b]) wsum += weights[b];
  }
  std::array<double, 4> eff{};
  std::optional<double> out;
  if (wsum > 0.0) {
    double acc = 0.0;
    for (int b = 0; b < 4; ++b) {
      if (!values[b]) continue;
      eff[b] = weights[b] / wsum;
      acc += eff[b] * *values[b];
    }
    out = acc;
  }
  if (effective) *effective = eff;
  return out;
}

TtcReport aggregate(std::span<const TtcPair> records, const TtcEvalConfig& cfg) {
  cfg.validate();
  TtcReport report;
  std::array<std::vector<double>, 4> mids, rtes;
  for (const auto& r : records) {
    const auto b = bucket_of(r.gt);
    if (!b) {
      ++report.excluded;
      continue;
    }
    const auto i = static_cast<std::size_t>(*b);
    auto& stats = report.buckets[i];
    ++stats.total;
    if (is_invalid_prediction(r.pred, cfg)) {
      ++stats.invalid;
      continue;
    }
    rtes[i].push_back(rte(r.pred, r.gt));
    // A ground truth inside (0, dt] has no eta; it still counts for RTE.
    if (1.0 - cfg.dt / r.gt > 0.0) mids[i].push_back(mid_error(r.pred, r.gt, cfg.dt));
  }

  std::array<std::optional<double>, 4> mid_v, rte_v, fr_v;
  for (std::size_t i = 0; i < 4; ++i) {
    auto& s = report.buckets[i];
    s.mid = sorted_mean(mids[i]);
    s.rte = sorted_mean(rtes[i]);
    if (s.total > 0) s.failure_ratio = static_cast<double>(s.invalid) / static_cast<double>(s.total);
    else report.renormalized = true;
    mid_v[i] = s.mid;
    rte_v[i] = s.rte;
    fr_v[i] = s.failure_ratio;
  }
  report.mid = weighted_overall(mid_v, cfg.weights, &report.effective_weights);
  report.rte = weighted_overall(rte_v, cfg.weights);
  report.failure_ratio = weighted_overall(fr_v, cfg.weights);
  return report;
}

std::vector<ThresholdMatches> match_detections(std::span<const Box3D> preds, std::span<const Box3D> gts,
                                               std::span<const double> thresholds) {
  std::vector<int> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return preds[a].score.value_or(0.0) > preds[b].score.value_or(0.0);
  });

  std::vector<ThresholdMatches> out;
  for (double thr : thresholds) {
    ThresholdMatches m{thr, order, std::vector<int>(preds.size(), -1)};
    std::vector<char> taken(gts.size(), 0);
    for (int p : order) {
      int best = -1;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (taken[g] || gts[g].t != preds[p].t) continue;
        const double d = ground_distance(preds[p], gts[g]);
        if (d <= thr && d < best_d) {
          best_d = d;
          best = static_cast<int>(g);
        }
      }
      if (best >= 0) {
        taken[best] = 1;
        m.pred_to_gt[p] = best;
      }
    }
    out.push_back(std::move(m));
  }
  return out;
}

double average_precision(const ThresholdMatches& m, std::size_t gt_count) {
  if (gt_count == 0 || m.order.empty()) return 0.0;
  std::vector<double> precision, recall;
  double tp = 0.0, fp = 0.0;
  for (int p : m.order) {
    (m.pred_to_gt[p] >= 0 ? tp : fp) += 1.0;
    precision.push_back(tp / (tp + fp));
    recall.push_back(tp / static_cast<double>(gt_count));
  }
  constexpr double kMinRecall = 0.1;
  constexpr double kMinPrecision = 0.1;
  double sum = 0.0;
  int samples = 0;
  for (int i = static_cast<int>(std::lround(kMinRecall * 100)) + 1; i <= 100; ++i) {
    const double r = i / 100.0;
    sum += std::max(0.0, interp_right_zero(r, recall, precision) - kMinPrecision) / (1.0 - kMinPrecision);
    ++samples;
  }
  return sum / samples;
}

ApResult average_precision(std::span<const ThresholdMatches> matches, std::size_t gt_count) {
  ApResult out;
  for (const auto& m : matches) {
    out.thresholds.push_back(m.threshold);
    out.ap.push_back(average_precision(m, gt_count));
  }
  if (!out.ap.empty()) {
    out.mean_ap = std::accumulate(out.ap.begin(), out.ap.end(), 0.0) / static_cast<double>(out.ap.size());
  }
  return out;
}

TpErrors tp_metrics(std::span<const std::pair<Box3D, Box3D>> pairs) {
  if (pairs.empty()) throw Error(ErrorCode::kNoMatches, "no matched pairs");
  TpErrors e;
  for (const auto& [p, g] : pairs) {
    e.ate += ground_distance(p, g);
    const double inter = std::min(p.length, g.length) * std::min(p.width, g.width) * std::min(p.height, g.height);
    e.ase += 1.0 - inter / (p.volume() + g.volume() - inter);
    e.aoe += std::abs(wrap_angle(p.yaw - g.yaw));
  }
  const auto n = static_cast<double>(pairs.size());
  e.ate /= n;
  e.ase /= n;
  e.aoe /= n;
  e.count = pairs.size();
  return e;
}

DetectionReport evaluate_detections(std::span<const Box3D> preds, std::span<const Box3D> gts,
                                    std::span<const double> thresholds, double tp_threshold) {
  DetectionReport r;
  r.pred_count = preds.size();
  r.gt_count = gts.size();
  r.tp_threshold = tp_threshold;
  r.ap = average_precision(match_detections(preds, gts, thresholds), gts.size());

  const double tp_thr[] = {tp_threshold};
  const auto tp_match = match_detections(preds, gts, tp_thr).front();
  std::vector<std::pair<Box3D, Box3D>> pairs;
  for (int p : tp_match.order) {
    if (tp_match.pred_to_gt[p] >= 0) pairs.emplace_back(preds[p], gts[tp_match.pred_to_gt[p]]);
  }
  if (!pairs.empty()) r.tp = tp_metrics(pairs);
  return r;
}

std::string to_json(const MetricsReport& report) {
  json j = json::object();
  if (report.ttc) {
    const auto& t = *report.ttc;
    json buckets = json::object();
    for (auto b : kTtcBuckets) {
      const auto& s = t.buckets[static_cast<std::size_t>(b)];
      buckets[std::string(to_string(b))] = {{"count", s.total},
                                            {"invalid", s.invalid},
                                            {"mid", optional_number(s.mid)},
                                            {"rte", optional_number(s.rte)},
                                            {"failure_ratio", optional_number(s.failure_ratio)}};
    }
    j["ttc"] = {{"buckets", buckets},
                {"overall", {{"mid", optional_number(t.mid)},
                             {"rte", optional_number(t.rte)},
                             {"failure_ratio", optional_number(t.failure_ratio)}}},
                {"effective_weights", t.effective_weights},
                {"renormalized", t.renormalized},
                {"excluded", t.excluded}};
  }
  if (report.detection) {
    const auto& d = *report.detection;
    json ap = json::array();
    for (std::size_t i = 0; i < d.ap.ap.size(); ++i) {
      ap.push_back({{"threshold", d.ap.thresholds[i]}, {"ap", d.ap.ap[i]}});
    }
    json det = {{"ap", ap},
                {"mean_ap", d.ap.mean_ap},
                {"pred_count", d.pred_count},
                {"gt_count", d.gt_count},
                {"tp_threshold", d.tp_threshold}};
    if (d.tp) {
      det["ate"] = d.tp->ate;
      det["ase"] = d.tp->ase;
      det["aoe"] = d.tp->aoe;
      det["tp_count"] = d.tp->count;
    } else {
      det["ate"] = det["ase"] = det["aoe"] = nullptr;
      det["tp_count"] = 0;
    }
    j["detection"] = det;
  }
  return j.dump(2);
}

std::string to_csv(const MetricsReport& report) {
  std::string out = "section,key,metric,value\n";
  const auto row = [&](std::string_view section, std::string_view key, std::string_view metric,
                       const std::optional<double>& v) {
    out.append(section).append(",").append(key).append(",").append(metric).append(",");
    out.append(v ? number(*v) : std::string()).append("\n");
  };
  if (report.ttc) {
    const auto& t = *report.ttc;
    for (auto b : kTtcBuckets) {
      const auto& s = t.buckets[static_cast<std::size_t>(b)];
      const auto key = to_string(b);
      row("ttc", key, "count", static_cast<double>(s.total));
      row("ttc", key, "mid", s.mid);
      row("ttc", key, "rte", s.rte);
      row("ttc", key, "failure_ratio", s.failure_ratio);
    }
    row("ttc", "overall", "mid", t.mid);
    row("ttc", "overall", "rte", t.rte);
    row("ttc", "overall", "failure_ratio", t.failure_ratio);
  }
  if (report.detection) {
    const auto& d = *report.detection;
    for (std::size_t i = 0; i < d.ap.ap.size(); ++i) row("detection", number(d.ap.thresholds[i]), "ap", d.ap.ap[i]);
    row("detection", "mean", "ap", d.ap.mean_ap);
    const auto tp = [&](double TpErrors::*f) { return d.tp ? std::optional<double>((*d.tp).*f) : std::nullopt; };
    row("detection", "tp", "ate", tp(&TpErrors::ate));
    row("detection", "tp", "ase", tp(&TpErrors::ase));
    row("detection", "tp", "aoe", tp(&TpErrors::aoe));
  }
  return out;
}

}  // namespace loom
