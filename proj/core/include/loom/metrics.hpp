#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "loom/box3d.hpp"

namespace loom {

enum class TtcBucket { kCrucial, kSmall, kLarge, kNegative };
inline constexpr std::array<TtcBucket, 4> kTtcBuckets = {TtcBucket::kCrucial, TtcBucket::kSmall,
                                                         TtcBucket::kLarge, TtcBucket::kNegative};
std::string_view to_string(TtcBucket b);

struct TtcEvalConfig {
  // crucial (0, 3], small (3, 6], large (6, 10], negative [-10, 0)
  std::array<double, 4> weights = {0.5, 0.3, 0.1, 0.1};
  double dt = 0.1;            // s, for the eta conversion
  double max_abs_ttc = 10.0;  // predictions beyond this count as invalid

  void validate() const;  // weights non-negative and summing to 1
};

std::optional<TtcBucket> bucket_of(double gt_ttc);

// |ln(1 - dt/pred) - ln(1 - dt/gt)| * 1e4. Throws InvalidPrediction when the
// predicted eta is non-positive or non-finite, InvalidArgument for the gt.
double mid_error(double pred_ttc, double gt_ttc, double dt);

// |gt - pred| / |gt| * 100.
double rte(double pred_ttc, double gt_ttc);

// Non-finite, eta <= 0 or |tau| above the cutoff.
bool is_invalid_prediction(double pred_ttc, const TtcEvalConfig& cfg);

struct TtcPair {
  double pred = 0.0;  // NaN for a missing prediction
  double gt = 0.0;
};

struct BucketStats {
  std::size_t total = 0;
  std::size_t invalid = 0;
  std::optional<double> mid;  // mean over valid predictions
  std::optional<double> rte;
  std::optional<double> failure_ratio;
};

struct TtcReport {
  std::array<BucketStats, 4> buckets;
  std::optional<double> mid;  // weighted over non-empty buckets
  std::optional<double> rte;
  std::optional<double> failure_ratio;
  std::array<double, 4> effective_weights{};
  bool renormalized = false;  // some bucket was empty
  std::size_t excluded = 0;   // gt outside every bucket
};

// Weighted sum over present values; absent entries drop out and the rest of
// the weights are rescaled to sum to 1. Empty when nothing is present.
std::optional<double> weighted_overall(const std::array<std::optional<double>, 4>& values,
                                       const std::array<double, 4>& weights,
                                       std::array<double, 4>* effective = nullptr);

TtcReport aggregate(std::span<const TtcPair> records, const TtcEvalConfig& cfg = {});

// Detection matching on ground-plane centre distance. Predictions are visited
// in descending score order (ties by index) and take the nearest unmatched
// ground truth of the same timestamp within the threshold.
struct ThresholdMatches {
  double threshold = 0.0;
  std::vector<int> order;        // prediction indices by descending score
  std::vector<int> pred_to_gt;   // per prediction index, -1 when unmatched
};

inline constexpr std::array<double, 4> kDefaultDistanceThresholds = {0.5, 1.0, 2.0, 4.0};

std::vector<ThresholdMatches> match_detections(std::span<const Box3D> preds, std::span<const Box3D> gts,
                                               std::span<const double> thresholds = kDefaultDistanceThresholds);

struct ApResult {
  std::vector<double> thresholds;
  std::vector<double> ap;
  double mean_ap = 0.0;
};

// Precision sampled on recall 0.01 .. 1 by linear interpolation of the PR
// curve (0 beyond the last recall); samples with recall > 0.1 are shifted by
// -0.1, clipped at 0, averaged and divided by 0.9.
double average_precision(const ThresholdMatches& matches, std::size_t gt_count);
ApResult average_precision(std::span<const ThresholdMatches> matches, std::size_t gt_count);

struct TpErrors {
  double ate = 0.0;  // m
  double ase = 0.0;  // 1 - IoU after aligning centre and yaw
  double aoe = 0.0;  // rad, in [0, pi]
  std::size_t count = 0;
};

// Throws NoMatches for an empty list. Pairs are (prediction, ground truth).
TpErrors tp_metrics(std::span<const std::pair<Box3D, Box3D>> pairs);

struct DetectionReport {
  ApResult ap;
  std::optional<TpErrors> tp;  // empty when nothing matched
  double tp_threshold = 2.0;
  std::size_t pred_count = 0;
  std::size_t gt_count = 0;
};

DetectionReport evaluate_detections(std::span<const Box3D> preds, std::span<const Box3D> gts,
                                    std::span<const double> thresholds = kDefaultDistanceThresholds,
                                    double tp_threshold = 2.0);

struct MetricsReport {
  std::optional<TtcReport> ttc;
  std::optional<DetectionReport> detection;
};

std::string to_json(const MetricsReport& report);
// Long format: section,key,metric,value
std::string to_csv(const MetricsReport& report);

}  // namespace loom
