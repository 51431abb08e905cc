#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "loom/error.hpp"
#include "loom/metrics.hpp"

using namespace loom;

namespace {

ErrorCode code_of(auto fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return static_cast<ErrorCode>(-1);
}

using Values = std::array<std::optional<double>, 4>;
constexpr std::array<double, 4> kWeights = {0.5, 0.3, 0.1, 0.1};

Box3D box(double x, double y, std::optional<double> score = std::nullopt, Micros t = 0) {
  Box3D b;
  b.center = {x, y, 0.75};
  b.length = 4;
  b.width = 2;
  b.height = 1.5;
  b.score = score;
  b.t = t;
  return b;
}

// Repeatedly takes the highest-scoring unvisited prediction (lowest index on
// ties) and hands it the closest free ground truth.
std::vector<int> greedy_oracle(const std::vector<Box3D>& preds, const std::vector<Box3D>& gts, double thr) {
  std::vector<int> out(preds.size(), -1);
  std::vector<bool> seen(preds.size(), false), taken(gts.size(), false);
  for (std::size_t round = 0; round < preds.size(); ++round) {
    int p = -1;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (seen[i]) continue;
      if (p < 0 || *preds[i].score > *preds[p].score) p = static_cast<int>(i);
    }
    seen[p] = true;
    int g = -1;
    double best = thr;
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (taken[j]) continue;
      const double d = std::hypot(preds[p].center.x() - gts[j].center.x(), preds[p].center.y() - gts[j].center.y());
      if (d < best || (d == best && g < 0)) {
        best = d;
        g = static_cast<int>(j);
      }
    }
    if (g >= 0) {
      taken[g] = true;
      out[p] = g;
    }
  }
  return out;
}

}  // namespace

TEST(MiD, Examples) {
  EXPECT_EQ(mid_error(2, 2, 0.1), 0.0);
  // eta 0.95 <-> tau 2, eta 0.90 <-> tau 1.
  EXPECT_NEAR(mid_error(2, 1, 0.1), 1e4 * std::log(0.95 / 0.90), 1e-9);
  EXPECT_NEAR(mid_error(2, 1, 0.1), 540.7, 0.05);
  EXPECT_EQ(code_of([] { mid_error(0.05, 2, 0.1); }), ErrorCode::kInvalidPrediction);
  EXPECT_EQ(code_of([] { mid_error(std::nan(""), 2, 0.1); }), ErrorCode::kInvalidPrediction);
}

TEST(MiD, Symmetric) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> tau(0.2, 10);
  for (int i = 0; i < 200; ++i) {
    const double a = tau(rng), b = tau(rng);
    EXPECT_DOUBLE_EQ(mid_error(a, b, 0.1), mid_error(b, a, 0.1));
  }
}

TEST(Rte, Examples) {
  EXPECT_EQ(rte(3, 3), 0.0);
  EXPECT_DOUBLE_EQ(rte(1.5, 2), 25.0);
  EXPECT_DOUBLE_EQ(rte(-1, -2), 50.0);
  EXPECT_THROW(rte(1, 0), Error);
}

TEST(Buckets, Boundaries) {
  EXPECT_EQ(bucket_of(3.0), TtcBucket::kCrucial);
  EXPECT_EQ(bucket_of(3.0001), TtcBucket::kSmall);
  EXPECT_EQ(bucket_of(6.0), TtcBucket::kSmall);
  EXPECT_EQ(bucket_of(10.0), TtcBucket::kLarge);
  EXPECT_EQ(bucket_of(-10.0), TtcBucket::kNegative);
  EXPECT_FALSE(bucket_of(0.0));
  EXPECT_FALSE(bucket_of(10.5));
  EXPECT_FALSE(bucket_of(-11));
}

TEST(WeightedOverall, PublishedRows) {
  EXPECT_NEAR(*weighted_overall(Values{53.1, 37.6, 40.6, 31.3}, kWeights), 45.0, 0.05);
  EXPECT_NEAR(*weighted_overall(Values{222.9, 105.7, 93.9, 80.4}, kWeights), 160.6, 0.05);
  EXPECT_NEAR(*weighted_overall(Values{93.9, 65.2, 89.6, 42.4}, kWeights), 79.7, 0.05);
  EXPECT_DOUBLE_EQ(*weighted_overall(Values{100, 100, 100, 100}, kWeights), 100.0);
}

TEST(WeightedOverall, RenormalizesAbsentBuckets) {
  std::array<double, 4> eff{};
  const auto v = weighted_overall(Values{10, std::nullopt, 30, std::nullopt}, kWeights, &eff);
  EXPECT_NEAR(*v, (0.5 * 10 + 0.1 * 30) / 0.6, 1e-12);
  EXPECT_NEAR(eff[0] + eff[1] + eff[2] + eff[3], 1.0, 1e-12);
  EXPECT_EQ(eff[1], 0.0);
  EXPECT_FALSE(weighted_overall(Values{}, kWeights));
}

TEST(Aggregate, PerfectPredictions) {
  std::vector<TtcPair> r = {{1, 1}, {2.5, 2.5}, {4, 4}, {8, 8}, {-3, -3}, {-9, -9}};
  const auto rep = aggregate(r);
  EXPECT_EQ(*rep.mid, 0.0);
  EXPECT_EQ(*rep.rte, 0.0);
  EXPECT_EQ(*rep.failure_ratio, 0.0);
  EXPECT_FALSE(rep.renormalized);
  EXPECT_EQ(rep.buckets[0].total, 2u);
}

TEST(Aggregate, BucketMeansFailuresAndExclusions) {
  std::vector<TtcPair> r = {
      {1.0, 2.0},                                    // crucial
      {0.05, 2.0},                                   // crucial, eta < 0
      {std::numeric_limits<double>::quiet_NaN(), 1},  // crucial, missing
      {5.0, 4.0},                                    // small
      {30.0, 8.0},                                   // large, beyond cutoff
      {12.0, 20.0},                                  // excluded gt
  };
  const auto rep = aggregate(r);
  EXPECT_EQ(rep.excluded, 1u);
  const auto& c = rep.buckets[0];
  EXPECT_EQ(c.total, 3u);
  EXPECT_EQ(c.invalid, 2u);
  EXPECT_DOUBLE_EQ(*c.failure_ratio, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(*c.rte, 50.0);
  EXPECT_NEAR(*c.mid, 1e4 * std::abs(std::log(0.9) - std::log(0.95)), 1e-9);
  EXPECT_EQ(*rep.buckets[2].failure_ratio, 1.0);
  EXPECT_FALSE(rep.buckets[2].mid);
  // Negative bucket is empty; large has no valid mean either.
  EXPECT_TRUE(rep.renormalized);
  EXPECT_FALSE(rep.buckets[3].failure_ratio);
  const double small_mid = 1e4 * std::abs(std::log(1 - 0.1 / 5) - std::log(1 - 0.1 / 4));
  EXPECT_NEAR(*rep.mid, (0.5 * *c.mid + 0.3 * small_mid) / 0.8, 1e-9);
  EXPECT_NEAR(*rep.failure_ratio, (0.5 * 2.0 / 3.0 + 0.3 * 0 + 0.1 * 1) / 0.9, 1e-12);
  const double wsum = rep.effective_weights[0] + rep.effective_weights[1] + rep.effective_weights[2] +
                      rep.effective_weights[3];
  EXPECT_NEAR(wsum, 1.0, 1e-12);
}

TEST(Aggregate, PermutationInvariant) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> gt(-10, 10), noise(0.7, 1.3);
  std::vector<TtcPair> r;
  for (int i = 0; i < 500; ++i) {
    const double g = gt(rng);
    r.push_back({g * noise(rng), g});
  }
  const auto a = aggregate(r);
  for (int k = 0; k < 5; ++k) {
    std::shuffle(r.begin(), r.end(), rng);
    const auto b = aggregate(r);
    EXPECT_EQ(*a.mid, *b.mid);
    EXPECT_EQ(*a.rte, *b.rte);
    EXPECT_EQ(*a.failure_ratio, *b.failure_ratio);
  }
}

TEST(Aggregate, RejectsBadWeights) {
  TtcEvalConfig cfg;
  cfg.weights = {0.5, 0.5, 0.5, 0.0};
  EXPECT_THROW(aggregate({}, cfg), Error);
}

TEST(Match, OffsetMatchesOnlyAtWideThresholds) {
  const std::vector<Box3D> p = {box(1.5, 0, 0.9)}, g = {box(0, 0)};
  const auto m = match_detections(p, g);
  ASSERT_EQ(m.size(), 4u);
  EXPECT_EQ(m[0].pred_to_gt[0], -1);
  EXPECT_EQ(m[1].pred_to_gt[0], -1);
  EXPECT_EQ(m[2].pred_to_gt[0], 0);
  EXPECT_EQ(m[3].pred_to_gt[0], 0);
}

TEST(Match, DifferentTimestampsNeverMatch) {
  const std::vector<Box3D> p = {box(0, 0, 0.9, 1)}, g = {box(0, 0, std::nullopt, 2)};
  for (const auto& m : match_detections(p, g)) EXPECT_EQ(m.pred_to_gt[0], -1);
}

TEST(Match, AgreesWithGreedyOracle) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> n(0, 6);
  std::uniform_real_distribution<double> pos(-3, 3), score(0, 1);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Box3D> p, g;
    const int np = n(rng), ng = n(rng);
    for (int i = 0; i < np; ++i) p.push_back(box(pos(rng), pos(rng), std::round(score(rng) * 4) / 4));
    for (int i = 0; i < ng; ++i) g.push_back(box(pos(rng), pos(rng)));
    const auto m = match_detections(p, g);
    for (std::size_t k = 0; k < m.size(); ++k) {
      EXPECT_EQ(m[k].pred_to_gt, greedy_oracle(p, g, kDefaultDistanceThresholds[k])) << trial;
    }
  }
}

TEST(AveragePrecision, AllCorrectAndNoMatches) {
  const std::vector<Box3D> g = {box(0, 0), box(10, 0), box(20, 0)};
  const std::vector<Box3D> p = {box(0, 0, 0.9), box(10, 0, 0.5), box(20, 0, 0.7)};
  for (double ap : average_precision(match_detections(p, g), g.size()).ap) EXPECT_DOUBLE_EQ(ap, 1.0);

  const std::vector<Box3D> far = {box(50, 0, 0.9), box(60, 0, 0.8)};
  const auto r = average_precision(match_detections(far, g), g.size());
  EXPECT_EQ(r.mean_ap, 0.0);
}

TEST(AveragePrecision, HandBuiltCurve) {
  // Two gts; the 0.9 prediction is right, the 0.8 one is wrong. The curve is
  // precision 1 up to recall 0.5 (0.5 exactly at the end) and 0 beyond, so
  // of the 90 samples on (0.1, 1] 39 contribute 0.9 and one contributes 0.4.
  const std::vector<Box3D> g = {box(0, 0), box(10, 0)};
  const std::vector<Box3D> p = {box(0, 0, 0.9), box(30, 0, 0.8)};
  const double expect = (39 * 0.9 + 0.4) / 90 / 0.9;
  EXPECT_NEAR(expect, 0.438272, 1e-6);
  for (double ap : average_precision(match_detections(p, g), g.size()).ap) EXPECT_NEAR(ap, expect, 1e-12);
}

TEST(TpMetrics, Examples) {
  using Pair = std::pair<Box3D, Box3D>;
  const std::vector<Pair> shifted = {{box(1, 0), box(0, 0)}};
  const auto s = tp_metrics(shifted);
  EXPECT_EQ(s.ate, 1.0);
  EXPECT_EQ(s.ase, 0.0);
  EXPECT_EQ(s.aoe, 0.0);

  Box3D a = box(0, 0), b = box(0, 0);
  a.yaw = 0.1;
  b.yaw = -0.1;
  EXPECT_NEAR(tp_metrics(std::vector<Pair>{{a, b}}).aoe, 0.2, 1e-15);
  a.yaw = 3.1;
  b.yaw = -3.1;
  EXPECT_NEAR(tp_metrics(std::vector<Pair>{{a, b}}).aoe, 2 * M_PI - 6.2, 1e-12);
  EXPECT_NEAR(tp_metrics(std::vector<Pair>{{a, b}}).aoe, 0.0832, 5e-5);

  EXPECT_EQ(code_of([] { tp_metrics({}); }), ErrorCode::kNoMatches);
}

TEST(TpMetrics, SizeErrorIgnoresPose) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-5, 5), yaw(-3, 3);
  for (int i = 0; i < 50; ++i) {
    Box3D a = box(u(rng), u(rng)), b = box(u(rng), u(rng));
    a.yaw = yaw(rng);
    b.yaw = yaw(rng);
    EXPECT_EQ(tp_metrics(std::vector<std::pair<Box3D, Box3D>>{{a, b}}).ase, 0.0);
  }
  // Half-length prediction: IoU 1/2.
  Box3D small = box(0, 0);
  small.length = 2;
  EXPECT_DOUBLE_EQ(tp_metrics(std::vector<std::pair<Box3D, Box3D>>{{small, box(0, 0)}}).ase, 0.5);
}

TEST(EvaluateDetections, IdenticalBoxes) {
  const std::vector<Box3D> g = {box(0, 0), box(5, 5), box(-7, 3), box(12, -4)};
  std::vector<Box3D> p = g;
  for (std::size_t i = 0; i < p.size(); ++i) p[i].score = 0.5 + 0.1 * i;
  const auto r = evaluate_detections(p, g);
  EXPECT_EQ(r.ap.mean_ap, 1.0);
  ASSERT_TRUE(r.tp);
  EXPECT_EQ(r.tp->ate, 0.0);
  EXPECT_EQ(r.tp->ase, 0.0);
  EXPECT_EQ(r.tp->aoe, 0.0);
  EXPECT_EQ(r.tp->count, 4u);
}

TEST(EvaluateDetections, MixedFixture) {
  // One exact hit, one 1 m off with a 0.2 rad yaw error, one false positive,
  // one missed gt.
  const std::vector<Box3D> g = {box(0, 0), box(10, 0), box(20, 0)};
  Box3D off = box(11, 0, 0.8);
  off.yaw = 0.2;
  const std::vector<Box3D> p = {box(0, 0, 0.9), off, box(40, 0, 0.7)};
  const auto r = evaluate_detections(p, g);
  ASSERT_TRUE(r.tp);
  EXPECT_EQ(r.tp->count, 2u);
  EXPECT_DOUBLE_EQ(r.tp->ate, 0.5);
  EXPECT_EQ(r.tp->ase, 0.0);
  EXPECT_DOUBLE_EQ(r.tp->aoe, 0.1);
  // Thresholds 0.5: recall 1/3 then flat; 1, 2, 4: precision 1 to recall 2/3.
  EXPECT_EQ(r.ap.ap.size(), 4u);
  EXPECT_NEAR(r.ap.ap[0], (23 * 0.9) / 90 / 0.9, 1e-12);
  EXPECT_NEAR(r.ap.ap[1], (56 * 0.9) / 90 / 0.9, 1e-12);
}

TEST(Report, JsonAndCsv) {
  MetricsReport rep;
  std::vector<TtcPair> r = {{2, 2}, {4, 5}};
  rep.ttc = aggregate(r);
  const std::vector<Box3D> g = {box(0, 0)};
  const std::vector<Box3D> p = {box(0, 0, 1.0)};
  rep.detection = evaluate_detections(p, g);

  const auto j = nlohmann::json::parse(to_json(rep));
  EXPECT_EQ(j["ttc"]["buckets"]["crucial"]["count"], 1);
  EXPECT_TRUE(j["ttc"]["buckets"]["negative"]["mid"].is_null());
  EXPECT_TRUE(j["ttc"]["renormalized"].get<bool>());
  EXPECT_EQ(j["detection"]["mean_ap"], 1.0);
  EXPECT_EQ(j["detection"]["ap"].size(), 4u);

  const std::string csv = to_csv(rep);
  EXPECT_EQ(csv.rfind("section,key,metric,value\n", 0), 0u);
  EXPECT_NE(csv.find("ttc,crucial,mid,0\n"), std::string::npos);
  EXPECT_NE(csv.find("ttc,large,mid,\n"), std::string::npos);
  EXPECT_NE(csv.find("detection,mean,ap,1\n"), std::string::npos);
  EXPECT_EQ(to_csv(rep), csv);
}
