#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "loom/annotator.hpp"
#include "loom/error.hpp"
#include "loom/image_io.hpp"
#include "loom/metrics.hpp"
#include "loom/synth.hpp"
#include "test_support.hpp"

using namespace loom;

namespace {

SceneSpec closing(double z0, double v, double h, double fy) {
  SceneSpec s;
  s.initial_depth = z0;
  s.velocity = v;
  s.object_height = h;
  s.camera.fy = fy;
  return s;
}

}  // namespace

TEST(Analytic, ClosedForms) {
  const auto s = closing(10, 5, 1.5, 1000);
  EXPECT_DOUBLE_EQ(analytic_height(s, 0), 150.0);
  EXPECT_DOUBLE_EQ(analytic_height(s, 0.1), 1500.0 / 9.5);
  EXPECT_NEAR(analytic_height(s, 0.1), 157.9, 0.05);
  EXPECT_EQ(analytic_ttc(s, 0), 2.0);
  EXPECT_EQ(analytic_ttc(s, 1.0), 1.0);  // depth 5 m, half the start
  EXPECT_EQ(analytic_ttc(closing(10, -5, 1.5, 1000), 0), -2.0);
}

TEST(Analytic, HeightRatioIdentity) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> z(5, 50), v(-20, 20), t(0, 0.2);
  for (int i = 0; i < 500; ++i) {
    const auto s = closing(z(rng), v(rng), 1.5, 1645);
    const double t1 = t(rng), t2 = t(rng);
    const double lhs = analytic_height(s, t1) / analytic_height(s, t2);
    const double rhs = (s.initial_depth - s.velocity * t2) / (s.initial_depth - s.velocity * t1);
    EXPECT_NEAR(lhs, rhs, 4e-16 * rhs);
  }
}

TEST(Generate, StaticSceneHasNoSignal) {
  SceneSpec s;
  s.velocity = 0;
  const auto b = generate(s, 1);
  EXPECT_EQ(b.signal_event_count, 0u);
  EXPECT_EQ(b.events.size(), 0u);

  s.noise_rate = 0.1;
  const auto n = generate(s, 1);
  EXPECT_EQ(n.signal_event_count, 0u);
  // 640 * 480 * 0.3 * 0.1 expected noise events.
  EXPECT_NEAR(static_cast<double>(n.events.size()), 9216.0, 5 * std::sqrt(9216.0));
}

TEST(Generate, DoublingThresholdAtLeastHalvesEvents) {
  for (double c : {0.05, 0.1, 0.15, 0.3}) {
    for (double v : {2.0, 5.0, -4.0}) {
      SceneSpec s;
      s.velocity = v;
      s.contrast_threshold = c;
      const auto a = generate(s, 3).signal_event_count;
      s.contrast_threshold = 2 * c;
      const auto b = generate(s, 3).signal_event_count;
      EXPECT_GT(a, 0u);
      EXPECT_LE(2 * b, a) << c << " " << v;
    }
  }
}

TEST(Generate, Deterministic) {
  SceneSpec s;
  s.noise_rate = 0.01;
  s.pixel_jitter = 0.5;
  const auto a = generate(s, 42), b = generate(s, 42);
  ASSERT_EQ(a.events.size(), b.events.size());
  EXPECT_TRUE(std::equal(a.events.events().begin(), a.events.events().end(), b.events.events().begin(),
                         [](const Event& x, const Event& y) {
                           return x.x == y.x && x.y == y.y && x.t == y.t && x.p == y.p;
                         }));
  for (std::size_t k = 0; k < a.frames.size(); ++k) EXPECT_TRUE(std::ranges::equal(a.frames[k].image.values(), b.frames[k].image.values()));
  const auto c = generate(s, 43);
  EXPECT_EQ(c.signal_event_count, a.signal_event_count);
  EXPECT_FALSE(c.events.size() == a.events.size() &&
               std::equal(a.events.events().begin(), a.events.events().end(), c.events.events().begin(),
                          [](const Event& x, const Event& y) { return x.x == y.x && x.y == y.y && x.t == y.t; }));
}

TEST(Generate, EventsStayNearEdges) {
  SceneSpec s;
  s.lateral_offset = 0.4;
  const auto b = generate(s, 5);
  ASSERT_GT(b.events.size(), 1000u);
  for (const auto& e : b.events.events()) {
    const double t = e.t * 1e-6;
    // Within 2 px of some edge of the rectangle at the event time.
    const RoiRect r = projected_rect(s, t);
    const double x0 = r.x0, x1 = r.x0 + r.width, y0 = r.y0, y1 = r.y0 + r.height;
    const bool in_y = e.y >= y0 - 2 && e.y <= y1 + 2;
    const bool in_x = e.x >= x0 - 2 && e.x <= x1 + 2;
    const bool near_v = in_y && (std::abs(e.x - x0) <= 2 || std::abs(e.x - x1) <= 2);
    const bool near_h = in_x && (std::abs(e.y - y0) <= 2 || std::abs(e.y - y1) <= 2);
    ASSERT_TRUE(near_v || near_h) << e.x << "," << e.y << " at " << e.t;
  }
}

TEST(Generate, FramesAndLabels) {
  SceneSpec s;
  const auto b = generate(s, 1);
  ASSERT_EQ(b.frames.size(), 4u);
  ASSERT_EQ(b.ttc.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    const double t = 0.1 * k;
    EXPECT_EQ(b.frames[k].t, static_cast<Micros>(std::llround(t * 1e6)));
    EXPECT_EQ(b.ttc[k], analytic_ttc(s, t));
    EXPECT_EQ(b.pixel_height[k], analytic_height(s, t));
    // Near face of the box at the analytic depth.
    EXPECT_NEAR(b.boxes[k].center.x() - 0.5 * b.boxes[k].length, analytic_depth(s, t), 1e-12);
  }
  // Image centre is inside the object, a corner is background.
  const auto& img = b.frames[0].image;
  EXPECT_DOUBLE_EQ(img.at(320, 240), s.background_intensity * s.contrast);
  EXPECT_DOUBLE_EQ(img.at(0, 0), s.background_intensity);
}

TEST(Generate, AntiAliasedEdge) {
  SceneSpec s;
  const auto b = generate(s, 1);
  const RoiRect r = projected_rect(s, 0);
  // Column straddling the left edge carries a fractional coverage.
  const int x = static_cast<int>(std::floor(r.x0 + 0.5));
  const double v = b.frames[0].image.at(x, 240);
  EXPECT_GT(v, s.background_intensity);
  EXPECT_LT(v, s.background_intensity * s.contrast);
}

TEST(Generate, DegenerateSpecs) {
  SceneSpec s;
  s.lateral_offset = 100;
  EXPECT_EQ(
      [&] {
        try {
          generate(s, 1);
        } catch (const Error& e) {
          return e.code();
        }
        return static_cast<ErrorCode>(-1);
      }(),
      ErrorCode::kDegenerateSpec);
  SceneSpec crash;
  crash.initial_depth = 1.0;  // reaches the camera within the duration
  EXPECT_THROW(generate(crash, 1), Error);
  SceneSpec neg;
  neg.initial_depth = -1;
  EXPECT_THROW(generate(neg, 1), Error);
}

TEST(Ladder, ListedTtcAndBucketCoverage) {
  const auto ladder = benchmark_ladder();
  ASSERT_EQ(ladder.size(), 10u);
  std::array<int, 4> per_bucket{};
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    EXPECT_NEAR(analytic_ttc(ladder[i], 0), kLadderTtc[i], 1e-12 * std::abs(kLadderTtc[i]));
    const auto b = bucket_of(analytic_ttc(ladder[i], 0));
    ASSERT_TRUE(b);
    ++per_bucket[static_cast<int>(*b)];
  }
  EXPECT_EQ(per_bucket, (std::array<int, 4>{4, 3, 1, 2}));
  // Every scene is generable and in view.
  for (const auto& s : ladder) EXPECT_NO_THROW(generate(s, 1));
}

TEST(WriteBundle, FilesRoundTrip) {
  loom::test::TempDir dir("bundle");
  SceneSpec s;
  const auto b = generate(s, 9);
  write_bundle(b, dir.path(), 7);

  const auto ev = ingest_events(dir / "events.bin");
  ASSERT_EQ(ev.size(), b.events.size());
  EXPECT_EQ(ev.events().back().t, b.events.events().back().t);

  const auto img = read_pgm(dir / "frame_002.pgm");
  ASSERT_EQ(img.width(), 640);
  for (int y = 0; y < img.height(); y += 7)
    for (int x = 0; x < img.width(); x += 7) EXPECT_NEAR(img.at(x, y), b.frames[2].image.at(x, y), 0.5 / 65535);

  const auto boxes = read_boxes_jsonl(dir / "boxes.jsonl");
  ASSERT_EQ(boxes.size(), 4u);
  EXPECT_EQ(*boxes[3].id, 7);
  const auto labels = read_ttc_jsonl(dir / "ttc.jsonl");
  ASSERT_EQ(labels.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(*labels[k].ttc, b.ttc[k]);
}
