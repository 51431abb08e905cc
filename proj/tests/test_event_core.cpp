#include <algorithm>
#include <functional>
#include <random>
#include <set>
#include <tuple>

#include <gtest/gtest.h>

#include "loom/error.hpp"
#include "loom/event_core.hpp"
#include "test_support.hpp"

using namespace loom;
using loom::test::TempDir;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected a loom::Error";
  return ErrorCode::kInvalidArgument;
}

std::vector<Event> random_events(std::mt19937_64& rng, std::size_t n, int w, int h, Micros t_max) {
  std::uniform_int_distribution<int> ux(0, w - 1), uy(0, h - 1), up(0, 1);
  std::uniform_int_distribution<Micros> ut(0, t_max);
  std::vector<Event> out(n);
  for (auto& e : out) {
    e = {static_cast<std::uint16_t>(ux(rng)), static_cast<std::uint16_t>(uy(rng)), ut(rng),
         static_cast<std::int8_t>(up(rng) ? 1 : -1)};
  }
  std::stable_sort(out.begin(), out.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
  return out;
}

}  // namespace

TEST(Ingest, HeaderOnlyGivesEmptyStream) {
  TempDir dir("ingest");
  test::write_file(dir / "e.bin", test::evt1_bytes(64, 48, {}));
  const auto s = ingest_events(dir / "e.bin");
  EXPECT_TRUE(s.empty());
  EXPECT_EQ(s.sensor_size(), (SensorSize{64, 48}));
}

TEST(Ingest, InOrderRecordsKeepOrder) {
  TempDir dir("ingest");
  const std::vector<Event> recs = {{1, 2, 10, 1}, {3, 4, 20, -1}, {5, 6, 30, 1}};
  test::write_file(dir / "e.bin", test::evt1_bytes(8, 8, recs));
  const auto s = ingest_events(dir / "e.bin");
  ASSERT_EQ(s.size(), 3u);
  EXPECT_TRUE(std::equal(recs.begin(), recs.end(), s.events().begin()));
}

TEST(Ingest, JitteredRecordsMatchReferenceSort) {
  std::mt19937_64 rng(7);
  std::vector<Event> recs;
  for (int i = 0; i < 1000; ++i) recs.push_back({static_cast<std::uint16_t>(i % 32), 0, 5000 + i * 10, 1});
  // Local shuffles inside 1 ms windows.
  for (std::size_t i = 0; i + 50 <= recs.size(); i += 50) {
    std::shuffle(recs.begin() + i, recs.begin() + i + 50, rng);
  }
  auto oracle = recs;
  std::stable_sort(oracle.begin(), oracle.end(), [](const Event& a, const Event& b) { return a.t < b.t; });

  TempDir dir("ingest");
  test::write_file(dir / "e.bin", test::evt1_bytes(32, 1, recs));
  const auto s = ingest_events(dir / "e.bin");
  ASSERT_EQ(s.size(), oracle.size());
  EXPECT_TRUE(std::equal(oracle.begin(), oracle.end(), s.events().begin()));
}

TEST(Ingest, LargeDisorderIsRejected) {
  TempDir dir("ingest");
  test::write_file(dir / "e.bin", test::evt1_bytes(8, 8, {{0, 0, 5000, 1}, {0, 0, 3000, 1}}));
  EXPECT_EQ(code_of([&] { ingest_events(dir / "e.bin"); }), ErrorCode::kNonMonotonicTime);
}

TEST(Ingest, TruncatedRecordIsMalformed) {
  TempDir dir("ingest");
  auto bytes = test::evt1_bytes(8, 8, {{0, 0, 1, 1}, {1, 1, 2, 1}});
  bytes.pop_back();
  test::write_file(dir / "e.bin", bytes);
  EXPECT_EQ(code_of([&] { ingest_events(dir / "e.bin"); }), ErrorCode::kMalformedRecord);
  test::write_file(dir / "h.bin", "EVT1\x08");
  EXPECT_EQ(code_of([&] { ingest_events(dir / "h.bin"); }), ErrorCode::kMalformedRecord);
}

TEST(Ingest, OutOfSensorRecordIsMalformed) {
  TempDir dir("ingest");
  test::write_file(dir / "e.bin", test::evt1_bytes(8, 8, {{8, 0, 1, 1}}));
  EXPECT_EQ(code_of([&] { ingest_events(dir / "e.bin"); }), ErrorCode::kMalformedRecord);
}

TEST(Ingest, PolarityBitMapsToSign) {
  TempDir dir("ingest");
  test::write_file(dir / "e.bin", test::evt1_bytes(4, 4, {{0, 0, 1, -1}, {0, 0, 2, 1}}));
  const auto s = ingest_events(dir / "e.bin");
  EXPECT_EQ(s.events()[0].p, -1);
  EXPECT_EQ(s.events()[1].p, 1);
}

TEST(Ingest, TriggersAreSeparated) {
  TempDir dir("ingest");
  const std::vector<Event> recs = {{0, 0, 10, 1}, {0xFFFF, 0xFFFF, 15, 1}, {1, 1, 20, 1}, {0xFFFF, 0xFFFF, 25, 1}};
  test::write_file(dir / "e.bin", test::evt1_bytes(4, 4, recs));
  const auto s = ingest_events(dir / "e.bin");
  EXPECT_EQ(s.size(), 2u);
  ASSERT_EQ(s.trigger_marks().size(), 2u);
  EXPECT_EQ(s.trigger_marks()[0], 15);
  EXPECT_TRUE(s.partial());  // 25 lies after the last event
}

TEST(Ingest, CsvWithHeaderAndComments) {
  TempDir dir("ingest");
  test::write_file(dir / "e.csv", "x,y,t_us,p\n# note\n1,2,10,1\n3,0,20,0\n65535,65535,15,1\n");
  const auto s = ingest_events(dir / "e.csv");
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s.sensor_size(), (SensorSize{4, 3}));
  EXPECT_EQ(s.events()[1].p, -1);
  EXPECT_EQ(s.trigger_marks().size(), 1u);
  EXPECT_FALSE(s.partial());
}

TEST(Ingest, CsvBadLine) {
  TempDir dir("ingest");
  test::write_file(dir / "e.csv", "1,2,10,1\n1,2,x,1\n");
  EXPECT_EQ(code_of([&] { ingest_events(dir / "e.csv"); }), ErrorCode::kMalformedRecord);
  test::write_file(dir / "p.csv", "1,2,10,2\n");
  EXPECT_EQ(code_of([&] { ingest_events(dir / "p.csv"); }), ErrorCode::kMalformedRecord);
}

TEST(Ingest, MissingFileIsIoError) {
  EXPECT_EQ(code_of([] { ingest_events("/nonexistent/loom/e.bin"); }), ErrorCode::kIo);
}

TEST(Ingest, BinaryAndCsvRoundTrip) {
  std::mt19937_64 rng(3);
  const EventStream s({16, 16}, random_events(rng, 300, 16, 16, 100000), {50, 700});
  TempDir dir("ingest");
  write_events_binary(s, dir / "a.bin");
  write_events_csv(s, dir / "a.csv");
  for (const auto& back : {ingest_events(dir / "a.bin"), ingest_events(dir / "a.csv", SensorSize{16, 16})}) {
    EXPECT_EQ(back.sensor_size(), s.sensor_size());
    ASSERT_EQ(back.size(), s.size());
    EXPECT_TRUE(std::equal(s.events().begin(), s.events().end(), back.events().begin()));
    ASSERT_EQ(back.trigger_marks().size(), 2u);
  }
}

TEST(Slice, MatchesLinearScan) {
  std::mt19937_64 rng(11);
  const auto events = random_events(rng, 500, 8, 8, 1000);
  std::uniform_int_distribution<Micros> ut(-10, 1010);
  for (int trial = 0; trial < 200; ++trial) {
    Micros a = ut(rng), b = ut(rng);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    std::vector<Event> oracle;
    for (const auto& e : events) {
      if (e.t >= a && e.t < b) oracle.push_back(e);
    }
    const auto s = slice_window(events, a, b);
    ASSERT_EQ(s.events.size(), oracle.size());
    EXPECT_TRUE(std::equal(oracle.begin(), oracle.end(), s.events.begin()));
  }
}

TEST(Slice, BoundariesAndEmpty) {
  const std::vector<Event> ev = {{0, 0, 10, 1}, {0, 0, 20, 1}, {0, 0, 30, 1}};
  EXPECT_EQ(slice_window(ev, 10, 30).events.size(), 2u);  // 30 excluded, 10 included
  EXPECT_EQ(slice_window(ev, 100, 200).events.size(), 0u);
  EXPECT_EQ(slice_window(ev, 0, 1000).events.size(), 3u);
  EXPECT_EQ(code_of([&] { slice_window(ev, 5, 5); }), ErrorCode::kInvalidArgument);
}

TEST(Slice, AdjacentWindowsUnion) {
  std::mt19937_64 rng(5);
  const auto events = random_events(rng, 400, 4, 4, 1000);
  for (Micros mid : {-1, 0, 333, 998, 999}) {
    const auto left = slice_window(events, -1, mid + 1);
    const auto right = slice_window(events, mid + 1, 1001);
    const auto all = slice_window(events, -1, 1001);
    EXPECT_EQ(left.events.size() + right.events.size(), all.events.size());
    EXPECT_EQ(left.events.data() + left.events.size(), right.events.data());
  }
}

TEST(Voxelize, EmptySliceIsBackground) {
  const auto g = voxelize({{}, 0, 100}, 3, {4, 4});
  EXPECT_EQ(g.occupied_cells(), 0u);
  EXPECT_TRUE(std::all_of(g.values().begin(), g.values().end(), [](float v) { return v == 0.5f; }));
}

TEST(Voxelize, SingleEvent) {
  const std::vector<Event> ev = {{3, 4, 0, 1}};
  const auto g = voxelize({ev, 0, 100}, 2, {8, 8});
  EXPECT_EQ(g.at(3, 4, 0), 1.0f);
  EXPECT_EQ(g.occupied_cells(), 1u);
}

TEST(Voxelize, MostRecentWins) {
  const std::vector<Event> ev = {{1, 1, 10, 1}, {1, 1, 20, -1}};
  EXPECT_EQ(voxelize({ev, 0, 100}, 1, {2, 2}).at(1, 1, 0), 0.0f);
}

TEST(Voxelize, TieGoesToLaterRecord) {
  const std::vector<Event> ev = {{1, 1, 10, -1}, {1, 1, 10, 1}};
  EXPECT_EQ(voxelize({ev, 0, 100}, 1, {2, 2}).at(1, 1, 0), 1.0f);
}

TEST(Voxelize, Errors) {
  EXPECT_EQ(code_of([] { voxelize({{}, 0, 10}, 0, {2, 2}); }), ErrorCode::kBinCountZero);
  const std::vector<Event> outside = {{5, 0, 1, 1}};
  EXPECT_EQ(code_of([&] { voxelize({outside, 0, 10}, 1, {2, 2}); }), ErrorCode::kInvalidArgument);
}

TEST(Voxelize, MatchesExhaustiveOracle) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    std::uniform_int_distribution<int> dim(1, 32), nb(1, 4), cnt(0, 1000);
    const int w = dim(rng), h = dim(rng), bins = nb(rng);
    // Narrow time range so ties and shared cells are common.
    const auto ev = random_events(rng, cnt(rng), w, h, 37);
    const auto g = voxelize({ev, 0, 38}, bins, {w, h});
    const auto oracle = test::voxel_oracle(ev, 0, 38, bins, w, h);
    ASSERT_TRUE(std::equal(oracle.begin(), oracle.end(), g.values().begin())) << "trial " << trial;
  }
}

TEST(Voxelize, RepeatIsBitIdentical) {
  std::mt19937_64 rng(9);
  const auto ev = random_events(rng, 800, 32, 32, 5000);
  EXPECT_EQ(voxelize({ev, 0, 5001}, 4, {32, 32}), voxelize({ev, 0, 5001}, 4, {32, 32}));
}

TEST(Voxelize, OccupiedCellsBoundedByDistinctPairs) {
  std::mt19937_64 rng(13);
  const auto ev = random_events(rng, 600, 16, 16, 999);
  const auto g = voxelize({ev, 0, 1000}, 4, {16, 16});
  std::set<std::tuple<int, int, int>> pairs;
  for (const auto& e : ev) pairs.insert({e.x, e.y, static_cast<int>(e.t * 4 / 1000)});
  EXPECT_LE(g.occupied_cells(), pairs.size());
}

TEST(VoxelizeRoi, PixelAlignedRoiEqualsVoxelize) {
  std::mt19937_64 rng(17);
  const auto ev = random_events(rng, 900, 24, 20, 9999);
  const auto full = voxelize({ev, 0, 10000}, 5, {24, 20});
  const auto roi = voxelize_roi({ev, 0, 10000}, 5, {-0.5, -0.5, 24, 20}, {24, 20});
  EXPECT_EQ(full.values().size(), roi.values().size());
  EXPECT_TRUE(std::equal(full.values().begin(), full.values().end(), roi.values().begin()));
}

TEST(VoxelizeRoi, UnsortedInputAgreesWithSorted) {
  std::mt19937_64 rng(19);
  auto ev = random_events(rng, 500, 40, 40, 999);
  const RoiRect roi{3.2, 5.7, 30.0, 25.0};
  const auto sorted = voxelize_roi({ev, 0, 1000}, 3, roi, {64, 64});
  // Reverse equal-time runs would change tie order, so only shuffle distinct timestamps.
  std::vector<Event> uniq;
  for (const auto& e : ev) {
    if (uniq.empty() || uniq.back().t != e.t) uniq.push_back(e);
  }
  const auto a = voxelize_roi({uniq, 0, 1000}, 3, roi, {64, 64});
  std::shuffle(uniq.begin(), uniq.end(), rng);
  const auto b = voxelize_roi({uniq, 0, 1000}, 3, roi, {64, 64});
  EXPECT_EQ(a, b);
  EXPECT_GT(sorted.occupied_cells(), 0u);
}

TEST(VoxelizeRoi, UpsamplingLeavesNoHoles) {
  // A fully lit 8x8 patch upsampled 4x covers the whole 32x32 crop.
  std::vector<Event> ev;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) ev.push_back({static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), 0, 1});
  const auto g = voxelize_roi({ev, 0, 10}, 1, {-0.5, -0.5, 8, 8}, {32, 32});
  EXPECT_EQ(g.occupied_cells(), 32u * 32u);
}

TEST(RemapClock, Bijective) {
  std::vector<Micros> marks;
  for (int i = 0; i < 10; ++i) marks.push_back(i * 100000);
  EXPECT_EQ(remap_clock(10, marks), marks);
}

TEST(RemapClock, DeficitReported) {
  std::vector<Micros> marks;
  for (int i = 0; i < 9; ++i) marks.push_back(i * 100000);
  try {
    remap_clock(10, marks);
    FAIL();
  } catch (const CountMismatchError& e) {
    EXPECT_EQ(e.deficit(), 1u);
    EXPECT_EQ(e.code(), ErrorCode::kCountMismatch);
  }
}

TEST(RemapClock, ExplicitOffset) {
  const std::vector<Micros> marks = {0, 10, 20, 30, 40, 50, 60};
  const std::vector<Micros> expect(marks.begin() + 2, marks.end());
  EXPECT_EQ(remap_clock(5, marks, 2), expect);
  EXPECT_EQ(remap_clock(5, marks), expect);  // surplus assumed to precede the first frame
  EXPECT_THROW(remap_clock(5, marks, 3), CountMismatchError);
}

TEST(RemapClock, RequiresIncreasingMarks) {
  const std::vector<Micros> marks = {0, 10, 10};
  EXPECT_EQ(code_of([&] { remap_clock(3, marks); }), ErrorCode::kInvalidArgument);
}
