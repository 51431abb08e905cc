#include <random>

#include <benchmark/benchmark.h>

#include "loom/bev_geom.hpp"
#include "loom/estimators.hpp"
#include "loom/metrics.hpp"
#include "loom/synth.hpp"

using namespace loom;

namespace {

struct LadderScene {
  SynthBundle bundle;
  RoiRect roi;
};

const LadderScene& scene() {
  static const LadderScene s = [] {
    const SceneSpec spec = benchmark_ladder()[2];
    return LadderScene{generate(spec, 0), square_roi(projected_rect(spec, 0.2))};
  }();
  return s;
}

}  // namespace

static void BM_EstimateEvents(benchmark::State& state) {
  ObservationOptions opts;
  opts.roi_size = static_cast<int>(state.range(0));
  const auto& s = scene();
  const auto obs = make_observation(s.bundle.events, 100000, 200000, s.roi, opts);
  for (auto _ : state) benchmark::DoNotOptimize(estimate_ttc(obs, EstimatorMode::kEvents));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_EstimateEvents)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

static void BM_EstimateFused(benchmark::State& state) {
  const auto& s = scene();
  const auto obs = make_observation(s.bundle.events, 100000, 200000, s.roi, {}, &s.bundle.frames[1].image,
                                    &s.bundle.frames[2].image);
  for (auto _ : state) benchmark::DoNotOptimize(estimate_ttc(obs, EstimatorMode::kFused));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_EstimateFused)->Unit(benchmark::kMillisecond);

static void BM_VoxelizeRoi(benchmark::State& state) {
  const auto& s = scene();
  const auto slice = slice_window(s.bundle.events, 50000, 150000);
  const int side = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(voxelize_roi(slice, 5, s.roi, {side, side}));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(slice.events.size()));
}
BENCHMARK(BM_VoxelizeRoi)->Arg(128)->Arg(256);

static void BM_GatherFeatures(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> data(200 * 112 * 16);
  for (auto& d : data) d = u(rng);
  const Grid2D fv(200, 112, 16, data);
  const int n = static_cast<int>(state.range(0));
  const VoxelGridConfig cfg{{1, -25, -2}, 50.0 / n, n, n, 4};
  Eigen::Matrix3d r;
  r << 0, -1, 0, 0, 0, -1, 1, 0, 0;
  const Intrinsics k{100, 100, 100, 56, {}};
  for (auto _ : state) benchmark::DoNotOptimize(gather_features(fv, cfg, k, RigidTransform(r, {0, 1.5, 0})));
  state.SetItemsProcessed(state.iterations() * n * n * 4);
}
BENCHMARK(BM_GatherFeatures)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

static void BM_Aggregate(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> gt(-10, 10), noise(0.8, 1.2);
  std::vector<TtcPair> records(static_cast<std::size_t>(state.range(0)));
  for (auto& r : records) {
    r.gt = gt(rng);
    r.pred = r.gt * noise(rng);
  }
  for (auto _ : state) benchmark::DoNotOptimize(aggregate(records));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Aggregate)->Arg(1000)->Arg(100000);
BENCHMARK_MAIN();
