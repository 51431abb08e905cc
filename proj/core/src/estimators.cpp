#include "loom/estimators.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "loom/error.hpp"
#include "loom/ttc_geometry.hpp"

namespace loom {

namespace {

// Channel-major stack of single-precision planes: v[(c * h + y) * w + x].
struct Planes {
  int w = 0;
  int h = 0;
  int k = 0;
  std::vector<float> v;

  Planes() = default;
  Planes(int w_, int h_, int k_) : w(w_), h(h_), k(k_), v(static_cast<std::size_t>(w_) * h_ * k_, 0.0f) {}

  float* row(int c, int y) { return v.data() + (static_cast<std::size_t>(c) * h + y) * w; }
  const float* row(int c, int y) const { return v.data() + (static_cast<std::size_t>(c) * h + y) * w; }
};

Planes from_voxels(const EventVoxelGrid& g) {
  Planes p(g.width(), g.height(), g.bins());
  const auto src = g.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const float s = src[i];
    p.v[i] = s == EventVoxelGrid::kBackground ? 0.0f : (s > 0.5f ? 1.0f : -1.0f);
  }
  return p;
}

Planes gradient_magnitude(const Grid2D& img) {
  Planes p(img.width(), img.height(), 1);
  const int w = img.width();
  const int h = img.height();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = 0.5 * (img.at(std::min(x + 1, w - 1), y) - img.at(std::max(x - 1, 0), y));
      const double gy = 0.5 * (img.at(x, std::min(y + 1, h - 1)) - img.at(x, std::max(y - 1, 0)));
      p.row(0, y)[x] = static_cast<float>(std::sqrt(gx * gx + gy * gy));
    }
  }
  return p;
}

// Separable Gaussian, truncated at 2 sigma, with zero padding. Rows that are
// entirely zero stay zero, which keeps sparse event maps cheap.
void blur(Planes& p, double sigma) {
  if (!(sigma > 0.0)) return;
  const int radius = static_cast<int>(std::ceil(2.0 * sigma));
  std::vector<float> kernel(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) total += std::exp(-0.5 * i * i / (sigma * sigma));
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = static_cast<float>(std::exp(-0.5 * i * i / (sigma * sigma)) / total);
  }

  std::vector<float> padded(p.w + 2 * radius, 0.0f);
  std::vector<float> tmp(static_cast<std::size_t>(p.w) * p.h);
  std::vector<char> live(p.h);
  for (int c = 0; c < p.k; ++c) {
    for (int y = 0; y < p.h; ++y) {
      float* r = p.row(c, y);
      float* out = tmp.data() + static_cast<std::size_t>(y) * p.w;
      live[y] = std::any_of(r, r + p.w, [](float v) { return v != 0.0f; });
      if (!live[y]) continue;
      std::copy(r, r + p.w, padded.begin() + radius);
      std::fill(out, out + p.w, 0.0f);
      for (int i = 0; i <= 2 * radius; ++i) {
        const float kv = kernel[i];
        const float* src = padded.data() + i;
        for (int x = 0; x < p.w; ++x) out[x] += kv * src[x];
      }
    }
    for (int y = 0; y < p.h; ++y) {
      float* out = p.row(c, y);
      std::fill(out, out + p.w, 0.0f);
      const int lo = std::max(-radius, -y);
      const int hi = std::min(radius, p.h - 1 - y);
      for (int i = lo; i <= hi; ++i) {
        if (!live[y + i]) continue;
        const float kv = kernel[i + radius];
        const float* src = tmp.data() + static_cast<std::size_t>(y + i) * p.w;
        for (int x = 0; x < p.w; ++x) out[x] += kv * src[x];
      }
    }
  }
}

Planes downsample2(const Planes& p) {
  Planes out(p.w / 2, p.h / 2, p.k);
  for (int c = 0; c < p.k; ++c) {
    for (int y = 0; y < out.h; ++y) {
      const float* r0 = p.row(c, 2 * y);
      const float* r1 = p.row(c, 2 * y + 1);
      float* dst = out.row(c, y);
      for (int x = 0; x < out.w; ++x) {
        dst[x] = 0.25f * (r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]);
      }
    }
  }
  return out;
}

// Half-open [begin, end) column runs of non-zero cells, grouped by plane row.
struct Support {
  std::vector<int> first;  // runs of plane row r are runs[first[r] .. first[r + 1])
  std::vector<std::pair<int, int>> runs;

  std::span<const std::pair<int, int>> row(int r) const {
    return {runs.data() + first[r], runs.data() + first[r + 1]};
  }
};

Support find_support(const Planes& p) {
  Support s;
  s.first.reserve(static_cast<std::size_t>(p.k) * p.h + 1);
  for (int c = 0; c < p.k; ++c) {
    for (int y = 0; y < p.h; ++y) {
      s.first.push_back(static_cast<int>(s.runs.size()));
      const float* r = p.row(c, y);
      for (int x = 0; x < p.w;) {
        if (r[x] == 0.0f) {
          ++x;
          continue;
        }
        const int begin = x;
        while (x < p.w && r[x] != 0.0f) ++x;
        s.runs.emplace_back(begin, x);
      }
    }
  }
  s.first.push_back(static_cast<int>(s.runs.size()));
  return s;
}

// Scores a scale hypothesis by the best zero-mean NCC over integer shifts of
// the scaled current map against the previous one. Both maps are mostly
// zero, so every sum runs over the non-zero support only.
class ScaleMatcher {
 public:
  static constexpr int kMaxShift = 16;

  ScaleMatcher(const Planes& prev, const Planes& cur, const Eigen::Vector2d& center, int max_shift)
      : prev_(prev),
        cur_(cur),
        prev_support_(find_support(prev)),
        cur_support_(find_support(cur)),
        buf_(cur.w, cur.h, cur.k),
        center_(center),
        max_shift_(max_shift),
        n_(static_cast<double>(prev.w) * prev.h) {
    for (int c = 0; c < prev.k; ++c) {
      double sum = 0.0;
      double sum2 = 0.0;
      for (int y = 0; y < prev.h; ++y) {
        for (const auto& [lo, hi] : prev_support_.row(c * prev.h + y)) {
          const auto seg = Eigen::VectorXf::Map(prev.row(c, y) + lo, hi - lo).cast<double>();
          sum += seg.sum();
          sum2 += seg.squaredNorm();
        }
      }
      mean_a_.push_back(sum / n_);
      sum_a2_.push_back(sum2 - n_ * mean_a_.back() * mean_a_.back());
    }
    x0_.resize(cur.w);
    ax_.resize(cur.w);
    out_first_.resize(static_cast<std::size_t>(cur.k) * cur.h + 1, 0);
    hbuf_ = Planes(cur.w, cur.h, cur.k);
    hruns_.resize(static_cast<std::size_t>(cur.k) * cur.h);
    hstamp_.resize(hruns_.size(), 0);
    row_sum_.resize(static_cast<std::size_t>(cur.k) * cur.h);
    row_sq_.resize(row_sum_.size());
    clipped_.resize(row_sum_.size());
  }

  double evaluate(double scale, bool exhaustive) {
    warp(scale);
    cache_.fill(std::numeric_limits<double>::quiet_NaN());
    if (exhaustive) {
      double best = -std::numeric_limits<double>::infinity();
      for (int dy = -max_shift_; dy <= max_shift_; ++dy) {
        for (int dx = -max_shift_; dx <= max_shift_; ++dx) {
          const double s = cached_ncc(dx, dy);
          if (s > best) {
            best = s;
            shift_ = {dx, dy};
          }
        }
      }
      return best;
    }
    // Hill-climb over the 4-neighbourhood, starting from the last optimum.
    static constexpr std::array<std::array<int, 2>, 4> kSteps{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
    Eigen::Vector2i at = shift_;
    double best = cached_ncc(at.x(), at.y());
    for (;;) {
      Eigen::Vector2i next = at;
      for (const auto& [dx, dy] : kSteps) {
        const int sx = at.x() + dx;
        const int sy = at.y() + dy;
        if (std::abs(sx) > max_shift_ || std::abs(sy) > max_shift_) continue;
        const double s = cached_ncc(sx, sy);
        if (s > best) {
          best = s;
          next = {sx, sy};
        }
      }
      if (next == at) break;
      at = next;
    }
    shift_ = at;
    return best;
  }

  const Eigen::Vector2i& shift() const { return shift_; }
  void set_shift(const Eigen::Vector2i& s) { shift_ = s; }

 private:
  static constexpr int kCacheSide = 2 * kMaxShift + 1;

  double cached_ncc(int dx, int dy) {
    double& slot = cache_[(dy + kMaxShift) * kCacheSide + (dx + kMaxShift)];
    if (std::isnan(slot)) slot = ncc(dx, dy);
    return slot;
  }

  // Output columns [lo, hi) whose bilinear footprint touches each source run
  // of plane row `r`, merged.
  void map_runs(int r, double scale, std::vector<std::pair<int, int>>& out) const {
    const int w = cur_.w;
    const double cx = center_.x();
    out.clear();
    for (const auto& [u0, u1] : cur_support_.row(r)) {
      const int lo = std::max(0, static_cast<int>(std::floor(cx + (u0 - 1.0 - cx) / scale)));
      const int hi = std::min(w, static_cast<int>(std::ceil(cx + (u1 - cx) / scale)) + 1);
      if (lo >= hi) continue;
      if (!out.empty() && lo <= out.back().second) {
        out.back().second = std::max(out.back().second, hi);
      } else {
        out.emplace_back(lo, hi);
      }
    }
  }

  // Source row `r` resampled along x at the current scale, computed once per warp.
  const std::vector<std::pair<int, int>>& resampled_row(int r, double scale) {
    auto& runs = hruns_[r];
    if (hstamp_[r] == stamp_) return runs;
    float* out = hbuf_.v.data() + static_cast<std::size_t>(r) * hbuf_.w;
    for (const auto& [lo, hi] : runs) std::fill(out + lo, out + hi, 0.0f);
    map_runs(r, scale, runs);
    const float* src = cur_.v.data() + static_cast<std::size_t>(r) * cur_.w;
    const int w = cur_.w;
    for (const auto& [lo, hi] : runs) {
      for (int x = lo; x < hi; ++x) {
        const int xx = x0_[x];
        if (xx < 0) continue;
        const int x1 = xx + 1 < w ? xx + 1 : xx;
        out[x] = src[xx] + ax_[x] * (src[x1] - src[xx]);
      }
    }
    hstamp_[r] = stamp_;
    return runs;
  }

  // buf(p) = cur(center + scale * (p - center)), zero outside the crop. The
  // warp is separable; only cells that can see a non-zero source cell are
  // written.
  void warp(double scale) {
    const int w = cur_.w;
    const int h = cur_.h;
    for (std::size_t i = 0; i + 1 < out_first_.size(); ++i) {
      float* r = buf_.v.data() + i * w;
      for (int j = out_first_[i]; j < out_first_[i + 1]; ++j) {
        std::fill(r + out_runs_[j].first, r + out_runs_[j].second, 0.0f);
      }
    }
    out_runs_.clear();
    ++stamp_;

    const double cx = center_.x();
    const double cy = center_.y();
    for (int x = 0; x < w; ++x) {
      const double u = cx + scale * (x - cx);
      const double f = std::floor(u);
      x0_[x] = (u >= 0.0 && u <= w - 1) ? static_cast<int>(f) : -1;
      ax_[x] = static_cast<float>(u - f);
    }

    for (int c = 0; c < cur_.k; ++c) {
      for (int y = 0; y < h; ++y) {
        const int plane_row = c * h + y;
        out_first_[plane_row] = static_cast<int>(out_runs_.size());
        const double v = cy + scale * (y - cy);
        if (!(v >= 0.0 && v <= h - 1)) continue;
        const int r0 = static_cast<int>(std::floor(v));
        const int r1 = std::min(r0 + 1, h - 1);
        const float wy = static_cast<float>(v - r0);
        const auto& runs0 = resampled_row(c * h + r0, scale);
        const auto& runs1 = resampled_row(c * h + r1, scale);
        if (runs0.empty() && runs1.empty()) continue;

        const float* a = hbuf_.row(c, r0);
        const float* b = hbuf_.row(c, r1);
        float* out = buf_.row(c, y);
        const auto emit = [&](int lo, int hi) {
          for (int x = lo; x < hi; ++x) out[x] = a[x] + wy * (b[x] - a[x]);
          out_runs_.emplace_back(lo, hi);
        };
        // Union of the two sorted run lists.
        std::size_t i0 = 0, i1 = 0;
        int open_lo = -1, open_hi = -1;
        while (i0 < runs0.size() || i1 < runs1.size()) {
          const bool take0 = i1 >= runs1.size() || (i0 < runs0.size() && runs0[i0].first <= runs1[i1].first);
          const auto next = take0 ? runs0[i0++] : runs1[i1++];
          if (open_hi >= next.first) {
            open_hi = std::max(open_hi, next.second);
            continue;
          }
          if (open_lo >= 0) emit(open_lo, open_hi);
          open_lo = next.first;
          open_hi = next.second;
        }
        emit(open_lo, open_hi);
      }
    }
    out_first_.back() = static_cast<int>(out_runs_.size());

    // Per-row sums, and whether a horizontal shift can cut into the row.
    for (std::size_t r = 0; r + 1 < out_first_.size(); ++r) {
      const float* row = buf_.v.data() + r * w;
      double s1 = 0.0, s2 = 0.0;
      bool near_border = false;
      for (int j = out_first_[r]; j < out_first_[r + 1]; ++j) {
        const auto [lo, hi] = out_runs_[j];
        const auto seg = Eigen::VectorXf::Map(row + lo, hi - lo);
        s1 += seg.sum();
        s2 += seg.squaredNorm();
        near_border = near_border || lo < max_shift_ || hi > w - max_shift_;
      }
      row_sum_[r] = s1;
      row_sq_[r] = s2;
      clipped_[r] = near_border;
    }
  }

  // Zero-mean NCC of prev(x) against buf(x + d) over the whole grid, with
  // buf taken as zero where x + d leaves the crop.
  double ncc(int dx, int dy) const {
    using Vec = Eigen::VectorXf;
    const int w = prev_.w;
    const int h = prev_.h;
    const int xa = std::max(0, -dx);
    const int xb = std::min(w, w - dx);
    const int ya = std::max(0, -dy);
    const int yb = std::min(h, h - dy);
    double total = 0.0;
    int channels = 0;
    for (int c = 0; c < prev_.k; ++c) {
      double sab = 0.0, sb = 0.0, sbb = 0.0;
      for (int y = ya; y < yb; ++y) {
        const float* a = prev_.row(c, y);
        const float* b = buf_.row(c, y + dy) + dx;
        for (const auto& [lo, hi] : prev_support_.row(c * h + y)) {
          const int x0 = std::max(lo, xa);
          const int x1 = std::min(hi, xb);
          if (x0 < x1) sab += Vec::Map(a + x0, x1 - x0).dot(Vec::Map(b + x0, x1 - x0));
        }

        const int r = c * h + y + dy;
        if (!clipped_[r] || (dx == 0)) {
          sb += row_sum_[r];
          sbb += row_sq_[r];
          continue;
        }
        const float* bb = buf_.row(c, y + dy);
        for (int j = out_first_[r]; j < out_first_[r + 1]; ++j) {
          const int x0 = std::max(out_runs_[j].first, xa + dx);
          const int x1 = std::min(out_runs_[j].second, xb + dx);
          if (x0 >= x1) continue;
          const auto seg = Vec::Map(bb + x0, x1 - x0);
          sb += seg.sum();
          sbb += seg.squaredNorm();
        }
      }
      if (!(sum_a2_[c] > 1e-12)) continue;
      ++channels;
      const double numerator = sab - mean_a_[c] * sb;
      const double var_b = sbb - sb * sb / n_;
      if (var_b > 1e-12) total += numerator / std::sqrt(sum_a2_[c] * var_b);
    }
    return channels > 0 ? total / channels : 0.0;
  }

  const Planes& prev_;
  const Planes& cur_;
  Support prev_support_;
  Support cur_support_;
  Planes buf_;
  Eigen::Vector2d center_;
  int max_shift_;
  double n_;
  std::vector<double> mean_a_;
  std::vector<double> sum_a2_;
  Eigen::Vector2i shift_ = Eigen::Vector2i::Zero();
  std::vector<int> x0_;
  std::vector<float> ax_;
  std::vector<int> out_first_;
  std::vector<std::pair<int, int>> out_runs_;
  Planes hbuf_;
  std::vector<std::vector<std::pair<int, int>>> hruns_;
  std::vector<unsigned> hstamp_;
  unsigned stamp_ = 0;
  std::vector<double> row_sum_;
  std::vector<double> row_sq_;
  std::vector<char> clipped_;
  std::array<double, kCacheSide * kCacheSide> cache_{};
};

void check_options(const ScaleSearchOptions& opts) {
  if (!(opts.min_scale > 0.0 && opts.max_scale > opts.min_scale) || opts.coarse_samples < 3 ||
      opts.max_shift < 0 || opts.max_shift > ScaleMatcher::kMaxShift || !(opts.tolerance > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "bad scale search options");
  }
}

// Bracket width, in log-scale, at which the half-resolution search hands over.
constexpr double kCoarseTolerance = 2e-3;

struct Probe {
  double log_scale = 0.0;
  double value = 0.0;
  Eigen::Vector2i shift = Eigen::Vector2i::Zero();
};

// Maximizes matcher.evaluate over log-scale in [a, b] until the bracket is
// narrower than `tolerance` in scale units.
Probe golden_section(ScaleMatcher& matcher, double a, double b, double tolerance) {
  constexpr double kInvPhi = 0.6180339887498949;
  const auto probe = [&](double log_s) {
    const double v = matcher.evaluate(std::exp(log_s), /*exhaustive=*/false);
    return Probe{log_s, v, matcher.shift()};
  };
  Probe c = probe(b - kInvPhi * (b - a));
  Probe d = probe(a + kInvPhi * (b - a));
  while (std::exp(b) - std::exp(a) > tolerance) {
    if (c.value >= d.value) {
      b = d.log_scale;
      d = c;
      matcher.set_shift(d.shift);
      c = probe(b - kInvPhi * (b - a));
    } else {
      a = c.log_scale;
      c = d;
      matcher.set_shift(c.shift);
      d = probe(a + kInvPhi * (b - a));
    }
  }
  return c.value >= d.value ? c : d;
}

ScaleResult search_scale(Planes prev, Planes cur, const Eigen::Vector2d& center, const ScaleSearchOptions& opts) {
  check_options(opts);
  blur(prev, opts.blur_sigma);
  blur(cur, opts.blur_sigma);

  // Bracketing scan at half resolution.
  const Planes prev_c = downsample2(prev);
  const Planes cur_c = downsample2(cur);
  const Eigen::Vector2d center_c = (center.array() + 0.5) / 2.0 - 0.5;
  ScaleMatcher coarse(prev_c, cur_c, center_c, (opts.max_shift + 1) / 2);

  const double log_lo = std::log(opts.min_scale);
  const double log_hi = std::log(opts.max_scale);
  const int n = opts.coarse_samples;
  std::vector<double> scores(n);
  std::vector<Eigen::Vector2i> shifts(n);
  int best = 0;
  for (int i = 0; i < n; ++i) {
    scores[i] = coarse.evaluate(std::exp(log_lo + (log_hi - log_lo) * i / (n - 1)), /*exhaustive=*/false);
    shifts[i] = coarse.shift();
    if (scores[i] > scores[best]) best = i;
  }
  const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / n;

  ScaleResult result;
  result.prominence = scores[best] - mean;
  result.confidence = std::clamp(result.prominence, 0.0, 1.0);
  if (!(result.prominence >= opts.min_prominence)) {
    throw Error(ErrorCode::kFlatObjective, "correlation peak is not prominent");
  }

  // Golden-section refinement in log-scale, first at half resolution to
  // narrow the bracket, then at full resolution.
  const double step = (log_hi - log_lo) / (n - 1);
  coarse.set_shift(shifts[best]);
  const Probe rough = golden_section(coarse, log_lo + step * std::max(best - 1, 0),
                                     log_lo + step * std::min(best + 1, n - 1), kCoarseTolerance);

  ScaleMatcher fine(prev, cur, center, opts.max_shift);
  fine.set_shift(rough.shift * 2);
  double a = std::max(log_lo, rough.log_scale - 2.0 * kCoarseTolerance);
  double b = std::min(log_hi, rough.log_scale + 2.0 * kCoarseTolerance);
  Probe peak = golden_section(fine, a, b, opts.tolerance);
  // Slide the bracket if the optimum sits on one of its ends.
  for (int slide = 0; slide < 8; ++slide) {
    const double width = b - a;
    if (peak.log_scale - a < 0.1 * width && a > log_lo) {
      b = a + 0.2 * width;
      a = std::max(log_lo, a - 0.8 * width);
    } else if (b - peak.log_scale < 0.1 * width && b < log_hi) {
      a = b - 0.2 * width;
      b = std::min(log_hi, b + 0.8 * width);
    } else {
      break;
    }
    fine.set_shift(peak.shift);
    peak = golden_section(fine, a, b, opts.tolerance);
  }

  // Three-point parabolic refinement around the golden-section optimum.
  double log_s = peak.log_scale;
  const double h = std::max(opts.tolerance, 1e-3);
  fine.set_shift(peak.shift);
  const double f0 = fine.evaluate(std::exp(log_s - h), false);
  fine.set_shift(peak.shift);
  const double f2 = fine.evaluate(std::exp(log_s + h), false);
  const double f1 = peak.value;
  const double denom = f0 - 2.0 * f1 + f2;
  if (denom < 0.0) {
    const double offset = 0.5 * h * (f0 - f2) / denom;
    if (std::abs(offset) <= h) log_s += offset;
  }
  result.scale = std::clamp(std::exp(log_s), opts.min_scale, opts.max_scale);
  result.peak = f1;
  result.shift = peak.shift;
  return result;
}

double eta_of_scale(double scale) { return 1.0 / scale; }

}  // namespace


ScaleResult estimate_scale_events(const EventVoxelGrid& prev, const EventVoxelGrid& cur,
                                  const Eigen::Vector2d& center, const ScaleSearchOptions& opts) {
  if (prev.width() != cur.width() || prev.height() != cur.height() || prev.bins() != cur.bins()) {
    throw Error(ErrorCode::kInvalidArgument, "voxel crops must share their geometry");
  }
  const auto floor = static_cast<std::size_t>(opts.min_event_cells);
  if (prev.occupied_cells() < floor || cur.occupied_cells() < floor) {
    throw Error(ErrorCode::kNoEvents, "too few event cells in the ROI");
  }
  return search_scale(from_voxels(prev), from_voxels(cur), center, opts);
}

ScaleResult estimate_scale_frames(const Grid2D& prev, const Grid2D& cur, const Eigen::Vector2d& center,
                                  const ScaleSearchOptions& opts) {
  if (prev.width() != cur.width() || prev.height() != cur.height() || prev.channels() != 1 ||
      cur.channels() != 1) {
    throw Error(ErrorCode::kInvalidArgument, "frame crops must be single-channel and equal in size");
  }
  return search_scale(gradient_magnitude(prev), gradient_magnitude(cur), center, opts);
}

EstimatorMode parse_mode(std::string_view name) {
  if (name == "events") return EstimatorMode::kEvents;
  if (name == "frames") return EstimatorMode::kFrames;
  if (name == "fused") return EstimatorMode::kFused;
  throw Error(ErrorCode::kInvalidArgument, "unknown mode: " + std::string(name));
}

std::string_view to_string(EstimatorMode mode) {
  switch (mode) {
    case EstimatorMode::kEvents: return "events";
    case EstimatorMode::kFrames: return "frames";
    case EstimatorMode::kFused: return "fused";
  }
  return "unknown";
}

Eigen::Vector2d RoiObservation::center() const {
  int w = 0, h = 0;
  if (voxel_cur) {
    w = voxel_cur->width();
    h = voxel_cur->height();
  } else if (frame_cur) {
    w = frame_cur->width();
    h = frame_cur->height();
  }
  return {0.5 * w - 0.5, 0.5 * h - 0.5};
}

TtcEstimate estimate_ttc(const RoiObservation& obs, EstimatorMode mode, const ScaleSearchOptions& opts) {
  if (!(obs.dt > 0.0)) throw Error(ErrorCode::kInvalidArgument, "dt must be positive");
  const auto from_scale = [&](const ScaleResult& r, std::string method) {
    TtcEstimate e;
    e.height_ratio = eta_of_scale(r.scale);
    e.ttc = ttc_from_ratio(e.height_ratio, obs.dt);
    e.confidence = r.confidence;
    e.method = std::move(method);
    return e;
  };
  const auto run_events = [&] {
    if (!obs.voxel_prev || !obs.voxel_cur) throw Error(ErrorCode::kInvalidArgument, "observation has no event crops");
    return estimate_scale_events(*obs.voxel_prev, *obs.voxel_cur, obs.center(), opts);
  };
  const auto run_frames = [&] {
    if (!obs.frame_prev || !obs.frame_cur) throw Error(ErrorCode::kInvalidArgument, "observation has no frame crops");
    return estimate_scale_frames(*obs.frame_prev, *obs.frame_cur, obs.center(), opts);
  };

  switch (mode) {
    case EstimatorMode::kEvents: return from_scale(run_events(), "events");
    case EstimatorMode::kFrames: return from_scale(run_frames(), "frames");
    case EstimatorMode::kFused: break;
  }

  std::optional<ScaleResult> ev, fr;
  std::string ev_error, fr_error;
  ErrorCode code = ErrorCode::kInvalidArgument;
  try {
    ev = run_events();
  } catch (const Error& e) {
    ev_error = e.what();
    code = e.code();
  }
  try {
    fr = run_frames();
  } catch (const Error& e) {
    fr_error = e.what();
    code = e.code();
  }
  if (!ev && !fr) {
    throw Error(code, "events: " + ev_error + "; frames: " + fr_error);
  }
  if (!ev) return from_scale(*fr, "fused:frames");
  if (!fr) return from_scale(*ev, "fused:events");

  // Confidence-weighted average in motion-in-depth space.
  const double we = ev->confidence;
  const double wf = fr->confidence;
  const double total = we + wf;
  const double eta = total > 0.0
                         ? (we * eta_of_scale(ev->scale) + wf * eta_of_scale(fr->scale)) / total
                         : 0.5 * (eta_of_scale(ev->scale) + eta_of_scale(fr->scale));
  TtcEstimate e;
  e.height_ratio = eta;
  e.ttc = ttc_from_ratio(eta, obs.dt);
  e.confidence = std::max(we, wf);
  e.method = "fused";
  return e;
}

RoiRect square_roi(const RoiRect& box, double margin) {
  const double side = margin * std::max(box.width, box.height);
  const double cx = box.x0 + 0.5 * box.width;
  const double cy = box.y0 + 0.5 * box.height;
  return {cx - 0.5 * side, cy - 0.5 * side, side, side};
}

namespace {

struct Tap {
  int pixel;
  double weight;
};

// Overlap of each output cell [lo + g * cell, lo + (g + 1) * cell) with the
// unit pixel footprints, normalized to sum to one.
std::vector<std::vector<Tap>> box_taps(double lo, double cell, int count) {
  std::vector<std::vector<Tap>> taps(count);
  for (int g = 0; g < count; ++g) {
    const double a = lo + g * cell;
    const double b = a + cell;
    for (int p = static_cast<int>(std::floor(a + 0.5)); p - 0.5 < b; ++p) {
      const double overlap = std::min(b, p + 0.5) - std::max(a, p - 0.5);
      if (overlap > 0.0) taps[g].push_back({p, overlap / cell});
    }
  }
  return taps;
}

}  // namespace

Grid2D crop_resample(const Grid2D& image, const RoiRect& roi, SensorSize out_size) {
  Grid2D out(out_size.width, out_size.height, image.channels(), image.out_of_range_fill());
  const double sx = roi.width / out_size.width;
  const double sy = roi.height / out_size.height;
  if (sx < 1.0 || sy < 1.0) {
    std::vector<double> px(image.channels());
    for (int y = 0; y < out_size.height; ++y) {
      for (int x = 0; x < out_size.width; ++x) {
        bilinear_sample(image, roi.x0 + (x + 0.5) * sx, roi.y0 + (y + 0.5) * sy, px);
        for (int c = 0; c < image.channels(); ++c) out.at(x, y, c) = px[c];
      }
    }
    return out;
  }

  // Downsampling averages the pixels under each cell.
  const auto tx = box_taps(roi.x0, sx, out_size.width);
  const auto ty = box_taps(roi.y0, sy, out_size.height);
  const auto pixel = [&](int x, int y, int c) {
    const bool inside = x >= 0 && y >= 0 && x < image.width() && y < image.height();
    return inside ? image.at(x, y, c) : image.out_of_range_fill();
  };
  for (int y = 0; y < out_size.height; ++y) {
    for (int x = 0; x < out_size.width; ++x) {
      for (int c = 0; c < image.channels(); ++c) {
        double acc = 0.0;
        for (const auto& [py, wy] : ty[y]) {
          for (const auto& [px, wx] : tx[x]) acc += wy * wx * pixel(px, py, c);
        }
        out.at(x, y, c) = acc;
      }
    }
  }
  return out;
}

RoiObservation make_observation(const EventStream& events, Micros t_prev, Micros t_cur, const RoiRect& roi,
                                const ObservationOptions& opts, const Grid2D* frame_prev,
                                const Grid2D* frame_cur) {
  if (!(t_cur > t_prev)) throw Error(ErrorCode::kInvalidArgument, "observations must be time-ordered");
  RoiObservation obs;
  obs.roi = roi;
  obs.t_prev = t_prev;
  obs.t_cur = t_cur;
  obs.dt = static_cast<double>(t_cur - t_prev) * 1e-6;
  const SensorSize out{opts.roi_size, opts.roi_size};
  const auto half = static_cast<Micros>(std::llround(0.5 * opts.window * 1e6));
  obs.voxel_prev = voxelize_roi(slice_window(events, t_prev - half, t_prev + half), opts.bins, roi, out);
  obs.voxel_cur = voxelize_roi(slice_window(events, t_cur - half, t_cur + half), opts.bins, roi, out);
  if (frame_prev && frame_cur) {
    obs.frame_prev = crop_resample(*frame_prev, roi, out);
    obs.frame_cur = crop_resample(*frame_cur, roi, out);
  }
  return obs;
}

double linear_extrapolation_baseline(std::span<const DepthSample> samples) {
  if (samples.size() < 2) throw Error(ErrorCode::kInvalidArgument, "need at least two samples");
  double mt = 0.0, mz = 0.0;
  for (const auto& s : samples) {
    mt += s.t;
    mz += s.z;
  }
  mt /= samples.size();
  mz /= samples.size();
  double stt = 0.0, stz = 0.0;
  for (const auto& s : samples) {
    stt += (s.t - mt) * (s.t - mt);
    stz += (s.t - mt) * (s.z - mz);
  }
  if (!(stt > 0.0)) throw Error(ErrorCode::kInvalidArgument, "sample times must be distinct");
  const double slope = stz / stt;
  if (!(std::abs(slope) >= kMinClosingSpeed)) throw Error(ErrorCode::kUndefinedTtc, "depth is not changing");
  const auto last = std::max_element(samples.begin(), samples.end(),
                                     [](const DepthSample& a, const DepthSample& b) { return a.t < b.t; });
  const double z_last = mz + slope * (last->t - mt);
  return z_last / -slope;
}

}  // namespace loom
