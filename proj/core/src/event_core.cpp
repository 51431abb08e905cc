#include "loom/event_core.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <string>

#include "loom/error.hpp"

namespace loom {

namespace {

constexpr std::array<char, 4> kMagic = {'E', 'V', 'T', '1'};
constexpr std::size_t kHeaderBytes = 16;
constexpr std::size_t kRecordBytes = 12;
constexpr std::uint64_t kPolarityBit = std::uint64_t{1} << 63;

template <typename T>
T read_le(const std::uint8_t* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
  return v;
}

template <typename T>
void write_le(std::ostream& os, T v) {
  std::array<char, sizeof(T)> buf{};
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(buf.data(), buf.size());
}

bool is_trigger(const Event& e) { return e.x == kTriggerCoordinate && e.y == kTriggerCoordinate; }

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

EventStream parse_binary(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kHeaderBytes) throw Error(ErrorCode::kMalformedRecord, "truncated header");
  const SensorSize size{read_le<std::uint16_t>(&bytes[4]), read_le<std::uint16_t>(&bytes[6])};
  const std::uint64_t count = read_le<std::uint32_t>(&bytes[8]);
  const std::size_t body = bytes.size() - kHeaderBytes;
  if (body != count * kRecordBytes) {
    throw Error(ErrorCode::kMalformedRecord,
                "header declares " + std::to_string(count) + " records but body holds " +
                    std::to_string(body) + " bytes");
  }

  std::vector<Event> records;
  records.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint8_t* rec = &bytes[kHeaderBytes + i * kRecordBytes];
    const auto composite = read_le<std::uint64_t>(rec + 4);
    Event e;
    e.x = read_le<std::uint16_t>(rec);
    e.y = read_le<std::uint16_t>(rec + 2);
    e.t = static_cast<Micros>(composite & ~kPolarityBit);
    e.p = (composite & kPolarityBit) ? 1 : -1;
    if (!is_trigger(e) && (e.x >= size.width || e.y >= size.height)) {
      throw Error(ErrorCode::kMalformedRecord,
                  "record " + std::to_string(i) + " lies outside the sensor");
    }
    records.push_back(e);
  }
  return build_stream(size, std::move(records));
}

template <typename T>
bool parse_field(std::string_view s, T& out) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

EventStream parse_csv(const std::vector<std::uint8_t>& bytes, std::optional<SensorSize> size) {
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::vector<Event> records;
  std::string line;
  std::size_t line_no = 0;
  int max_x = -1;
  int max_y = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r" || line.front() == '#') continue;

    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (auto comma = rest.find(','); ; comma = rest.find(',')) {
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }

    long x = 0, y = 0, p = 0;
    Micros t = 0;
    const bool ok = fields.size() == 4 && parse_field(fields[0], x) &&
                    parse_field(fields[1], y) && parse_field(fields[2], t) &&
                    parse_field(fields[3], p);
    if (!ok) {
      if (line_no == 1 && records.empty()) continue;  // header row
      throw Error(ErrorCode::kMalformedRecord, "bad CSV line " + std::to_string(line_no));
    }
    if (x < 0 || y < 0 || x > 0xFFFF || y > 0xFFFF || t < 0 || !(p == 0 || p == 1 || p == -1)) {
      throw Error(ErrorCode::kMalformedRecord, "out-of-range field on line " + std::to_string(line_no));
    }
    Event e{static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), t,
            static_cast<std::int8_t>(p == 1 ? 1 : -1)};
    if (!is_trigger(e)) {
      max_x = std::max(max_x, static_cast<int>(x));
      max_y = std::max(max_y, static_cast<int>(y));
    }
    records.push_back(e);
  }

  const SensorSize resolved = size.value_or(SensorSize{max_x + 1, max_y + 1});
  for (const auto& e : records) {
    if (!is_trigger(e) && (e.x >= resolved.width || e.y >= resolved.height)) {
      throw Error(ErrorCode::kMalformedRecord, "CSV event outside the declared sensor size");
    }
  }
  return build_stream(resolved, std::move(records));
}

void check_jitter(const std::vector<Event>& seq) {
  Micros running_max = std::numeric_limits<Micros>::min();
  for (const auto& e : seq) {
    if (running_max != std::numeric_limits<Micros>::min() && e.t < running_max - kMaxReorderJitter) {
      throw Error(ErrorCode::kNonMonotonicTime,
                  "timestamp " + std::to_string(e.t) + " is more than 1 ms behind " +
                      std::to_string(running_max));
    }
    running_max = std::max(running_max, e.t);
  }
}

}  // namespace

EventStream::EventStream(SensorSize size, std::vector<Event> events, std::vector<Micros> trigger_marks)
    : size_(size), events_(std::move(events)), triggers_(std::move(trigger_marks)) {
  if (!std::is_sorted(events_.begin(), events_.end(),
                      [](const Event& a, const Event& b) { return a.t < b.t; })) {
    throw Error(ErrorCode::kNonMonotonicTime, "events must be sorted by timestamp");
  }
  if (!triggers_.empty()) {
    if (events_.empty()) {
      partial_ = true;
    } else {
      const Micros first = events_.front().t;
      const Micros last = events_.back().t;
      partial_ = std::any_of(triggers_.begin(), triggers_.end(),
                             [&](Micros m) { return m < first || m > last; });
    }
  }
}

EventVoxelGrid::EventVoxelGrid(int width, int height, int bins, Micros t0, Micros t1)
    : width_(width), height_(height), bins_(bins), t0_(t0), t1_(t1),
      values_(static_cast<std::size_t>(width) * height * bins, kBackground) {}

std::size_t EventVoxelGrid::occupied_cells() const {
  return static_cast<std::size_t>(
      std::count_if(values_.begin(), values_.end(), [](float v) { return v != kBackground; }));
}

EventStream build_stream(SensorSize size, std::vector<Event> raw_records) {
  std::vector<Event> events;
  std::vector<Event> triggers;
  events.reserve(raw_records.size());
  for (const auto& r : raw_records) (is_trigger(r) ? triggers : events).push_back(r);

  check_jitter(events);
  check_jitter(triggers);
  const auto by_time = [](const Event& a, const Event& b) { return a.t < b.t; };
  std::stable_sort(events.begin(), events.end(), by_time);
  std::stable_sort(triggers.begin(), triggers.end(), by_time);

  std::vector<Micros> marks;
  marks.reserve(triggers.size());
  for (const auto& t : triggers) marks.push_back(t.t);
  return EventStream(size, std::move(events), std::move(marks));
}

EventStream ingest_events(const std::filesystem::path& path, std::optional<SensorSize> csv_size) {
  const auto bytes = read_file(path);
  if (bytes.size() >= kMagic.size() && std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    return parse_binary(bytes);
  }
  return parse_csv(bytes, csv_size);
}

void write_events_binary(const EventStream& stream, const std::filesystem::path& path) {
  std::vector<Event> records(stream.events().begin(), stream.events().end());
  for (Micros m : stream.trigger_marks()) records.push_back({kTriggerCoordinate, kTriggerCoordinate, m, 1});
  std::stable_sort(records.begin(), records.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
  if (records.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorCode::kInvalidArgument, "too many records for the EVT1 format");
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(kMagic.data(), kMagic.size());
  write_le<std::uint16_t>(out, static_cast<std::uint16_t>(stream.sensor_size().width));
  write_le<std::uint16_t>(out, static_cast<std::uint16_t>(stream.sensor_size().height));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(records.size()));
  write_le<std::uint32_t>(out, 0);
  for (const auto& r : records) {
    write_le<std::uint16_t>(out, r.x);
    write_le<std::uint16_t>(out, r.y);
    std::uint64_t composite = static_cast<std::uint64_t>(r.t) & ~kPolarityBit;
    if (r.p > 0) composite |= kPolarityBit;
    write_le<std::uint64_t>(out, composite);
  }
  if (!out) throw Error(ErrorCode::kIo, "short write to " + path.string());
}

void write_events_csv(const EventStream& stream, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << "x,y,t_us,p\n";
  std::vector<Event> records(stream.events().begin(), stream.events().end());
  for (Micros m : stream.trigger_marks()) records.push_back({kTriggerCoordinate, kTriggerCoordinate, m, 1});
  std::stable_sort(records.begin(), records.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
  for (const auto& r : records) {
    out << r.x << ',' << r.y << ',' << r.t << ',' << (r.p > 0 ? 1 : 0) << '\n';
  }
}

EventSlice slice_window(std::span<const Event> sorted_events, Micros t0, Micros t1) {
  if (!(t0 < t1)) throw Error(ErrorCode::kInvalidArgument, "slice_window requires t0 < t1");
  const auto lo = std::lower_bound(sorted_events.begin(), sorted_events.end(), t0,
                                   [](const Event& e, Micros t) { return e.t < t; });
  const auto hi = std::lower_bound(lo, sorted_events.end(), t1,
                                   [](const Event& e, Micros t) { return e.t < t; });
  return {std::span<const Event>(lo, hi), t0, t1};
}

EventSlice slice_window(const EventStream& stream, Micros t0, Micros t1) {
  return slice_window(stream.events(), t0, t1);
}

namespace {

__extension__ using Wide = __int128;

int bin_of(Micros t, Micros t0, Micros t1, int bins) {
  if (t1 - t0 <= std::numeric_limits<Micros>::max() / bins) {
    return std::min(static_cast<int>((t - t0) * bins / (t1 - t0)), bins - 1);
  }
  const auto span = static_cast<Wide>(t1 - t0);
  const auto b = static_cast<int>(static_cast<Wide>(t - t0) * bins / span);
  return std::min(b, bins - 1);
}

void check_window(const EventSlice& slice, int bins) {
  if (bins < 1) throw Error(ErrorCode::kBinCountZero, "voxelize needs at least one bin");
  if (!(slice.t0 < slice.t1)) throw Error(ErrorCode::kInvalidArgument, "empty voxel window");
}

}  // namespace

EventVoxelGrid voxelize(const EventSlice& slice, int bins, SensorSize size) {
  check_window(slice, bins);
  EventVoxelGrid grid(size.width, size.height, bins, slice.t0, slice.t1);
  std::vector<Micros> latest(grid.values().size(), std::numeric_limits<Micros>::min());
  for (const auto& e : slice.events) {
    if (e.x >= size.width || e.y >= size.height) {
      throw Error(ErrorCode::kInvalidArgument, "event outside the voxel grid");
    }
    if (e.t < slice.t0 || e.t >= slice.t1) {
      throw Error(ErrorCode::kInvalidArgument, "event outside the voxel window");
    }
    const int b = bin_of(e.t, slice.t0, slice.t1, bins);
    const std::size_t idx = (static_cast<std::size_t>(b) * size.height + e.y) * size.width + e.x;
    if (e.t >= latest[idx]) {
      latest[idx] = e.t;
      grid.at(e.x, e.y, b) = e.p > 0 ? 1.0f : 0.0f;
    }
  }
  return grid;
}

EventVoxelGrid voxelize_roi(const EventSlice& slice, int bins, const RoiRect& roi,
                            SensorSize out_size) {
  check_window(slice, bins);
  if (!(roi.width > 0.0 && roi.height > 0.0) || out_size.width < 1 || out_size.height < 1) {
    throw Error(ErrorCode::kInvalidArgument, "degenerate ROI");
  }
  EventVoxelGrid grid(out_size.width, out_size.height, bins, slice.t0, slice.t1);
  const double sx = out_size.width / roi.width;
  const double sy = out_size.height / roi.height;

  // Cells overlapped by the unit footprint of every sensor row/column that
  // can reach the grid; columns outside get an empty range.
  struct Range {
    int first = 0;
    int last = -1;
  };
  const auto ranges = [](double origin, double scale, int n, int& base) {
    base = static_cast<int>(std::floor(origin)) - 1;
    const int count = static_cast<int>(std::ceil(n / scale)) + 3;
    std::vector<Range> out(count);
    for (int i = 0; i < count; ++i) {
      const int p = base + i;
      out[i].first = std::max(0, static_cast<int>(std::floor((p - 0.5 - origin) * scale)));
      out[i].last = std::min(n - 1, static_cast<int>(std::ceil((p + 0.5 - origin) * scale)) - 1);
    }
    return out;
  };
  int x_base = 0, y_base = 0;
  const std::vector<Range> cols = ranges(roi.x0, sx, out_size.width, x_base);
  const std::vector<Range> rows = ranges(roi.y0, sy, out_size.height, y_base);

  const auto in_window = [&](const Event& e) { return e.t >= slice.t0 && e.t < slice.t1; };
  const bool sorted = std::is_sorted(slice.events.begin(), slice.events.end(),
                                     [](const Event& a, const Event& b) { return a.t < b.t; });
  // Time-sorted input lets later events simply overwrite earlier ones.
  std::vector<Micros> latest;
  if (!sorted) latest.assign(grid.values().size(), std::numeric_limits<Micros>::min());

  const std::size_t plane = static_cast<std::size_t>(out_size.width) * out_size.height;
  for (const auto& e : slice.events) {
    const int cx = e.x - x_base;
    const int cy = e.y - y_base;
    if (cx < 0 || cy < 0 || cx >= static_cast<int>(cols.size()) || cy >= static_cast<int>(rows.size())) continue;
    const Range xr = cols[cx];
    const Range yr = rows[cy];
    if (xr.first > xr.last || yr.first > yr.last || !in_window(e)) continue;
    const int b = bin_of(e.t, slice.t0, slice.t1, bins);
    const float value = e.p > 0 ? 1.0f : 0.0f;
    for (int y = yr.first; y <= yr.last; ++y) {
      const std::size_t row = b * plane + static_cast<std::size_t>(y) * out_size.width;
      for (int x = xr.first; x <= xr.last; ++x) {
        if (!sorted) {
          if (e.t < latest[row + x]) continue;
          latest[row + x] = e.t;
        }
        grid.at(x, y, b) = value;
      }
    }
  }
  return grid;
}

std::vector<Micros> remap_clock(std::size_t frame_count, std::span<const Micros> trigger_marks,
                                std::optional<std::size_t> offset) {
  for (std::size_t i = 1; i < trigger_marks.size(); ++i) {
    if (trigger_marks[i] <= trigger_marks[i - 1]) {
      throw Error(ErrorCode::kInvalidArgument, "trigger marks must be strictly increasing");
    }
  }
  const std::size_t available = trigger_marks.size();
  const std::size_t shift =
      offset.value_or(available > frame_count ? available - frame_count : 0);
  if (frame_count + shift > available) {
    const std::size_t deficit = frame_count + shift - available;
    throw CountMismatchError(deficit, "need " + std::to_string(frame_count + shift) +
                                          " trigger marks but found " + std::to_string(available) +
                                          " (deficit " + std::to_string(deficit) + ")");
  }
  return {trigger_marks.begin() + static_cast<std::ptrdiff_t>(shift),
          trigger_marks.begin() + static_cast<std::ptrdiff_t>(shift + frame_count)};
}

}  // namespace loom
