#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace loom {

// Timestamps throughout the library are integer microseconds.
using Micros = std::int64_t;

struct SensorSize {
  int width = 0;
  int height = 0;

  friend bool operator==(const SensorSize&, const SensorSize&) = default;
};

// A single brightness change. Polarity is -1 or +1.
struct Event {
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  Micros t = 0;
  std::int8_t p = 1;

  friend bool operator==(const Event&, const Event&) = default;
};

// Record coordinate used for external trigger marks in event files.
inline constexpr std::uint16_t kTriggerCoordinate = 0xFFFF;

// Events sorted by time, plus the trigger marks found in the same recording.
class EventStream {
 public:
  EventStream() = default;
  EventStream(SensorSize size, std::vector<Event> events, std::vector<Micros> trigger_marks = {});

  SensorSize sensor_size() const { return size_; }
  std::span<const Event> events() const { return events_; }
  std::span<const Micros> trigger_marks() const { return triggers_; }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }

  // Set when some trigger mark falls outside [first event t, last event t].
  bool partial() const { return partial_; }

 private:
  SensorSize size_;
  std::vector<Event> events_;
  std::vector<Micros> triggers_;
  bool partial_ = false;
};

// Non-owning view of the events with t0 <= t < t1.
struct EventSlice {
  std::span<const Event> events;
  Micros t0 = 0;
  Micros t1 = 0;
};

// Dense N-bin polarity image of one time window. Cells hold 1.0 for a latest
// positive event, 0.0 for a latest negative event and 0.5 when empty.
class EventVoxelGrid {
 public:
  static constexpr float kBackground = 0.5f;

  EventVoxelGrid() = default;
  EventVoxelGrid(int width, int height, int bins, Micros t0, Micros t1);

  int width() const { return width_; }
  int height() const { return height_; }
  int bins() const { return bins_; }
  Micros t0() const { return t0_; }
  Micros t1() const { return t1_; }

  float at(int x, int y, int bin) const { return values_[index(x, y, bin)]; }
  float& at(int x, int y, int bin) { return values_[index(x, y, bin)]; }

  // Bin-major layout: values[(bin * height + y) * width + x].
  std::span<const float> values() const { return values_; }

  std::size_t occupied_cells() const;

  friend bool operator==(const EventVoxelGrid&, const EventVoxelGrid&) = default;

 private:
  std::size_t index(int x, int y, int bin) const {
    return (static_cast<std::size_t>(bin) * height_ + y) * width_ + x;
  }

  int width_ = 0;
  int height_ = 0;
  int bins_ = 0;
  Micros t0_ = 0;
  Micros t1_ = 0;
  std::vector<float> values_;
};

// Maximum tolerated backwards jump in input timestamps before ingestion fails.
inline constexpr Micros kMaxReorderJitter = 1000;

// Reads the binary "EVT1" format or, failing the magic check, CSV (x,y,t_us,p).
// CSV input carries no sensor size; pass one or it is inferred from the data.
EventStream ingest_events(const std::filesystem::path& path,
                          std::optional<SensorSize> csv_size = std::nullopt);

// Sorts within the jitter tolerance and splits off trigger records.
EventStream build_stream(SensorSize size, std::vector<Event> raw_records);

void write_events_binary(const EventStream& stream, const std::filesystem::path& path);
void write_events_csv(const EventStream& stream, const std::filesystem::path& path);

EventSlice slice_window(const EventStream& stream, Micros t0, Micros t1);
EventSlice slice_window(std::span<const Event> sorted_events, Micros t0, Micros t1);

EventVoxelGrid voxelize(const EventSlice& slice, int bins, SensorSize size);

// Rectangle in continuous image coordinates (pixel centres at integers);
// may extend past the sensor.
struct RoiRect {
  double x0 = 0.0;
  double y0 = 0.0;
  double width = 0.0;
  double height = 0.0;
};

// Voxelizes the events inside `roi` onto an out_size grid. An event lands in
// every cell its unit pixel footprint overlaps, so up- and down-sampling leave
// no holes; the most-recent rule is applied per cell after the mapping.
EventVoxelGrid voxelize_roi(const EventSlice& slice, int bins, const RoiRect& roi,
                            SensorSize out_size);

// Assigns each frame its trigger timestamp. Without an explicit offset the
// surplus triggers are assumed to precede the first frame.
std::vector<Micros> remap_clock(std::size_t frame_count, std::span<const Micros> trigger_marks,
                                std::optional<std::size_t> offset = std::nullopt);

}  // namespace loom
