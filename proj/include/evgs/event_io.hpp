#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace evgs {

/// One polarity tick. Timestamps are integer microseconds; p is +1 or -1.
struct Event {
  int64_t t = 0;
  uint16_t x = 0;
  uint16_t y = 0;
  int8_t p = 1;

  bool operator==(const Event&) const = default;
};

/// Events sorted nondecreasing by t, plus sensor geometry and the contrast
/// threshold the stream was captured (or simulated) with.
struct EventStream {
  std::vector<Event> events;
  int width = 0;
  int height = 0;
  double threshold = 0.0;  // log-intensity units, > 0

  /// Throws ValidationError on any invariant violation.
  void validate() const;

  bool operator==(const EventStream&) const = default;
};

/// Per-pixel accumulated log-intensity change over (t1, t2].
struct EventFrame {
  int height = 0;
  int width = 0;
  int64_t t1 = 0;
  int64_t t2 = 0;
  std::vector<double> values;

  EventFrame() = default;
  EventFrame(int h, int w, int64_t t1_, int64_t t2_)
      : height(h), width(w), t1(t1_), t2(t2_),
        values(static_cast<std::size_t>(h) * w, 0.0) {}

  double& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

enum class EventFormat { Csv, Binary };

/// Sensor geometry for formats that do not carry it themselves (CSV).
struct SensorMeta {
  int width = 0;
  int height = 0;
  double threshold = 0.0;
};

/// Decodes an event stream. The binary format is self-describing; CSV carries
/// only the event records, so `meta` is required for it.
/// Throws ParseError (with a line/record position) or ValidationError.
EventStream parse_events(std::string_view bytes, EventFormat format,
                         std::optional<SensorMeta> meta = std::nullopt);

/// Bit-exact serialization; the inverse of parse_events.
std::string write_events(const EventStream& stream, EventFormat format);

// File helpers. Format is chosen by extension: ".csv" is CSV, anything else
// is the binary container.
EventStream read_events_file(const std::string& path,
                             std::optional<SensorMeta> meta = std::nullopt);
void write_events_file(const std::string& path, const EventStream& stream);

/// A run of exactly k consecutive events: indices [begin, end) into the
/// stream, with the accumulation bounds (t1, t2] that cover it.
struct CountWindow {
  int64_t t1 = 0;
  int64_t t2 = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Contiguous non-overlapping windows of exactly k events; a trailing
/// remainder shorter than k is dropped. t1 of the first window is the first
/// event's timestamp minus 1 us.
std::vector<CountWindow> slice_by_count(const EventStream& stream, int64_t k);

/// Sum of p * threshold per pixel over events with t1 < t <= t2.
EventFrame accumulate_frame(const EventStream& stream, int64_t t1, int64_t t2);

}  // namespace evgs
