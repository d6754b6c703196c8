#include "evgs/event_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "evgs/errors.hpp"

namespace evgs {

namespace {

constexpr char kCsvHeader[] = "t_us,x,y,p";
constexpr char kBinaryMagic[4] = {'E', 'V', 'G', 'S'};
constexpr std::size_t kBinaryHeaderSize = 16;
constexpr std::size_t kBinaryRecordSize = 13;  // u64 t, u16 x, u16 y, i8 p

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.push_back(static_cast<char>((static_cast<uint64_t>(value) >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const char* p) {
  uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    v |= static_cast<uint64_t>(static_cast<uint8_t>(p[i])) << (8 * i);
  return static_cast<T>(v);
}

int64_t parse_int_field(std::string_view field, std::size_t line_no, const char* name) {
  int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw ParseError("line " + std::to_string(line_no) + ": malformed " + name +
                     " field '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace

void EventStream::validate() const {
  if (width <= 0 || height <= 0)
    throw ValidationError("event stream: sensor resolution must be positive");
  if (!(threshold > 0.0))
    throw ValidationError("event stream: threshold must be > 0");
  int64_t prev_t = INT64_MIN;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const Event& e = events[i];
    if (e.p != 1 && e.p != -1)
      throw ValidationError("event " + std::to_string(i) + ": polarity " +
                            std::to_string(int(e.p)) + " outside {-1,+1}");
    if (e.x >= width || e.y >= height)
      throw ValidationError("event " + std::to_string(i) + ": pixel (" +
                            std::to_string(e.x) + "," + std::to_string(e.y) +
                            ") outside " + std::to_string(width) + "x" +
                            std::to_string(height));
    if (e.t < prev_t)
      throw ValidationError("event " + std::to_string(i) + ": timestamp " +
                            std::to_string(e.t) + " decreases");
    prev_t = e.t;
  }
}

EventStream parse_events(std::string_view bytes, EventFormat format,
                         std::optional<SensorMeta> meta) {
  EventStream stream;
  if (format == EventFormat::Csv) {
    if (!meta)
      throw ParseError("CSV event files carry no sensor metadata; width/height/threshold required");
    stream.width = meta->width;
    stream.height = meta->height;
    stream.threshold = meta->threshold;

    std::size_t pos = 0, line_no = 0;
    while (pos <= bytes.size()) {
      std::size_t eol = bytes.find('\n', pos);
      std::string_view line = bytes.substr(pos, eol == std::string_view::npos
                                                    ? std::string_view::npos
                                                    : eol - pos);
      pos = eol == std::string_view::npos ? bytes.size() + 1 : eol + 1;
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      ++line_no;
      if (line_no == 1) {
        if (line != kCsvHeader)
          throw ParseError("line 1: expected header '" + std::string(kCsvHeader) + "'");
        continue;
      }
      if (line.empty()) continue;

      std::string_view fields[4];
      std::size_t start = 0;
      for (int f = 0; f < 4; ++f) {
        const std::size_t comma = line.find(',', start);
        if (f < 3) {
          if (comma == std::string_view::npos)
            throw ParseError("line " + std::to_string(line_no) + ": expected 4 fields");
          fields[f] = line.substr(start, comma - start);
          start = comma + 1;
        } else {
          if (comma != std::string_view::npos)
            throw ParseError("line " + std::to_string(line_no) + ": expected 4 fields");
          fields[f] = line.substr(start);
        }
      }
      Event e;
      e.t = parse_int_field(fields[0], line_no, "t_us");
      const int64_t x = parse_int_field(fields[1], line_no, "x");
      const int64_t y = parse_int_field(fields[2], line_no, "y");
      const int64_t p = parse_int_field(fields[3], line_no, "p");
      if (x < 0 || x > UINT16_MAX || y < 0 || y > UINT16_MAX)
        throw ParseError("line " + std::to_string(line_no) + ": pixel out of range");
      e.x = static_cast<uint16_t>(x);
      e.y = static_cast<uint16_t>(y);
      if (p != 1 && p != -1)
        throw ValidationError("line " + std::to_string(line_no) + ": polarity " +
                              std::to_string(p) + " outside {-1,+1}");
      e.p = static_cast<int8_t>(p);
      stream.events.push_back(e);
    }
  } else {
    if (bytes.size() < kBinaryHeaderSize)
      throw ParseError("binary event file shorter than its 16-byte header");
    if (std::memcmp(bytes.data(), kBinaryMagic, 4) != 0)
      throw ParseError("binary event file: bad magic, expected 'EVGS'");
    stream.width = get_le<uint16_t>(bytes.data() + 4);
    stream.height = get_le<uint16_t>(bytes.data() + 6);
    const uint64_t thr_bits = get_le<uint64_t>(bytes.data() + 8);
    stream.threshold = std::bit_cast<double>(thr_bits);

    const std::size_t payload = bytes.size() - kBinaryHeaderSize;
    if (payload % kBinaryRecordSize != 0)
      throw ParseError("binary event file: trailing partial record (" +
                       std::to_string(payload % kBinaryRecordSize) + " bytes)");
    const std::size_t n = payload / kBinaryRecordSize;
    stream.events.reserve(n);
    const char* rec = bytes.data() + kBinaryHeaderSize;
    for (std::size_t i = 0; i < n; ++i, rec += kBinaryRecordSize) {
      Event e;
      e.t = static_cast<int64_t>(get_le<uint64_t>(rec));
      e.x = get_le<uint16_t>(rec + 8);
      e.y = get_le<uint16_t>(rec + 10);
      const int8_t p = static_cast<int8_t>(rec[12]);
      if (p != 1 && p != -1)
        throw ValidationError("record " + std::to_string(i) + ": polarity " +
                              std::to_string(int(p)) + " outside {-1,+1}");
      e.p = p;
      stream.events.push_back(e);
    }
  }
  stream.validate();
  return stream;
}

std::string write_events(const EventStream& stream, EventFormat format) {
  stream.validate();
  std::string out;
  if (format == EventFormat::Csv) {
    out = std::string(kCsvHeader) + "\n";
    for (const Event& e : stream.events) {
      out += std::to_string(e.t);
      out += ',';
      out += std::to_string(e.x);
      out += ',';
      out += std::to_string(e.y);
      out += ',';
      out += std::to_string(int(e.p));
      out += '\n';
    }
  } else {
    out.reserve(kBinaryHeaderSize + stream.events.size() * kBinaryRecordSize);
    out.append(kBinaryMagic, 4);
    put_le<uint16_t>(out, static_cast<uint16_t>(stream.width));
    put_le<uint16_t>(out, static_cast<uint16_t>(stream.height));
    put_le<uint64_t>(out, std::bit_cast<uint64_t>(stream.threshold));
    for (const Event& e : stream.events) {
      put_le<uint64_t>(out, static_cast<uint64_t>(e.t));
      put_le<uint16_t>(out, e.x);
      put_le<uint16_t>(out, e.y);
      out.push_back(static_cast<char>(e.p));
    }
  }
  return out;
}

EventStream read_events_file(const std::string& path, std::optional<SensorMeta> meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open event file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const EventFormat fmt =
      path.size() >= 4 && path.substr(path.size() - 4) == ".csv" ? EventFormat::Csv
                                                                 : EventFormat::Binary;
  return parse_events(buf.str(), fmt, meta);
}

void write_events_file(const std::string& path, const EventStream& stream) {
  const EventFormat fmt =
      path.size() >= 4 && path.substr(path.size() - 4) == ".csv" ? EventFormat::Csv
                                                                 : EventFormat::Binary;
  const std::string bytes = write_events(stream, fmt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open event file for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for event file: " + path);
}

std::vector<CountWindow> slice_by_count(const EventStream& stream, int64_t k) {
  if (k <= 0) throw std::invalid_argument("slice_by_count: k must be >= 1");
  std::vector<CountWindow> windows;
  const std::size_t n = stream.events.size();
  const std::size_t ku = static_cast<std::size_t>(k);
  for (std::size_t begin = 0; begin + ku <= n; begin += ku) {
    CountWindow w;
    w.begin = begin;
    w.end = begin + ku;
    w.t1 = begin == 0 ? stream.events.front().t - 1 : stream.events[begin - 1].t;
    w.t2 = stream.events[w.end - 1].t;
    windows.push_back(w);
  }
  return windows;
}

EventFrame accumulate_frame(const EventStream& stream, int64_t t1, int64_t t2) {
  if (t1 >= t2) throw std::invalid_argument("accumulate_frame: requires t1 < t2");
  EventFrame frame(stream.height, stream.width, t1, t2);
  // Left bound exclusive, right bound inclusive: t1 < t <= t2.
  const auto first = std::upper_bound(
      stream.events.begin(), stream.events.end(), t1,
      [](int64_t t, const Event& e) { return t < e.t; });
  const auto last = std::upper_bound(
      stream.events.begin(), stream.events.end(), t2,
      [](int64_t t, const Event& e) { return t < e.t; });
  for (auto it = first; it != last; ++it)
    frame.at(it->y, it->x) += it->p * stream.threshold;
  return frame;
}

}  // namespace evgs
