#include "evgs/e2v_prior.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "evgs/errors.hpp"

namespace evgs {
namespace {

Image expand_to_rgb(Image img) {
  if (img.channels == 3) return img;
  Image out(img.height, img.width, 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double v = img.at(y, x, 0);
      out.at(y, x, 0) = v;
      out.at(y, x, 1) = v;
      out.at(y, x, 2) = v;
    }
  return out;
}

}  // namespace

void PriorFrameSet::validate() const {
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Image& img = frames[i].second;
    if (img.height <= 0 || img.width <= 0)
      throw ValidationError("prior frame " + std::to_string(i) + " is empty");
    if (!img.same_shape(frames.front().second))
      throw ValidationError("prior frame " + std::to_string(i) +
                            " resolution differs from the first frame");
    if (i > 0 && frames[i].first <= frames[i - 1].first)
      throw ValidationError("prior frame timestamps must be strictly increasing at index " +
                            std::to_string(i));
  }
  if (source != "external" && source != "naive")
    throw ValidationError("prior frame source must be \"external\" or \"naive\"");
}

std::size_t PriorFrameSet::nearest_index(std::int64_t t_us) const {
  if (frames.empty()) throw std::out_of_range("no prior frames");
  const auto it = std::lower_bound(
      frames.begin(), frames.end(), t_us,
      [](const std::pair<std::int64_t, Image>& f, std::int64_t t) { return f.first < t; });
  if (it == frames.begin()) return 0;
  if (it == frames.end()) return frames.size() - 1;
  const std::size_t after = static_cast<std::size_t>(it - frames.begin());
  const std::int64_t d_after = it->first - t_us;
  const std::int64_t d_before = t_us - (it - 1)->first;
  return d_before <= d_after ? after - 1 : after;
}

PriorFrameSet load_prior_frames(const std::filesystem::path& manifest_path, int expected_width,
                                int expected_height) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open prior manifest: " + manifest_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("prior manifest " + manifest_path.string() + ": " + e.what());
  }
  if (!j.contains("frames") || !j["frames"].is_array())
    throw ParseError("prior manifest " + manifest_path.string() + ": missing \"frames\" array");

  PriorFrameSet set;
  set.source = "external";
  const auto base = manifest_path.parent_path();
  for (const auto& entry : j["frames"]) {
    if (!entry.contains("t_us") || !entry.contains("path"))
      throw ParseError("prior manifest entry needs \"t_us\" and \"path\"");
    const auto t = entry["t_us"].get<std::int64_t>();
    std::filesystem::path img_path = entry["path"].get<std::string>();
    if (img_path.is_relative()) img_path = base / img_path;
    Image img = expand_to_rgb(read_png(img_path));
    if ((expected_width > 0 && img.width != expected_width) ||
        (expected_height > 0 && img.height != expected_height))
      throw ValidationError("prior frame " + img_path.string() + " is " +
                            std::to_string(img.width) + "x" + std::to_string(img.height) +
                            ", sensor is " + std::to_string(expected_width) + "x" +
                            std::to_string(expected_height));
    set.frames.emplace_back(t, std::move(img));
  }
  set.validate();
  return set;
}

std::filesystem::path save_prior_frames(const PriorFrameSet& set,
                                        const std::filesystem::path& dir) {
  set.validate();
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["frames"] = nlohmann::json::array();
  for (std::size_t i = 0; i < set.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%05zu.png", i);
    write_png(dir / name, set.frames[i].second);
    manifest["frames"].push_back({{"t_us", set.frames[i].first}, {"path", name}});
  }
  const auto manifest_path = dir / "manifest.json";
  std::ofstream out(manifest_path);
  if (!out) throw IoError("cannot write prior manifest: " + manifest_path.string());
  out << manifest.dump(2) << '\n';
  return manifest_path;
}

PriorFrameSet naive_integrate(const EventStream& stream,
                              const std::vector<std::int64_t>& frame_times_us,
                              double half_life_us) {
  if (frame_times_us.empty())
    throw std::invalid_argument("naive_integrate: frame timestamp list is empty");
  for (std::size_t i = 1; i < frame_times_us.size(); ++i)
    if (frame_times_us[i] <= frame_times_us[i - 1])
      throw std::invalid_argument("naive_integrate: frame timestamps must be strictly increasing");
  stream.validate();

  const double rest = std::log(0.5);
  const std::size_t n_px = static_cast<std::size_t>(stream.width) * stream.height;
  std::vector<double> state(n_px, rest);
  std::vector<std::int64_t> last_update(n_px, frame_times_us.front());
  const bool decays = half_life_us > 0.0;
  const auto decayed = [&](std::size_t px, std::int64_t t) {
    if (!decays) return state[px];
    const double dt = static_cast<double>(t - last_update[px]);
    return rest + (state[px] - rest) * std::exp2(-dt / half_life_us);
  };

  PriorFrameSet set;
  set.source = "naive";
  std::size_t next_event = 0;
  for (const std::int64_t t_frame : frame_times_us) {
    while (next_event < stream.events.size() && stream.events[next_event].t <= t_frame) {
      const Event& ev = stream.events[next_event];
      const std::size_t px = static_cast<std::size_t>(ev.y) * stream.width + ev.x;
      state[px] = decayed(px, ev.t) + ev.p * stream.threshold;
      last_update[px] = ev.t;
      ++next_event;
    }
    Image frame(stream.height, stream.width, 3);
    for (int y = 0; y < stream.height; ++y)
      for (int x = 0; x < stream.width; ++x) {
        const std::size_t px = static_cast<std::size_t>(y) * stream.width + x;
        const double v = std::clamp(std::exp(decayed(px, t_frame)), 0.0, 1.0);
        frame.at(y, x, 0) = v;
        frame.at(y, x, 1) = v;
        frame.at(y, x, 2) = v;
      }
    set.frames.emplace_back(t_frame, std::move(frame));
  }
  return set;
}

}  // namespace evgs
