#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "evgs/event_io.hpp"
#include "evgs/image.hpp"

namespace evgs {

// Intensity frames used as a training prior: either external event-to-video
// reconstructions loaded from disk, or stand-ins from naive_integrate.
struct PriorFrameSet {
  std::vector<std::pair<std::int64_t, Image>> frames;  // (t_us, image), ascending
  std::string source;                                  // "external" or "naive"

  void validate() const;

  // Frame whose timestamp is closest to t_us; earlier frame wins ties.
  std::size_t nearest_index(std::int64_t t_us) const;
};

// Manifest JSON: {"frames":[{"t_us":N,"path":"..."}]}, paths relative to the
// manifest's directory. Grayscale images are expanded to 3 channels. Nonzero
// expected dimensions are enforced against every frame.
PriorFrameSet load_prior_frames(const std::filesystem::path& manifest_path,
                                int expected_width = 0, int expected_height = 0);

// Writes frames as PNG plus a manifest into dir; returns the manifest path.
std::filesystem::path save_prior_frames(const PriorFrameSet& set,
                                        const std::filesystem::path& dir);

inline constexpr double kDefaultPriorHalfLifeUs = 200000.0;

// Leaky per-pixel log-intensity integrator. State rests at log(0.5), each
// event adds polarity * threshold, and between updates the state decays
// toward the resting point with the given half-life (non-positive: no decay).
// Frames of exp(state) clamped to [0,1] are emitted at the requested times.
PriorFrameSet naive_integrate(const EventStream& stream,
                              const std::vector<std::int64_t>& frame_times_us,
                              double half_life_us = kDefaultPriorHalfLifeUs);

}  // namespace evgs
