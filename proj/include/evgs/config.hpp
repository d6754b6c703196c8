#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "evgs/camera.hpp"
#include "evgs/losses.hpp"
#include "evgs/scene.hpp"
#include "evgs/simulator.hpp"
#include "evgs/trainer.hpp"

namespace evgs {

// Where warm-up prior frames come from. "naive" integrates them from the
// event stream itself; "external" loads a frame manifest; "none" skips the
// prior entirely (requires warm_up_iters == 0).
struct PriorConfig {
  std::string source = "naive";
  int n_frames = 20;
  std::int64_t half_life_us = 200000;
};

struct RenderConfig {
  // Unset: render every trajectory keyframe. An explicitly empty list is a
  // usage error.
  std::optional<std::vector<std::int64_t>> times_us;
};

struct PathsConfig {
  std::string out_dir;
  std::string events;
  std::string trajectory;
  std::string priors;
  std::string scene;
  std::string checkpoint;
  std::string renders;
  std::string reference;
  std::string metrics;
};

// One record drives every subcommand; unset fields keep the documented
// defaults, so an empty JSON object is a complete configuration.
struct Config {
  std::uint64_t seed = 0;
  Schedule schedule;
  KScheduleShape k_shape = KScheduleShape::Linear;
  bool densify_warm_up = true;
  bool densify_event_phase = true;
  LossWeights weights;
  LearningRates rates;
  Intrinsics camera{70.0, 70.0, 32.0, 32.0, 64, 64};
  Bounds3 bounds;
  int n_init = 10000;
  int sh_degree = 3;
  SimConfig sim;
  OrbitSpec orbit;
  PriorConfig prior;
  RenderConfig render;
  PathsConfig paths;

  // Cross-field checks; throws ConfigError naming the offending key.
  void validate() const;
};

// Strict load: unknown keys, type mismatches, and cross-field violations all
// raise ConfigError naming the dotted key. `overrides` are "a.b.c=value"
// pairs applied on top of the file before validation; values parse as JSON
// scalars, falling back to plain strings.
Config load_config(const std::filesystem::path& path,
                   const std::vector<std::string>& overrides = {});

// Parses a config from a JSON string (same strictness as load_config).
Config parse_config(const std::string& text, const std::string& origin = "<string>");

// Full canonical form, defaults included. parse(serialize(c)) == c.
std::string serialize_config(const Config& config);

}  // namespace evgs
