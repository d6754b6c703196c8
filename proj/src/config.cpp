#include "evgs/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include <nlohmann/json.hpp>

#include "evgs/errors.hpp"

namespace evgs {
namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& message) { throw ConfigError(message); }

std::string dotted(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

void check_keys(const json& obj, const std::string& prefix,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) fail("config section " + prefix + " must be a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known) fail("unknown config key: " + dotted(prefix, it.key()));
  }
}

const json* find(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

void rd_f64(const json& obj, const std::string& prefix, const char* key, double& out) {
  if (const json* v = find(obj, key)) {
    if (!v->is_number()) fail("config key " + dotted(prefix, key) + " must be a number");
    out = v->get<double>();
  }
}

void rd_i64(const json& obj, const std::string& prefix, const char* key, std::int64_t& out) {
  if (const json* v = find(obj, key)) {
    if (!v->is_number_integer()) fail("config key " + dotted(prefix, key) + " must be an integer");
    out = v->get<std::int64_t>();
  }
}

void rd_int(const json& obj, const std::string& prefix, const char* key, int& out) {
  std::int64_t wide = out;
  rd_i64(obj, prefix, key, wide);
  if (wide < INT32_MIN || wide > INT32_MAX)
    fail("config key " + dotted(prefix, key) + " is out of range");
  out = static_cast<int>(wide);
}

void rd_u64(const json& obj, const std::string& prefix, const char* key, std::uint64_t& out) {
  if (const json* v = find(obj, key)) {
    if (!(v->is_number_unsigned() || (v->is_number_integer() && v->get<std::int64_t>() >= 0)))
      fail("config key " + dotted(prefix, key) + " must be a nonnegative integer");
    out = v->get<std::uint64_t>();
  }
}

void rd_bool(const json& obj, const std::string& prefix, const char* key, bool& out) {
  if (const json* v = find(obj, key)) {
    if (!v->is_boolean()) fail("config key " + dotted(prefix, key) + " must be a boolean");
    out = v->get<bool>();
  }
}

void rd_str(const json& obj, const std::string& prefix, const char* key, std::string& out) {
  if (const json* v = find(obj, key)) {
    if (!v->is_string()) fail("config key " + dotted(prefix, key) + " must be a string");
    out = v->get<std::string>();
  }
}

void rd_vec3(const json& obj, const std::string& prefix, const char* key, Eigen::Vector3d& out) {
  if (const json* v = find(obj, key)) {
    if (!v->is_array() || v->size() != 3)
      fail("config key " + dotted(prefix, key) + " must be an array of 3 numbers");
    for (int a = 0; a < 3; ++a) {
      const json& e = (*v)[a];
      if (!e.is_number()) fail("config key " + dotted(prefix, key) + " must be an array of 3 numbers");
      out[a] = e.get<double>();
    }
  }
}

void rd_times(const json& obj, const std::string& prefix, const char* key,
              std::optional<std::vector<std::int64_t>>& out) {
  if (const json* v = find(obj, key)) {
    if (v->is_null()) {
      out.reset();
      return;
    }
    if (!v->is_array()) fail("config key " + dotted(prefix, key) + " must be an array of integers");
    out.emplace();
    for (const json& e : *v) {
      if (!e.is_number_integer())
        fail("config key " + dotted(prefix, key) + " must be an array of integers");
      out->push_back(e.get<std::int64_t>());
    }
  }
}

void read_schedule(const json& obj, Config& cfg) {
  const std::string p = "schedule";
  check_keys(obj, p,
             {"warm_up_iters", "event_iters", "k_start", "k_end", "k_shape", "densify_interval",
              "densify_until_fraction", "opacity_prune_threshold", "positional_grad_threshold",
              "checkpoint_interval", "densify_warm_up", "densify_event_phase"});
  rd_int(obj, p, "warm_up_iters", cfg.schedule.warm_up_iters);
  rd_int(obj, p, "event_iters", cfg.schedule.event_iters);
  rd_i64(obj, p, "k_start", cfg.schedule.k_start);
  rd_i64(obj, p, "k_end", cfg.schedule.k_end);
  rd_int(obj, p, "densify_interval", cfg.schedule.densify_interval);
  rd_f64(obj, p, "densify_until_fraction", cfg.schedule.densify_until_fraction);
  rd_f64(obj, p, "opacity_prune_threshold", cfg.schedule.opacity_prune_threshold);
  rd_f64(obj, p, "positional_grad_threshold", cfg.schedule.positional_grad_threshold);
  rd_int(obj, p, "checkpoint_interval", cfg.schedule.checkpoint_interval);
  rd_bool(obj, p, "densify_warm_up", cfg.densify_warm_up);
  rd_bool(obj, p, "densify_event_phase", cfg.densify_event_phase);
  std::string shape = cfg.k_shape == KScheduleShape::Linear ? "linear" : "geometric";
  rd_str(obj, p, "k_shape", shape);
  if (shape == "linear")
    cfg.k_shape = KScheduleShape::Linear;
  else if (shape == "geometric")
    cfg.k_shape = KScheduleShape::Geometric;
  else
    fail("config key schedule.k_shape must be \"linear\" or \"geometric\"");
}

void read_losses(const json& obj, Config& cfg) {
  const std::string p = "losses";
  check_keys(obj, p, {"lambda_event", "lambda_reg", "log_epsilon"});
  rd_f64(obj, p, "lambda_event", cfg.weights.lambda_event);
  rd_f64(obj, p, "lambda_reg", cfg.weights.lambda_reg);
  rd_f64(obj, p, "log_epsilon", cfg.weights.log_epsilon);
}

void read_rates(const json& obj, Config& cfg) {
  const std::string p = "rates";
  check_keys(obj, p, {"position_start", "position_end", "color", "opacity", "scale", "rotation"});
  rd_f64(obj, p, "position_start", cfg.rates.position_start);
  rd_f64(obj, p, "position_end", cfg.rates.position_end);
  rd_f64(obj, p, "color", cfg.rates.color);
  rd_f64(obj, p, "opacity", cfg.rates.opacity);
  rd_f64(obj, p, "scale", cfg.rates.scale);
  rd_f64(obj, p, "rotation", cfg.rates.rotation);
}

void read_camera(const json& obj, Config& cfg) {
  const std::string p = "camera";
  check_keys(obj, p, {"width", "height", "fx", "fy", "cx", "cy"});
  rd_int(obj, p, "width", cfg.camera.width);
  rd_int(obj, p, "height", cfg.camera.height);
  rd_f64(obj, p, "fx", cfg.camera.fx);
  rd_f64(obj, p, "fy", cfg.camera.fy);
  rd_f64(obj, p, "cx", cfg.camera.cx);
  rd_f64(obj, p, "cy", cfg.camera.cy);
}

void read_scene(const json& obj, Config& cfg) {
  const std::string p = "scene";
  check_keys(obj, p, {"bounds_min", "bounds_max", "n_init", "sh_degree"});
  rd_vec3(obj, p, "bounds_min", cfg.bounds.lo);
  rd_vec3(obj, p, "bounds_max", cfg.bounds.hi);
  rd_int(obj, p, "n_init", cfg.n_init);
  rd_int(obj, p, "sh_degree", cfg.sh_degree);
}

void read_simulator(const json& obj, Config& cfg) {
  const std::string p = "simulator";
  check_keys(obj, p,
             {"threshold", "log_floor", "seed", "center", "radius", "elevation_rad", "n_frames",
              "duration_us", "t_start_us"});
  rd_f64(obj, p, "threshold", cfg.sim.threshold);
  rd_f64(obj, p, "log_floor", cfg.sim.log_floor);
  rd_u64(obj, p, "seed", cfg.sim.seed);
  rd_vec3(obj, p, "center", cfg.orbit.center);
  rd_f64(obj, p, "radius", cfg.orbit.radius);
  rd_f64(obj, p, "elevation_rad", cfg.orbit.elevation_rad);
  rd_int(obj, p, "n_frames", cfg.orbit.n_frames);
  rd_i64(obj, p, "duration_us", cfg.orbit.duration_us);
  rd_i64(obj, p, "t_start_us", cfg.orbit.t_start_us);
}

void read_prior(const json& obj, Config& cfg) {
  const std::string p = "prior";
  check_keys(obj, p, {"source", "n_frames", "half_life_us"});
  rd_str(obj, p, "source", cfg.prior.source);
  rd_int(obj, p, "n_frames", cfg.prior.n_frames);
  rd_i64(obj, p, "half_life_us", cfg.prior.half_life_us);
  if (cfg.prior.source != "naive" && cfg.prior.source != "external" && cfg.prior.source != "none")
    fail("config key prior.source must be \"naive\", \"external\", or \"none\"");
}

void read_render(const json& obj, Config& cfg) {
  check_keys(obj, "render", {"times_us"});
  rd_times(obj, "render", "times_us", cfg.render.times_us);
}

void read_paths(const json& obj, Config& cfg) {
  const std::string p = "paths";
  check_keys(obj, p,
             {"out_dir", "events", "trajectory", "priors", "scene", "checkpoint", "renders",
              "reference", "metrics"});
  rd_str(obj, p, "out_dir", cfg.paths.out_dir);
  rd_str(obj, p, "events", cfg.paths.events);
  rd_str(obj, p, "trajectory", cfg.paths.trajectory);
  rd_str(obj, p, "priors", cfg.paths.priors);
  rd_str(obj, p, "scene", cfg.paths.scene);
  rd_str(obj, p, "checkpoint", cfg.paths.checkpoint);
  rd_str(obj, p, "renders", cfg.paths.renders);
  rd_str(obj, p, "reference", cfg.paths.reference);
  rd_str(obj, p, "metrics", cfg.paths.metrics);
}

Config config_from_json(const json& root) {
  Config cfg;
  check_keys(root, "",
             {"seed", "schedule", "losses", "rates", "camera", "scene", "simulator", "prior",
              "render", "paths"});
  rd_u64(root, "", "seed", cfg.seed);
  if (const json* v = find(root, "schedule")) read_schedule(*v, cfg);
  if (const json* v = find(root, "losses")) read_losses(*v, cfg);
  if (const json* v = find(root, "rates")) read_rates(*v, cfg);
  if (const json* v = find(root, "camera")) read_camera(*v, cfg);
  if (const json* v = find(root, "scene")) read_scene(*v, cfg);
  if (const json* v = find(root, "simulator")) read_simulator(*v, cfg);
  if (const json* v = find(root, "prior")) read_prior(*v, cfg);
  if (const json* v = find(root, "render")) read_render(*v, cfg);
  if (const json* v = find(root, "paths")) read_paths(*v, cfg);
  return cfg;
}

// "a.b.c=value" applied onto the raw JSON tree; the value is parsed as JSON
// where possible and kept as a string otherwise.
void apply_override(json& root, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0)
    fail("malformed --set override (expected key=value): " + spec);
  const std::string path = spec.substr(0, eq);
  const std::string raw = spec.substr(eq + 1);

  std::vector<std::string> parts;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) fail("malformed --set key: " + path);
    parts.push_back(part);
  }

  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  json* node = &root;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    json& next = (*node)[parts[i]];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) fail("--set key " + path + " descends into a non-object");
    node = &next;
  }
  (*node)[parts.back()] = std::move(value);
}

}  // namespace

void Config::validate() const {
  if (schedule.k_end > schedule.k_start)
    fail("schedule.k_end (" + std::to_string(schedule.k_end) + ") exceeds schedule.k_start (" +
         std::to_string(schedule.k_start) + ")");
  try {
    schedule.validate();
  } catch (const std::exception& e) {
    fail(e.what());
  }
  try {
    camera.validate();
  } catch (const std::exception& e) {
    fail(std::string("camera: ") + e.what());
  }
  try {
    bounds.validate();
  } catch (const std::exception& e) {
    fail(std::string("scene.bounds_min/bounds_max: ") + e.what());
  }
  if (n_init < 1) fail("scene.n_init must be at least 1");
  if (sh_degree < 0 || sh_degree > 3) fail("scene.sh_degree must lie in [0, 3]");
  if (weights.lambda_event < 0.0) fail("losses.lambda_event must be nonnegative");
  if (weights.lambda_reg < 0.0) fail("losses.lambda_reg must be nonnegative");
  if (weights.log_epsilon <= 0.0) fail("losses.log_epsilon must be positive");
  if (rates.position_start <= 0.0 || rates.position_end <= 0.0)
    fail("rates.position_start and rates.position_end must be positive");
  if (rates.color <= 0.0 || rates.opacity <= 0.0 || rates.scale <= 0.0 || rates.rotation <= 0.0)
    fail("rates.* must be positive");
  if (sim.threshold <= 0.0) fail("simulator.threshold must be positive");
  if (sim.log_floor <= 0.0) fail("simulator.log_floor must be positive");
  if (orbit.radius <= 0.0) fail("simulator.radius must be positive");
  if (orbit.n_frames < 2) fail("simulator.n_frames must be at least 2");
  if (orbit.duration_us <= 0) fail("simulator.duration_us must be positive");
  if (prior.source == "none" && schedule.warm_up_iters > 0)
    fail("prior.source is \"none\" but schedule.warm_up_iters is positive; warm-up needs priors");
  if (prior.source == "naive" && prior.n_frames < 2)
    fail("prior.n_frames must be at least 2 for the naive integrator");
  if (prior.half_life_us < 0) fail("prior.half_life_us must be nonnegative");
}

Config parse_config(const std::string& text, const std::string& origin) {
  json root = json::parse(text, nullptr, false);
  if (root.is_discarded()) fail("config is not valid JSON: " + origin);
  if (!root.is_object()) fail("config root must be a JSON object: " + origin);
  return config_from_json(root);
}

Config load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("config file not found: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();

  json root = json::parse(buffer.str(), nullptr, false);
  if (root.is_discarded()) fail("config is not valid JSON: " + path.string());
  if (!root.is_object()) fail("config root must be a JSON object: " + path.string());
  for (const std::string& spec : overrides) apply_override(root, spec);

  Config cfg = config_from_json(root);
  cfg.validate();
  return cfg;
}

std::string serialize_config(const Config& cfg) {
  nlohmann::ordered_json j;
  j["seed"] = cfg.seed;
  j["schedule"] = {
      {"warm_up_iters", cfg.schedule.warm_up_iters},
      {"event_iters", cfg.schedule.event_iters},
      {"k_start", cfg.schedule.k_start},
      {"k_end", cfg.schedule.k_end},
      {"k_shape", cfg.k_shape == KScheduleShape::Linear ? "linear" : "geometric"},
      {"densify_interval", cfg.schedule.densify_interval},
      {"densify_until_fraction", cfg.schedule.densify_until_fraction},
      {"opacity_prune_threshold", cfg.schedule.opacity_prune_threshold},
      {"positional_grad_threshold", cfg.schedule.positional_grad_threshold},
      {"checkpoint_interval", cfg.schedule.checkpoint_interval},
      {"densify_warm_up", cfg.densify_warm_up},
      {"densify_event_phase", cfg.densify_event_phase},
  };
  j["losses"] = {
      {"lambda_event", cfg.weights.lambda_event},
      {"lambda_reg", cfg.weights.lambda_reg},
      {"log_epsilon", cfg.weights.log_epsilon},
  };
  j["rates"] = {
      {"position_start", cfg.rates.position_start},
      {"position_end", cfg.rates.position_end},
      {"color", cfg.rates.color},
      {"opacity", cfg.rates.opacity},
      {"scale", cfg.rates.scale},
      {"rotation", cfg.rates.rotation},
  };
  j["camera"] = {
      {"width", cfg.camera.width}, {"height", cfg.camera.height}, {"fx", cfg.camera.fx},
      {"fy", cfg.camera.fy},       {"cx", cfg.camera.cx},         {"cy", cfg.camera.cy},
  };
  j["scene"] = {
      {"bounds_min", {cfg.bounds.lo[0], cfg.bounds.lo[1], cfg.bounds.lo[2]}},
      {"bounds_max", {cfg.bounds.hi[0], cfg.bounds.hi[1], cfg.bounds.hi[2]}},
      {"n_init", cfg.n_init},
      {"sh_degree", cfg.sh_degree},
  };
  j["simulator"] = {
      {"threshold", cfg.sim.threshold},
      {"log_floor", cfg.sim.log_floor},
      {"seed", cfg.sim.seed},
      {"center", {cfg.orbit.center[0], cfg.orbit.center[1], cfg.orbit.center[2]}},
      {"radius", cfg.orbit.radius},
      {"elevation_rad", cfg.orbit.elevation_rad},
      {"n_frames", cfg.orbit.n_frames},
      {"duration_us", cfg.orbit.duration_us},
      {"t_start_us", cfg.orbit.t_start_us},
  };
  j["prior"] = {
      {"source", cfg.prior.source},
      {"n_frames", cfg.prior.n_frames},
      {"half_life_us", cfg.prior.half_life_us},
  };
  j["render"] = {{"times_us", cfg.render.times_us
                                  ? nlohmann::ordered_json(*cfg.render.times_us)
                                  : nlohmann::ordered_json(nullptr)}};
  j["paths"] = {
      {"out_dir", cfg.paths.out_dir},     {"events", cfg.paths.events},
      {"trajectory", cfg.paths.trajectory}, {"priors", cfg.paths.priors},
      {"scene", cfg.paths.scene},         {"checkpoint", cfg.paths.checkpoint},
      {"renders", cfg.paths.renders},     {"reference", cfg.paths.reference},
      {"metrics", cfg.paths.metrics},
  };
  return j.dump(2) + "\n";
}

}  // namespace evgs
