#include "evgs/cli_app.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "evgs/e2v_prior.hpp"
#include "evgs/errors.hpp"
#include "evgs/event_io.hpp"
#include "evgs/image.hpp"
#include "evgs/losses.hpp"
#include "evgs/render.hpp"
#include "evgs/simulator.hpp"
#include "evgs/trainer.hpp"

namespace evgs {
namespace fs = std::filesystem;

namespace {

void require_path(const std::string& value, const char* key) {
  if (value.empty()) throw ConfigError(std::string("paths.") + key + " is required");
}

void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path))
    throw ConfigError(std::string(what) + " not found: " + path);
}

std::string frame_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%05zu.png", index);
  return buf;
}

Pose pose_at_clamped(const Trajectory& trajectory, std::int64_t t) {
  return pose_at(trajectory, std::clamp(t, trajectory.t_min(), trajectory.t_max()));
}

// Evenly spaced timestamps across the stream span, deduplicated to stay
// strictly increasing when the span is shorter than the frame count.
std::vector<std::int64_t> naive_prior_times(const EventStream& stream, int n_frames) {
  const std::int64_t t0 = stream.events.front().t;
  const std::int64_t t1 = stream.events.back().t;
  std::vector<std::int64_t> times;
  for (int i = 0; i < n_frames; ++i) {
    const std::int64_t t =
        n_frames == 1 ? t1
                      : t0 + std::llround(static_cast<double>(i) * static_cast<double>(t1 - t0) /
                                          (n_frames - 1));
    if (times.empty() || t > times.back()) times.push_back(t);
  }
  return times;
}

PriorFrameSet build_priors(const Config& cfg, const EventStream& stream,
                           const Intrinsics& intrinsics) {
  PriorFrameSet priors;
  if (cfg.prior.source == "none") {
    priors.source = "external";
    return priors;
  }
  if (cfg.prior.source == "external") {
    require_path(cfg.paths.priors, "priors");
    require_file(cfg.paths.priors, "prior manifest");
    return load_prior_frames(cfg.paths.priors, intrinsics.width, intrinsics.height);
  }
  if (stream.events.empty())
    throw ConfigError("prior.source is \"naive\" but the event stream is empty; "
                      "nothing to integrate");
  return naive_integrate(stream, naive_prior_times(stream, cfg.prior.n_frames),
                         cfg.prior.half_life_us);
}

}  // namespace

int cmd_simulate(const Config& cfg, std::ostream& out) {
  require_path(cfg.paths.out_dir, "out_dir");
  GaussianScene scene;
  if (cfg.paths.scene.empty()) {
    scene = make_demo_scene();
  } else {
    require_file(cfg.paths.scene, "scene checkpoint");
    scene = load_scene(cfg.paths.scene);
  }

  const OrbitRender orbit = render_orbit(scene, cfg.orbit, cfg.camera);
  const EventStream stream = simulate_events(orbit.frames, cfg.sim);

  const fs::path out_dir = cfg.paths.out_dir;
  fs::create_directories(out_dir);

  PriorFrameSet frames;
  frames.source = "external";
  frames.frames = orbit.frames;
  const fs::path manifest = save_prior_frames(frames, out_dir / "frames");
  save_trajectory((out_dir / "trajectory.json").string(), cfg.camera, orbit.trajectory);
  write_events_file((out_dir / "events.evt").string(), stream);
  save_scene((out_dir / "scene_gt.json").string(), scene);

  if (stream.events.empty())
    out << "warning: simulation produced no events (threshold " << cfg.sim.threshold
        << " may exceed the scene's contrast)\n";
  out << "simulated " << stream.events.size() << " events over " << orbit.frames.size()
      << " frames\n"
      << "  frames:     " << manifest.parent_path().string() << "\n"
      << "  trajectory: " << (out_dir / "trajectory.json").string() << "\n"
      << "  events:     " << (out_dir / "events.evt").string() << "\n"
      << "  scene:      " << (out_dir / "scene_gt.json").string() << "\n";
  return 0;
}

int cmd_train(const Config& cfg, std::ostream& out) {
  require_path(cfg.paths.out_dir, "out_dir");
  require_path(cfg.paths.events, "events");
  require_file(cfg.paths.events, "event file");
  require_path(cfg.paths.trajectory, "trajectory");
  require_file(cfg.paths.trajectory, "trajectory file");

  const SensorMeta meta{cfg.camera.width, cfg.camera.height, cfg.sim.threshold};
  TrainInputs inputs;
  inputs.stream = read_events_file(cfg.paths.events, meta);
  auto [intrinsics, trajectory] = load_trajectory(cfg.paths.trajectory);
  inputs.intrinsics = intrinsics;
  inputs.trajectory = std::move(trajectory);

  if (inputs.stream.width != intrinsics.width || inputs.stream.height != intrinsics.height)
    throw ConfigError("event file resolution " + std::to_string(inputs.stream.width) + "x" +
                      std::to_string(inputs.stream.height) + " does not match the trajectory's " +
                      std::to_string(intrinsics.width) + "x" + std::to_string(intrinsics.height));

  inputs.priors = build_priors(cfg, inputs.stream, intrinsics);
  if (cfg.schedule.warm_up_iters > 0 && inputs.priors.frames.empty())
    throw ConfigError("schedule.warm_up_iters is positive but no prior frames are available");

  TrainerSetup setup;
  setup.schedule = cfg.schedule;
  setup.weights = cfg.weights;
  setup.rates = cfg.rates;
  setup.bounds = cfg.bounds;
  setup.n_init = cfg.n_init;
  setup.sh_degree = cfg.sh_degree;
  setup.seed = cfg.seed;
  setup.k_shape = cfg.k_shape;
  setup.densify_warm_up = cfg.densify_warm_up;
  setup.densify_event_phase = cfg.densify_event_phase;

  const fs::path out_dir = cfg.paths.out_dir;
  fs::create_directories(out_dir);
  {
    std::ofstream cfg_out(out_dir / "config.json", std::ios::binary | std::ios::trunc);
    cfg_out << serialize_config(cfg);
  }

  const TrainingReport report = train(setup, inputs, out_dir);
  if (report.failed) {
    out << "training failed: " << report.failure_reason << "\n";
    return 1;
  }
  out << "trained " << report.warm_up_iters << " warm-up + " << report.event_iters
      << " event iterations, " << report.final_gaussian_count << " gaussians\n"
      << "  checkpoint: " << report.final_checkpoint.string() << "\n"
      << "  log:        " << (out_dir / "train_log.jsonl").string() << "\n";
  return 0;
}

int cmd_render(const Config& cfg, std::ostream& out) {
  require_path(cfg.paths.out_dir, "out_dir");
  require_path(cfg.paths.checkpoint, "checkpoint");
  require_file(cfg.paths.checkpoint, "checkpoint");
  require_path(cfg.paths.trajectory, "trajectory");
  require_file(cfg.paths.trajectory, "trajectory file");

  const GaussianScene scene = load_scene(cfg.paths.checkpoint);
  const auto [intrinsics, trajectory] = load_trajectory(cfg.paths.trajectory);

  std::vector<std::int64_t> times;
  if (cfg.render.times_us)
    times = *cfg.render.times_us;
  else
    for (const auto& [t, pose] : trajectory.keyframes) times.push_back(t);
  if (times.empty()) throw ConfigError("render pose list is empty");

  const fs::path out_dir = cfg.paths.out_dir;
  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < times.size(); ++i) {
    const Pose pose = pose_at_clamped(trajectory, times[i]);
    const RenderResult result = render(scene, pose, intrinsics);
    write_png((out_dir / frame_name(i)).string(), result.image);
  }
  out << "rendered " << times.size() << " views to " << out_dir.string() << "\n";
  return 0;
}

int cmd_eval(const Config& cfg, std::ostream& out) {
  require_path(cfg.paths.renders, "renders");
  require_path(cfg.paths.reference, "reference");
  require_file(cfg.paths.renders, "renders directory");
  require_file(cfg.paths.reference, "reference directory");

  fs::path metrics_path = cfg.paths.metrics;
  if (metrics_path.empty()) {
    require_path(cfg.paths.out_dir, "out_dir");
    fs::create_directories(cfg.paths.out_dir);
    metrics_path = fs::path(cfg.paths.out_dir) / "metrics.json";
  }

  const auto list_pngs = [](const fs::path& dir) {
    std::set<std::string> names;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_regular_file() && entry.path().extension() == ".png")
        names.insert(entry.path().filename().string());
    return names;
  };
  const std::set<std::string> pred_names = list_pngs(cfg.paths.renders);
  const std::set<std::string> ref_names = list_pngs(cfg.paths.reference);

  if (pred_names != ref_names) {
    std::string msg = "rendered and reference filename sets differ;";
    for (const std::string& n : pred_names)
      if (!ref_names.count(n)) msg += " only in renders: " + n + ";";
    for (const std::string& n : ref_names)
      if (!pred_names.count(n)) msg += " only in reference: " + n + ";";
    throw ConfigError(msg);
  }
  if (pred_names.empty()) throw ConfigError("no image pairs to evaluate");

  nlohmann::ordered_json views = nlohmann::ordered_json::array();
  double sum_psnr = 0.0, sum_ssim = 0.0;
  out << std::left << std::setw(28) << "view" << std::right << std::setw(9) << "psnr"
      << std::setw(9) << "ssim" << "\n";
  for (const std::string& name : pred_names) {
    const Image pred = read_png((fs::path(cfg.paths.renders) / name).string());
    const Image ref = read_png((fs::path(cfg.paths.reference) / name).string());
    if (!pred.same_shape(ref))
      throw ConfigError("image shapes differ for " + name);
    const AlignedImage aligned = log_affine_align(pred, ref, cfg.weights.log_epsilon);
    const double view_psnr = psnr(aligned.image, ref);
    const double view_ssim = ssim(aligned.image, ref);
    sum_psnr += view_psnr;
    sum_ssim += view_ssim;
    views.push_back({{"name", name}, {"psnr", view_psnr}, {"ssim", view_ssim}});
    out << std::left << std::setw(28) << name << std::right << std::fixed << std::setprecision(2)
        << std::setw(9) << view_psnr << std::setprecision(4) << std::setw(9) << view_ssim
        << std::defaultfloat << "\n";
  }
  const double n = static_cast<double>(pred_names.size());
  const double mean_psnr = sum_psnr / n;
  const double mean_ssim = sum_ssim / n;
  out << std::left << std::setw(28) << "mean" << std::right << std::fixed << std::setprecision(2)
      << std::setw(9) << mean_psnr << std::setprecision(4) << std::setw(9) << mean_ssim
      << std::defaultfloat << "\n";

  nlohmann::ordered_json doc;
  doc["views"] = std::move(views);
  doc["mean_psnr"] = mean_psnr;
  doc["mean_ssim"] = mean_ssim;
  std::ofstream json_out(metrics_path, std::ios::binary | std::ios::trunc);
  if (!json_out) throw IoError("cannot write metrics file: " + metrics_path.string());
  json_out << doc.dump(2) << "\n";
  out << "metrics written to " << metrics_path.string() << "\n";
  return 0;
}

int run_cli(int argc, const char* const argv[], std::ostream& out, std::ostream& err) {
  CLI::App app{"event-based gaussian splatting: simulate, train, render, evaluate"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON configuration file")->required();
    sub->add_option("--set", overrides, "override a config key, e.g. --set schedule.k_end=5000");
  };
  add_common(app.add_subcommand("simulate", "render an orbit of a scene and emit events"));
  add_common(app.add_subcommand("train", "optimize a gaussian scene from events"));
  add_common(app.add_subcommand("render", "render a checkpoint at trajectory poses"));
  add_common(app.add_subcommand("eval", "compare rendered views against references"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return 2;
  }

  try {
    const Config cfg = load_config(config_path, overrides);
    if (app.got_subcommand("simulate")) return cmd_simulate(cfg, out);
    if (app.got_subcommand("train")) return cmd_train(cfg, out);
    if (app.got_subcommand("render")) return cmd_render(cfg, out);
    return cmd_eval(cfg, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace evgs
