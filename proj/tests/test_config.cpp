#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "evgs/config.hpp"
#include "evgs/errors.hpp"

using namespace evgs;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("evgs_config_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_file(const fs::path& dir, const std::string& name, const std::string& text) {
  const fs::path p = dir / name;
  std::ofstream out(p, std::ios::binary);
  out << text;
  return p;
}

}  // namespace

TEST_CASE("an empty JSON object yields the full default configuration") {
  const Config cfg = parse_config("{}");
  CHECK(cfg.seed == 0);
  CHECK(cfg.weights.lambda_event == 0.02);
  CHECK(cfg.weights.lambda_reg == 0.002);
  CHECK(cfg.weights.log_epsilon == 1e-3);
  CHECK(cfg.schedule.warm_up_iters == 3000);
  CHECK(cfg.schedule.event_iters == 15000);
  CHECK(cfg.schedule.k_start == 150000);
  CHECK(cfg.schedule.k_end == 30000);
  CHECK(cfg.schedule.densify_interval == 100);
  CHECK(cfg.schedule.checkpoint_interval == 1000);
  CHECK(cfg.n_init == 10000);
  CHECK(cfg.sh_degree == 3);
  CHECK(cfg.k_shape == KScheduleShape::Linear);
  CHECK(cfg.camera.width == 64);
  CHECK(cfg.camera.height == 64);
  CHECK(cfg.camera.fx == 70.0);
  CHECK(cfg.camera.cy == 32.0);
  CHECK(cfg.bounds.lo == Eigen::Vector3d(-1, -1, -1));
  CHECK(cfg.bounds.hi == Eigen::Vector3d(1, 1, 1));
  CHECK(cfg.sim.threshold == 0.1);
  CHECK(cfg.orbit.n_frames == 200);
  CHECK(cfg.orbit.radius == 3.2);
  CHECK(cfg.prior.source == "naive");
  CHECK(cfg.prior.n_frames == 20);
  CHECK(!cfg.render.times_us.has_value());
  CHECK(cfg.paths.out_dir.empty());
  cfg.validate();
}

TEST_CASE("unknown keys are rejected by their dotted name") {
  CHECK_THROWS_WITH_AS(parse_config(R"({"sched": {}})"), doctest::Contains("sched"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(R"({"schedule": {"kend": 5}})"),
                       doctest::Contains("schedule.kend"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(R"({"paths": {"output": "x"}})"),
                       doctest::Contains("paths.output"), ConfigError);
}

TEST_CASE("type mismatches name the offending key") {
  CHECK_THROWS_WITH_AS(parse_config(R"({"schedule": {"k_end": "soon"}})"),
                       doctest::Contains("schedule.k_end"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(R"({"schedule": {"k_end": 1.5}})"),
                       doctest::Contains("schedule.k_end"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(R"({"losses": {"lambda_reg": "off"}})"),
                       doctest::Contains("losses.lambda_reg"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(R"({"scene": {"bounds_min": [0, 0]}})"),
                       doctest::Contains("scene.bounds_min"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(R"({"seed": -4})"), doctest::Contains("seed"), ConfigError);
}

TEST_CASE("raising k_end above the default k_start is a cross-field error") {
  const fs::path dir = fresh_dir("crossfield");
  const fs::path p = write_file(dir, "c.json", R"({"schedule": {"k_end": 200000}})");
  CHECK_THROWS_WITH_AS(load_config(p), doctest::Contains("schedule.k_end"), ConfigError);
}

TEST_CASE("a prior of none conflicts with a positive warm-up") {
  const fs::path dir = fresh_dir("prior_none");
  const fs::path p = write_file(dir, "c.json", R"({"prior": {"source": "none"}})");
  CHECK_THROWS_WITH_AS(load_config(p), doctest::Contains("prior.source"), ConfigError);
  const fs::path ok = write_file(
      dir, "ok.json", R"({"prior": {"source": "none"}, "schedule": {"warm_up_iters": 0}})");
  CHECK(load_config(ok).prior.source == "none");
  CHECK_THROWS_WITH_AS(parse_config(R"({"prior": {"source": "fancy"}})"),
                       doctest::Contains("prior.source"), ConfigError);
}

TEST_CASE("loading then re-serializing a config is idempotent") {
  const fs::path dir = fresh_dir("roundtrip");
  const fs::path p = write_file(dir, "c.json", R"({
    "seed": 42,
    "schedule": {"k_shape": "geometric", "k_end": 777, "densify_until_fraction": 0.35},
    "losses": {"lambda_reg": 0.0},
    "camera": {"width": 32, "height": 24, "fx": 51.5, "fy": 50.25, "cx": 16, "cy": 12},
    "scene": {"bounds_min": [-2.5, -1, -1], "n_init": 123},
    "simulator": {"elevation_rad": 0.125, "center": [0.1, -0.2, 0.3]},
    "render": {"times_us": [10, 20, 30]},
    "paths": {"events": "ev.evt"}
  })");
  const Config a = load_config(p);
  CHECK(a.k_shape == KScheduleShape::Geometric);
  CHECK(a.schedule.k_end == 777);
  CHECK(a.camera.fy == 50.25);
  CHECK(a.render.times_us->size() == 3);

  const std::string text_a = serialize_config(a);
  const fs::path p2 = write_file(dir, "c2.json", text_a);
  const Config b = load_config(p2);
  CHECK(serialize_config(b) == text_a);

  const Config defaults = parse_config("{}");
  CHECK(serialize_config(parse_config(serialize_config(defaults))) ==
        serialize_config(defaults));
}

TEST_CASE("dotted overrides rewrite single fields") {
  const fs::path dir = fresh_dir("overrides");
  const fs::path p = write_file(dir, "c.json", "{}");
  const Config cfg = load_config(p, {"schedule.k_end=5000", "losses.lambda_reg=0",
                                     "paths.events=run/ev.evt", "scene.bounds_min=[-2,-2,-2]",
                                     "schedule.k_shape=geometric", "render.times_us=[7]"});
  CHECK(cfg.schedule.k_end == 5000);
  CHECK(cfg.weights.lambda_reg == 0.0);
  CHECK(cfg.paths.events == "run/ev.evt");
  CHECK(cfg.bounds.lo == Eigen::Vector3d(-2, -2, -2));
  CHECK(cfg.k_shape == KScheduleShape::Geometric);
  CHECK(cfg.render.times_us->size() == 1);

  CHECK_THROWS_WITH_AS(load_config(p, {"schedule.kend=5"}),
                       doctest::Contains("schedule.kend"), ConfigError);
  CHECK_THROWS_WITH_AS(load_config(p, {"no_equals_sign"}), doctest::Contains("--set"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(load_config(p, {"seed.sub=1"}), doctest::Contains("seed"), ConfigError);
}

TEST_CASE("missing or malformed config files raise config errors") {
  const fs::path dir = fresh_dir("badfiles");
  CHECK_THROWS_WITH_AS(load_config(dir / "absent.json"), doctest::Contains("absent.json"),
                       ConfigError);
  const fs::path bad = write_file(dir, "bad.json", "{not json");
  CHECK_THROWS_AS(load_config(bad), ConfigError);
  const fs::path arr = write_file(dir, "arr.json", "[1,2]");
  CHECK_THROWS_AS(load_config(arr), ConfigError);
}

TEST_CASE("component validation failures surface as config errors") {
  const fs::path dir = fresh_dir("component");
  CHECK_THROWS_AS(load_config(write_file(dir, "a.json", R"({"camera": {"fx": -1}})")),
                  ConfigError);
  CHECK_THROWS_AS(load_config(write_file(dir, "b.json", R"({"scene": {"sh_degree": 9}})")),
                  ConfigError);
  CHECK_THROWS_AS(
      load_config(write_file(dir, "c.json", R"({"simulator": {"n_frames": 1}})")),
      ConfigError);
  CHECK_THROWS_WITH_AS(
      load_config(write_file(dir, "d.json", R"({"schedule": {"k_shape": "stepwise"}})")),
      doctest::Contains("k_shape"), ConfigError);
}
