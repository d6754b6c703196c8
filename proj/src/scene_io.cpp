#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

#include "evgs/errors.hpp"
#include "evgs/scene.hpp"

namespace evgs {

using nlohmann::json;

void save_scene(const std::string& path, const GaussianScene& scene) {
  scene.validate();
  const std::size_t n = scene.size();
  const std::size_t n_basis = static_cast<std::size_t>(sh_basis_count(scene.sh_degree));

  json j;
  j["sh_degree"] = scene.sh_degree;
  j["count"] = n;
  j["background"] = {scene.background[0], scene.background[1], scene.background[2]};
  std::vector<double> position, log_scale, rotation, opacity_logit, color_coeffs;
  position.reserve(3 * n);
  log_scale.reserve(3 * n);
  rotation.reserve(4 * n);
  opacity_logit.reserve(n);
  color_coeffs.reserve(3 * n_basis * n);
  for (const Gaussian& g : scene.gaussians) {
    for (int a = 0; a < 3; ++a) position.push_back(g.position[a]);
    for (int a = 0; a < 3; ++a) log_scale.push_back(g.log_scale[a]);
    for (int a = 0; a < 4; ++a) rotation.push_back(g.rotation[a]);
    opacity_logit.push_back(g.opacity_logit);
    for (const Eigen::Vector3d& c : g.color_coeffs)
      for (int ch = 0; ch < 3; ++ch) color_coeffs.push_back(c[ch]);
  }
  j["position"] = std::move(position);
  j["log_scale"] = std::move(log_scale);
  j["rotation"] = std::move(rotation);
  j["opacity_logit"] = std::move(opacity_logit);
  j["color_coeffs"] = std::move(color_coeffs);

  // Write-then-rename keeps the previous checkpoint intact on failure.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + tmp);
    out << j.dump() << "\n";
    if (!out) throw IoError("write failed for checkpoint: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place: " + path + ": " + ec.message());
}

GaussianScene load_scene(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("checkpoint " + path + ": " + e.what());
  }
  try {
    GaussianScene scene;
    scene.sh_degree = j.at("sh_degree").get<int>();
    const std::size_t n = j.at("count").get<std::size_t>();
    const auto bg = j.at("background").get<std::vector<double>>();
    if (bg.size() != 3) throw ParseError("checkpoint " + path + ": background needs 3 values");
    scene.background = {bg[0], bg[1], bg[2]};
    const auto position = j.at("position").get<std::vector<double>>();
    const auto log_scale = j.at("log_scale").get<std::vector<double>>();
    const auto rotation = j.at("rotation").get<std::vector<double>>();
    const auto opacity_logit = j.at("opacity_logit").get<std::vector<double>>();
    const auto color_coeffs = j.at("color_coeffs").get<std::vector<double>>();
    const std::size_t n_basis = static_cast<std::size_t>(sh_basis_count(scene.sh_degree));
    if (position.size() != 3 * n || log_scale.size() != 3 * n ||
        rotation.size() != 4 * n || opacity_logit.size() != n ||
        color_coeffs.size() != 3 * n_basis * n)
      throw ParseError("checkpoint " + path + ": array sizes disagree with count");
    scene.gaussians.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      Gaussian& g = scene.gaussians[i];
      for (int a = 0; a < 3; ++a) g.position[a] = position[3 * i + a];
      for (int a = 0; a < 3; ++a) g.log_scale[a] = log_scale[3 * i + a];
      for (int a = 0; a < 4; ++a) g.rotation[a] = rotation[4 * i + a];
      g.opacity_logit = opacity_logit[i];
      g.color_coeffs.resize(n_basis);
      for (std::size_t b = 0; b < n_basis; ++b)
        for (int ch = 0; ch < 3; ++ch)
          g.color_coeffs[b][ch] = color_coeffs[(i * n_basis + b) * 3 + ch];
    }
    scene.validate();
    return scene;
  } catch (const json::exception& e) {
    throw ParseError("checkpoint " + path + ": " + e.what());
  }
}

}  // namespace evgs
