#include "evgs/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "evgs/errors.hpp"

namespace evgs {
namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

Pose pose_at_clamped(const Trajectory& trajectory, std::int64_t t) {
  return pose_at(trajectory, std::clamp(t, trajectory.t_min(), trajectory.t_max()));
}

double adam_scalar(double m, double v, double bias1, double bias2) {
  return (m / bias1) / (std::sqrt(v / bias2) + kAdamEps);
}

void sanitize(LossReport& report) {
  for (double* f : {&report.event_loss, &report.reg_loss, &report.prior_l1, &report.total})
    if (!std::isfinite(*f)) *f = 0.0;
}

double grad_max_abs(const ParamGradients& g) {
  double worst = 0.0;
  const auto take = [&](double x) { worst = std::max(worst, std::abs(x)); };
  for (std::size_t i = 0; i < g.position.size(); ++i) {
    for (int a = 0; a < 3; ++a) {
      take(g.position[i][a]);
      take(g.log_scale[i][a]);
    }
    for (int a = 0; a < 4; ++a) take(g.rotation[i][a]);
    take(g.opacity_logit[i]);
    for (const auto& c : g.color_coeffs[i])
      for (int a = 0; a < 3; ++a) take(c[a]);
  }
  return worst;
}

}  // namespace

void Schedule::validate() const {
  if (warm_up_iters < 0) throw ValidationError("schedule: warm_up_iters must be nonnegative");
  if (event_iters <= 0) throw ValidationError("schedule: event_iters must be positive");
  if (k_end < 1) throw ValidationError("schedule: k_end must be at least 1");
  if (k_start < k_end) throw ValidationError("schedule: k_start must be >= k_end");
  if (densify_interval <= 0) throw ValidationError("schedule: densify_interval must be positive");
  if (densify_until_fraction < 0.0 || densify_until_fraction > 1.0)
    throw ValidationError("schedule: densify_until_fraction must lie in [0,1]");
  if (checkpoint_interval <= 0)
    throw ValidationError("schedule: checkpoint_interval must be positive");
  if (opacity_prune_threshold < 0.0 || opacity_prune_threshold >= 1.0)
    throw ValidationError("schedule: opacity_prune_threshold must lie in [0,1)");
  if (positional_grad_threshold < 0.0)
    throw ValidationError("schedule: positional_grad_threshold must be nonnegative");
}

std::int64_t progressive_k(int iter, const Schedule& schedule, KScheduleShape shape) {
  if (iter < 0 || iter >= schedule.event_iters)
    throw std::invalid_argument("progressive_k: iteration " + std::to_string(iter) +
                                " outside [0, " + std::to_string(schedule.event_iters) + ")");
  if (schedule.event_iters == 1) return schedule.k_end;
  const double frac = static_cast<double>(iter) / (schedule.event_iters - 1);
  double k;
  if (shape == KScheduleShape::Linear) {
    k = schedule.k_start + (static_cast<double>(schedule.k_end) - schedule.k_start) * frac;
  } else {
    k = schedule.k_start *
        std::pow(static_cast<double>(schedule.k_end) / schedule.k_start, frac);
  }
  return static_cast<std::int64_t>(std::llround(k));
}

OptimizerState OptimizerState::init(const GaussianScene& scene, const LearningRates& rates,
                                    int total_steps) {
  OptimizerState state;
  state.m = ParamGradients::zeros_like(scene);
  state.v = ParamGradients::zeros_like(scene);
  state.rates = rates;
  state.total_steps = std::max(1, total_steps);
  return state;
}

void OptimizerState::apply(GaussianScene& scene, const ParamGradients& grads) {
  ++step;
  const double bias1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
  const double bias2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
  const double decay_frac =
      total_steps > 1 ? std::min(1.0, static_cast<double>(step - 1) / (total_steps - 1)) : 1.0;
  const double lr_position =
      rates.position_start * std::pow(rates.position_end / rates.position_start, decay_frac);

  for (std::size_t i = 0; i < scene.gaussians.size(); ++i) {
    Gaussian& g = scene.gaussians[i];
    for (int a = 0; a < 3; ++a) {
      m.position[i][a] = kBeta1 * m.position[i][a] + (1 - kBeta1) * grads.position[i][a];
      v.position[i][a] =
          kBeta2 * v.position[i][a] + (1 - kBeta2) * grads.position[i][a] * grads.position[i][a];
      g.position[a] -= lr_position * adam_scalar(m.position[i][a], v.position[i][a], bias1, bias2);

      m.log_scale[i][a] = kBeta1 * m.log_scale[i][a] + (1 - kBeta1) * grads.log_scale[i][a];
      v.log_scale[i][a] = kBeta2 * v.log_scale[i][a] +
                          (1 - kBeta2) * grads.log_scale[i][a] * grads.log_scale[i][a];
      g.log_scale[a] -=
          rates.scale * adam_scalar(m.log_scale[i][a], v.log_scale[i][a], bias1, bias2);
    }
    Eigen::Vector4d rotation_step;
    for (int a = 0; a < 4; ++a) {
      m.rotation[i][a] = kBeta1 * m.rotation[i][a] + (1 - kBeta1) * grads.rotation[i][a];
      v.rotation[i][a] =
          kBeta2 * v.rotation[i][a] + (1 - kBeta2) * grads.rotation[i][a] * grads.rotation[i][a];
      rotation_step[a] =
          rates.rotation * adam_scalar(m.rotation[i][a], v.rotation[i][a], bias1, bias2);
    }
    m.opacity_logit[i] = kBeta1 * m.opacity_logit[i] + (1 - kBeta1) * grads.opacity_logit[i];
    v.opacity_logit[i] = kBeta2 * v.opacity_logit[i] +
                         (1 - kBeta2) * grads.opacity_logit[i] * grads.opacity_logit[i];
    g.opacity_logit -=
        rates.opacity * adam_scalar(m.opacity_logit[i], v.opacity_logit[i], bias1, bias2);

    for (std::size_t c = 0; c < g.color_coeffs.size(); ++c)
      for (int a = 0; a < 3; ++a) {
        m.color_coeffs[i][c][a] =
            kBeta1 * m.color_coeffs[i][c][a] + (1 - kBeta1) * grads.color_coeffs[i][c][a];
        v.color_coeffs[i][c][a] = kBeta2 * v.color_coeffs[i][c][a] +
                                  (1 - kBeta2) * grads.color_coeffs[i][c][a] *
                                      grads.color_coeffs[i][c][a];
        g.color_coeffs[c][a] -= rates.color * adam_scalar(m.color_coeffs[i][c][a],
                                                          v.color_coeffs[i][c][a], bias1, bias2);
      }

    // Renormalise only when the quaternion actually moved so that a zero
    // update is a bitwise fixed point.
    if (rotation_step.cwiseAbs().sum() != 0.0) {
      g.rotation -= rotation_step;
      const double norm = g.rotation.norm();
      if (norm > 1e-12)
        g.rotation /= norm;
      else
        g.rotation = Eigen::Vector4d(1, 0, 0, 0);
    }
  }
}

void DensifyAccum::reset(std::size_t count) {
  grad_norm.assign(count, 0.0);
  seen.assign(count, 0);
}

void DensifyAccum::absorb(const ParamGradients& grads) {
  if (grad_norm.size() != grads.accum_mean2d_grad_norm.size())
    throw std::invalid_argument("densify accumulator size differs from the gradient record");
  for (std::size_t i = 0; i < grad_norm.size(); ++i) {
    grad_norm[i] += grads.accum_mean2d_grad_norm[i];
    seen[i] += grads.visible_count[i];
  }
}

DensifyResult densify_and_prune(GaussianScene& scene, OptimizerState& optimizer,
                                DensifyAccum& accum, const Schedule& schedule,
                                double scene_extent) {
  DensifyResult result;
  const std::size_t n = scene.gaussians.size();
  if (accum.grad_norm.size() != n)
    throw std::invalid_argument("densify accumulator size differs from the scene");

  GaussianScene next;
  next.background = scene.background;
  next.sh_degree = scene.sh_degree;
  ParamGradients next_m = ParamGradients::zeros_like(next);
  ParamGradients next_v = ParamGradients::zeros_like(next);

  const auto push = [&](const Gaussian& g, const std::size_t* moment_row) {
    next.gaussians.push_back(g);
    const auto grow = [&](ParamGradients& dst, const ParamGradients& src) {
      if (moment_row == nullptr) {
        dst.position.emplace_back(Eigen::Vector3d::Zero());
        dst.log_scale.emplace_back(Eigen::Vector3d::Zero());
        dst.rotation.emplace_back(Eigen::Vector4d::Zero());
        dst.opacity_logit.push_back(0.0);
        dst.color_coeffs.emplace_back(g.color_coeffs.size(), Eigen::Vector3d::Zero());
      } else {
        dst.position.push_back(src.position[*moment_row]);
        dst.log_scale.push_back(src.log_scale[*moment_row]);
        dst.rotation.push_back(src.rotation[*moment_row]);
        dst.opacity_logit.push_back(src.opacity_logit[*moment_row]);
        dst.color_coeffs.push_back(src.color_coeffs[*moment_row]);
      }
      dst.accum_mean2d_grad_norm.push_back(0.0);
      dst.visible_count.push_back(0);
    };
    grow(next_m, optimizer.m);
    grow(next_v, optimizer.v);
  };

  for (std::size_t i = 0; i < n; ++i) {
    const Gaussian& g = scene.gaussians[i];
    if (g.opacity() < schedule.opacity_prune_threshold) {
      ++result.pruned;
      continue;
    }
    const double mean_grad = accum.seen[i] > 0 ? accum.grad_norm[i] / accum.seen[i] : 0.0;
    if (mean_grad <= schedule.positional_grad_threshold) {
      push(g, &i);
      continue;
    }
    const int axis = static_cast<int>(std::max_element(g.log_scale.data(), g.log_scale.data() + 3) -
                                      g.log_scale.data());
    const double s_max = std::exp(g.log_scale[axis]);
    if (s_max > 0.01 * scene_extent) {
      const Eigen::Vector3d direction = quat_to_rotmat(g.rotation).col(axis);
      Gaussian child = g;
      child.log_scale.array() += std::log(0.8);
      child.position = g.position + 0.5 * s_max * direction;
      push(child, nullptr);
      child.position = g.position - 0.5 * s_max * direction;
      push(child, nullptr);
      ++result.split;
    } else {
      push(g, &i);
      Gaussian copy = g;
      push(copy, nullptr);
      ++result.cloned;
    }
  }

  if (next.gaussians.empty() && n > 0) {
    // Nothing survived the opacity cut. Dropping the whole scene would leave
    // later iterations with nothing to optimize, so keep this round a no-op.
    accum.reset(n);
    result = DensifyResult{};
    result.prune_skipped = true;
    return result;
  }
  scene = std::move(next);
  optimizer.m = std::move(next_m);
  optimizer.v = std::move(next_v);
  accum.reset(scene.gaussians.size());
  return result;
}

EventWindow sample_event_window(const EventStream& stream, std::int64_t k, Rng& rng) {
  if (k < 1) throw std::invalid_argument("sample_event_window: k must be at least 1");
  const auto n = static_cast<std::int64_t>(stream.events.size());
  if (n < k)
    throw InsufficientEventsError("sample_event_window: stream holds " + std::to_string(n) +
                                  " events, window needs " + std::to_string(k));
  const std::int64_t start = static_cast<std::int64_t>(rng.uniform_index(n - k + 1));
  EventWindow window;
  window.t1 = start == 0 ? stream.events.front().t - 1 : stream.events[start - 1].t;
  window.t2 = stream.events[start + k - 1].t;
  // Accumulate the sampled index range directly. A time-based query would be
  // ambiguous when neighbouring events share a timestamp across the window edge.
  window.frame = EventFrame(stream.height, stream.width, window.t1, window.t2);
  for (std::int64_t i = start; i < start + k; ++i) {
    const Event& e = stream.events[static_cast<std::size_t>(i)];
    window.frame.at(e.y, e.x) += e.p * stream.threshold;
  }
  return window;
}

StepResult training_step(GaussianScene& scene, OptimizerState& optimizer,
                         const EventWindow& window, const PriorFrameSet& priors,
                         const LossWeights& weights, const Trajectory& trajectory,
                         const Intrinsics& intrinsics, DensifyAccum* accum) {
  StepResult result;
  const Pose pose1 = pose_at_clamped(trajectory, window.t1);
  const Pose pose2 = pose_at_clamped(trajectory, window.t2);
  const RenderResult fwd1 = render(scene, pose1, intrinsics);
  const RenderResult fwd2 = render(scene, pose2, intrinsics);
  result.report.event_loss =
      event_loss(fwd1.image, fwd2.image, window.frame, weights.log_epsilon);
  ImagePairGrads event_grads =
      event_loss_backward(fwd1.image, fwd2.image, window.frame, weights.log_epsilon);
  for (double& d : event_grads.d_first.data) d *= weights.lambda_event;
  for (double& d : event_grads.d_second.data) d *= weights.lambda_event;

  ParamGradients grads = render_backward(scene, pose1, intrinsics, fwd1, event_grads.d_first);
  grads.add(render_backward(scene, pose2, intrinsics, fwd2, event_grads.d_second));

  if (!priors.frames.empty()) {
    const auto& [t_prior, prior_image] = priors.frames[priors.nearest_index(window.t2)];
    const Pose pose_reg = pose_at_clamped(trajectory, t_prior);
    const RenderResult fwd_reg = render(scene, pose_reg, intrinsics);
    result.report.prior_l1 = prior_l1_loss(prior_image, fwd_reg.image);
    if (weights.lambda_reg != 0.0) {
      result.report.reg_loss = reg_loss(prior_image, fwd_reg.image);
      Image reg_grad = reg_loss_backward(prior_image, fwd_reg.image);
      for (double& d : reg_grad.data) d *= weights.lambda_reg;
      grads.add(render_backward(scene, pose_reg, intrinsics, fwd_reg, reg_grad));
    }
  }

  result.report.total =
      total_loss(result.report.event_loss, result.report.reg_loss, weights);
  result.grad_inf_norm = grad_max_abs(grads);
  if (!std::isfinite(result.report.total) || !std::isfinite(result.grad_inf_norm)) {
    result.applied = false;
    sanitize(result.report);
    return result;
  }
  if (accum != nullptr) accum->absorb(grads);
  optimizer.apply(scene, grads);
  return result;
}

void warm_up(GaussianScene& scene, OptimizerState& optimizer, const PriorFrameSet& priors,
             const Trajectory& trajectory, const Intrinsics& intrinsics, int iters,
             const Schedule& schedule, double scene_extent, bool densify, Rng& rng,
             std::vector<LossReport>* log) {
  if (priors.frames.empty()) throw std::invalid_argument("warm_up: prior frame set is empty");
  DensifyAccum accum;
  accum.reset(scene.gaussians.size());
  for (int iter = 0; iter < iters; ++iter) {
    const auto& [t, prior_image] = priors.frames[rng.uniform_index(priors.frames.size())];
    const Pose pose = pose_at_clamped(trajectory, t);
    const RenderResult fwd = render(scene, pose, intrinsics);
    const double loss = prior_l1_loss(prior_image, fwd.image);
    const ParamGradients grads =
        render_backward(scene, pose, intrinsics, fwd, prior_l1_backward(prior_image, fwd.image));
    accum.absorb(grads);
    optimizer.apply(scene, grads);
    if (log != nullptr) {
      LossReport report;
      report.iteration = iter;
      report.prior_l1 = loss;
      report.total = loss;
      log->push_back(report);
    }
    if (densify && (iter + 1) % schedule.densify_interval == 0)
      densify_and_prune(scene, optimizer, accum, schedule, scene_extent);
  }
}

TrainingReport train(const TrainerSetup& setup, const TrainInputs& inputs,
                     const std::filesystem::path& out_dir, GaussianScene* final_scene) {
  setup.schedule.validate();
  setup.bounds.validate();
  inputs.stream.validate();
  inputs.trajectory.validate();
  inputs.intrinsics.validate();

  TrainingReport report;
  const bool to_disk = !out_dir.empty();
  std::ofstream log_file;
  if (to_disk) {
    std::filesystem::create_directories(out_dir);
    log_file.open(out_dir / "train_log.jsonl", std::ios::trunc);
    if (!log_file) throw IoError("cannot open training log in " + out_dir.string());
  }
  const auto emit = [&](const LossReport& r) {
    if (to_disk) log_file << to_json_line(r) << '\n';
  };
  const auto checkpoint = [&](const GaussianScene& scene, int global_iter) {
    if (!to_disk) return;
    char name[48];
    std::snprintf(name, sizeof(name), "checkpoint_%06d.json", global_iter);
    save_scene((out_dir / name).string(), scene);
  };

  Rng init_rng(substream(setup.seed, "init"));
  GaussianScene scene =
      init_random_cloud(setup.n_init, setup.bounds, init_rng, setup.sh_degree);
  const double extent = setup.bounds.diagonal();
  OptimizerState optimizer = OptimizerState::init(
      scene, setup.rates, setup.schedule.warm_up_iters + setup.schedule.event_iters);

  // Warm-up stage, inlined so every iteration reaches the log and the
  // checkpoint cadence.
  Rng warm_rng(substream(setup.seed, "warmup"));
  DensifyAccum accum;
  accum.reset(scene.gaussians.size());
  try {
    for (int iter = 0; iter < setup.schedule.warm_up_iters; ++iter) {
      if (inputs.priors.frames.empty())
        throw std::invalid_argument("train: warm-up requested with no prior frames");
      const auto& [t, prior_image] =
          inputs.priors.frames[warm_rng.uniform_index(inputs.priors.frames.size())];
      const Pose pose = pose_at_clamped(inputs.trajectory, t);
      const RenderResult fwd = render(scene, pose, inputs.intrinsics);
      const double loss = prior_l1_loss(prior_image, fwd.image);
      const ParamGradients grads = render_backward(
          scene, pose, inputs.intrinsics, fwd, prior_l1_backward(prior_image, fwd.image));
      accum.absorb(grads);
      optimizer.apply(scene, grads);
      LossReport r;
      r.iteration = iter;
      r.prior_l1 = loss;
      r.total = loss;
      emit(r);
      report.warm_up_prior_l1.push_back(loss);
      ++report.warm_up_iters;
      if (setup.densify_warm_up && (iter + 1) % setup.schedule.densify_interval == 0)
        densify_and_prune(scene, optimizer, accum, setup.schedule, extent);
      if ((iter + 1) % setup.schedule.checkpoint_interval == 0) checkpoint(scene, iter + 1);
    }

    // Event-supervision stage.
    Rng window_rng(substream(setup.seed, "window"));
    const int densify_until = static_cast<int>(
        std::llround(setup.schedule.densify_until_fraction * setup.schedule.event_iters));
    for (int iter = 0; iter < setup.schedule.event_iters; ++iter) {
      const std::int64_t scheduled = progressive_k(iter, setup.schedule, setup.k_shape);
      const std::int64_t k =
          std::min<std::int64_t>(scheduled, static_cast<std::int64_t>(inputs.stream.events.size()));
      if (k < 1) {
        report.failed = true;
        report.failure_reason = "event stream is empty";
        return report;
      }
      const EventWindow window = sample_event_window(inputs.stream, k, window_rng);
      StepResult step = training_step(scene, optimizer, window, inputs.priors, setup.weights,
                                      inputs.trajectory, inputs.intrinsics, &accum);
      const int global_iter = setup.schedule.warm_up_iters + iter;
      step.report.iteration = global_iter;
      emit(step.report);
      report.event_losses.push_back(step.report.event_loss);
      ++report.event_iters;
      if (setup.densify_event_phase && (iter + 1) % setup.schedule.densify_interval == 0 &&
          (iter + 1) <= densify_until)
        densify_and_prune(scene, optimizer, accum, setup.schedule, extent);
      if ((global_iter + 1) % setup.schedule.checkpoint_interval == 0)
        checkpoint(scene, global_iter + 1);
    }
  } catch (const InsufficientEventsError& e) {
    report.failed = true;
    report.failure_reason = e.what();
    return report;
  }

  report.final_gaussian_count = scene.gaussians.size();
  if (to_disk) {
    const auto final_path = out_dir / "final_scene.json";
    save_scene(final_path.string(), scene);
    report.final_checkpoint = final_path;
  }
  if (final_scene != nullptr) *final_scene = scene;
  return report;
}

}  // namespace evgs
