#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "evgs/camera.hpp"
#include "evgs/e2v_prior.hpp"
#include "evgs/event_io.hpp"
#include "evgs/losses.hpp"
#include "evgs/render.hpp"
#include "evgs/rng.hpp"
#include "evgs/scene.hpp"

namespace evgs {

struct Schedule {
  int warm_up_iters = 3000;
  int event_iters = 15000;
  std::int64_t k_start = 150000;
  std::int64_t k_end = 30000;
  int densify_interval = 100;
  double densify_until_fraction = 0.5;  // of event_iters
  double opacity_prune_threshold = 0.005;
  double positional_grad_threshold = 0.0002;
  int checkpoint_interval = 1000;

  void validate() const;
};

enum class KScheduleShape { Linear, Geometric };

// Window size for a given event-phase iteration: k_start at 0 down to k_end
// at the last iteration, rounded, nonincreasing.
std::int64_t progressive_k(int iter, const Schedule& schedule,
                           KScheduleShape shape = KScheduleShape::Linear);

struct LearningRates {
  double position_start = 1.6e-4;
  double position_end = 1.6e-6;  // exponential decay endpoint
  double color = 2.5e-3;
  double opacity = 5e-2;
  double scale = 5e-3;
  double rotation = 1e-3;
};

// Adam over every scene parameter with per-class learning rates. The
// position rate decays exponentially from position_start to position_end
// across total_steps; all other rates are constant.
struct OptimizerState {
  ParamGradients m;
  ParamGradients v;
  std::int64_t step = 0;
  int total_steps = 1;
  LearningRates rates;

  static OptimizerState init(const GaussianScene& scene, const LearningRates& rates,
                             int total_steps);

  // One update; renormalizes quaternions afterwards.
  void apply(GaussianScene& scene, const ParamGradients& grads);
};

// Positional-gradient statistics accumulated between density-control passes.
struct DensifyAccum {
  std::vector<double> grad_norm;
  std::vector<int> seen;

  void reset(std::size_t count);
  void absorb(const ParamGradients& grads);
};

struct DensifyResult {
  int cloned = 0;
  int split = 0;
  int pruned = 0;
  bool prune_skipped = false;  // the pass would have emptied the scene and was retained instead
};

// Clones (small) or splits (large, at 0.8x scale with a deterministic
// +-0.5*s_max offset along the principal axis) gaussians whose mean
// image-plane positional gradient exceeds the schedule threshold, then prunes
// low-opacity ones. Optimizer moments follow the survivors; new rows start
// at zero. Resets `accum` to the new scene size.
DensifyResult densify_and_prune(GaussianScene& scene, OptimizerState& optimizer,
                                DensifyAccum& accum, const Schedule& schedule,
                                double scene_extent);

struct EventWindow {
  std::int64_t t1 = 0;
  std::int64_t t2 = 0;
  EventFrame frame{0, 0, 0, 0};
};

struct InsufficientEventsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Uniformly random contiguous run of exactly k events. t1 is the timestamp
// of the event preceding the run (stream start minus 1 us for the first);
// t2 is the run's last timestamp; frame accumulates (t1, t2].
EventWindow sample_event_window(const EventStream& stream, std::int64_t k, Rng& rng);

struct StepResult {
  LossReport report;
  bool applied = true;         // false: non-finite loss, update skipped
  double grad_inf_norm = 0.0;  // largest-magnitude parameter gradient
};

// One event-phase step: event loss between renders at pose(t1) and pose(t2),
// plus the SSIM regularizer against the nearest prior frame (skipped when
// lambda_reg is zero). Pose lookups clamp to the trajectory's covered span.
StepResult training_step(GaussianScene& scene, OptimizerState& optimizer,
                         const EventWindow& window, const PriorFrameSet& priors,
                         const LossWeights& weights, const Trajectory& trajectory,
                         const Intrinsics& intrinsics, DensifyAccum* accum = nullptr);

// Prior-only optimization: each iteration samples one prior frame uniformly,
// renders at its pose, and applies L1 gradients. Density control runs on the
// schedule cadence when enabled. Reports carry the L1 value in prior_l1 and
// total.
void warm_up(GaussianScene& scene, OptimizerState& optimizer, const PriorFrameSet& priors,
             const Trajectory& trajectory, const Intrinsics& intrinsics, int iters,
             const Schedule& schedule, double scene_extent, bool densify, Rng& rng,
             std::vector<LossReport>* log = nullptr);

struct TrainerSetup {
  Schedule schedule;
  LossWeights weights;
  LearningRates rates;
  Bounds3 bounds;
  int n_init = 10000;
  int sh_degree = 3;
  std::uint64_t seed = 0;
  KScheduleShape k_shape = KScheduleShape::Linear;
  bool densify_warm_up = true;
  bool densify_event_phase = true;
};

struct TrainInputs {
  EventStream stream;
  Trajectory trajectory;
  Intrinsics intrinsics;
  PriorFrameSet priors;
};

struct TrainingReport {
  int warm_up_iters = 0;
  int event_iters = 0;
  std::vector<double> warm_up_prior_l1;  // per warm-up iteration
  std::vector<double> event_losses;      // per event-phase iteration
  std::size_t final_gaussian_count = 0;
  std::filesystem::path final_checkpoint;
  bool failed = false;
  std::string failure_reason;
};

// Full three-stage run: random init, warm-up on priors, progressive event
// supervision. Writes numbered checkpoints, a JSON-lines log, and a final
// checkpoint under out_dir (pass an empty path to keep everything in
// memory). A failure mid-run keeps the newest on-disk checkpoint and is
// reported rather than thrown.
TrainingReport train(const TrainerSetup& setup, const TrainInputs& inputs,
                     const std::filesystem::path& out_dir, GaussianScene* final_scene = nullptr);

}  // namespace evgs
