#pragma once

#include "svrecon/adapt.hpp"
#include "svrecon/assoc.hpp"
#include "svrecon/geoinit.hpp"
#include "svrecon/lattice.hpp"
#include "svrecon/losses.hpp"
#include "svrecon/render.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace svr {

struct LevelStep {
  long iteration = 0;
  int level = 6;
};

struct TrainConfig {
  Profile profile = Profile::synthetic;
  WeightSchedule weights = schedule_for(Profile::synthetic);
  long iterations = 2000;
  int rays_per_batch = 4096;
  double lr_geo_scale = 1e-2;  // geo learning rate = scale * h of the target level
  double lr_color = 2.5e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-15;
  long prune_every = 1000;
  long subdivide_every = 250;
  std::vector<LevelStep> level_schedule{{0, 6}, {1000, 7}};
  int l_cap = 9;
  std::uint64_t seed = 0;
  std::size_t regularizer_samples = 8192;
  double local_eikonal_probability = 0.5;
  double kappa = 1.0;
  double top_fraction = 0.3;
  double stat_decay = 0.9;
  double ramp_rate = kSharpnessRamp;
  std::optional<double> initial_log_s;  // default: l(s0) = 2 h of the first level
  Vec3 background = Vec3::Zero();
  double early_stop_transmittance = 1e-4;
  double confidence_threshold = 0.1;
  int threads = 1;
  long start_iteration = 0;  // resume point; the sharpness schedule is replayed up to it
};

/// Paper defaults per profile (iterations, level schedule, l_cap).
TrainConfig default_config(Profile profile);

/// Target finest level at iteration tau.
int target_level(const std::vector<LevelStep>& schedule, long tau);

/// Ramp progress r in [0,1] within the current level; reaches 1 on the last
/// iteration before the next level step (or before the end of training).
double level_progress(const TrainConfig& config, long tau);

/// Schedule before any iteration has run.
SharpnessSchedule initial_sharpness(const TrainConfig& config, const SceneBounds& bounds);

/// Applies the level step (if any) and the ramp for iteration tau.
void advance_sharpness(SharpnessSchedule& sharpness, const TrainConfig& config, const SceneBounds& bounds, long tau);

/// Schedule as used by iteration tau, replayed from iteration 0.
SharpnessSchedule sharpness_at(const TrainConfig& config, const SceneBounds& bounds, long tau);

/// One training view: camera, reference colors, optional mask and normal prior.
struct TrainingView {
  CameraModel camera;
  std::vector<Vec3> rgb;
  std::vector<std::uint8_t> mask;  // empty when unavailable
  NormalPrior prior;               // empty when unavailable
};

/// Rays with their supervision; optional vectors are empty or full-size.
struct RayBatch {
  std::vector<Ray> rays;
  std::vector<Vec3> target;
  std::vector<std::uint8_t> mask;
  std::vector<Vec3> prior_normal;
  std::vector<std::uint8_t> prior_valid;
};

struct RegularizerInputs {
  const AssociationIndex* index = nullptr;  // lattice of routed voxels
  std::vector<Vec3> samples;                 // dense coordinates of `index`
  std::vector<VoxelId> local;                // voxels for the local Eikonal term
  double local_scale = 2.0;
  int l_cap = 9;
};

struct EvalOptions {
  double s = 1.0;
  Vec3 background = Vec3::Zero();
  double early_stop_transmittance = 0.0;
  int threads = 1;
};

/// Per-voxel magnitude of the photometric corner gradient, aligned with ids.
using VoxelStats = std::vector<double>;

/// Pure loss evaluation: renders the batch through `tree` (built over
/// `octree`), evaluates every term with nonzero weight and, when `grads` is
/// given, accumulates d total / d params. Deterministic for any thread count.
LossReport evaluate_loss(const OctreeState& octree, const VoxelTree& tree, const RayBatch& batch,
                         const RegularizerInputs& reg, const LossWeights& weights, const EvalOptions& options,
                         GradBuffer* grads = nullptr, VoxelStats* photo_stats = nullptr);

/// Reverse pass for one ray. `g_color`, `g_normal`, `g_trans` are the
/// upstream gradients of the composited color, normal and final
/// transmittance; `g_weight` adds per-segment gradients on w_i = T_i alpha_i.
struct RenderUpstream {
  Vec3 g_color = Vec3::Zero();
  Vec3 g_normal = Vec3::Zero();
  double g_trans = 0.0;
  std::vector<double> g_weight;  // empty or one per segment
};

struct SegmentParamGrad {
  VoxelId voxel = kNoVoxel;
  std::array<double, 8> geo{};
  std::array<double, 3> color{};
};

/// Exact reverse-mode derivative of composite() for one ray with respect to
/// each segment voxel's corners and color. Per-segment normals come from the
/// voxel's corners (zero and gradient-free when degenerate).
std::vector<SegmentParamGrad> backprop_render(const OctreeState& octree, std::span<const RaySegment> segments,
                                              double s, const RenderUpstream& upstream);

struct OptimState {
  std::vector<std::array<double, 8>> m_geo, v_geo;
  std::vector<std::array<double, 3>> m_color, v_color;
  long step = 0;

  void resize(std::size_t voxels);
  void remap(const Remap& r);
};

struct AdamParams {
  double lr_geo = 1e-3;
  double lr_color = 2.5e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-15;
};

/// Bias-corrected Adam step on every voxel; colors are clamped to [0,1].
void apply_update(OctreeState& octree, const GradBuffer& grads, OptimState& optim, const AdamParams& params);

struct IterationLog {
  long iteration = 0;
  LossReport report;
  double log_s = 0.0;
  double s = 0.0;
  int level = 0;
  std::size_t voxels = 0;
  std::size_t pruned = 0;
  std::size_t split = 0;
};

/// NDJSON line for the run log.
std::string to_json_line(const IterationLog& log);

class Trainer {
 public:
  Trainer(OctreeState octree, std::vector<TrainingView> views, TrainConfig config);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  /// Runs one iteration: adapt cadence, batch, losses, update.
  /// Throws NumericalAbort on a non-finite loss or gradient.
  IterationLog step();
  /// Runs until config.iterations; `on_iteration` sees every log entry.
  void run(const std::function<void(const IterationLog&)>& on_iteration = {});

  long iteration() const { return tau_; }
  const OctreeState& octree() const { return octree_; }
  const SharpnessSchedule& sharpness() const { return sharpness_; }
  const TrainConfig& config() const { return config_; }
  const std::vector<double>& log_s_trace() const { return log_s_trace_; }

 private:
  void rebuild_structures();
  void adapt(std::size_t& pruned, std::size_t& split, bool force_split);
  RayBatch sample_batch(std::uint64_t seed) const;

  OctreeState octree_;
  std::vector<TrainingView> views_;
  TrainConfig config_;
  VoxelTree tree_;
  Routing routing_;
  AssociationIndex lattice_;
  OptimState optim_;
  SharpnessSchedule sharpness_;
  VoxelStats stats_;
  int level_ = 0;
  long tau_ = 0;
  std::vector<double> log_s_trace_;
};

/// Builds training views from a scene's images, masks and point maps.
std::vector<TrainingView> make_training_views(const std::vector<CameraModel>& cameras,
                                              const std::vector<std::vector<Vec3>>& images,
                                              const std::vector<std::vector<std::uint8_t>>& masks,
                                              const std::vector<PointMap>& pointmaps, double confidence_threshold);

}  // namespace svr
