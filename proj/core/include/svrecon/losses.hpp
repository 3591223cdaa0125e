#pragma once

#include "svrecon/assoc.hpp"
#include "svrecon/field.hpp"
#include "svrecon/geoinit.hpp"
#include "svrecon/lattice.hpp"
#include "svrecon/render.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace svr {

/// Dense per-voxel gradient accumulators aligned with OctreeState ids.
struct GradBuffer {
  std::vector<std::array<double, 8>> geo;
  std::vector<std::array<double, 3>> color;

  GradBuffer() = default;
  explicit GradBuffer(std::size_t voxels) { reset(voxels); }

  void reset(std::size_t voxels);
  std::size_t size() const { return geo.size(); }
  void add(const GradBuffer& other);
  void add_geo(VoxelId v, const CornerWeights& w, double scale);
  bool all_finite() const;
};

enum class Profile { dtu, tnt, synthetic, baseline };

Profile parse_profile(std::string_view name);  // std::invalid_argument on unknown names
std::string_view profile_name(Profile p);

struct LossWeights {
  double photo = 1.0;
  double normal = 0.0;
  double eikonal = 0.0;
  double local_eikonal = 0.0;
  double smooth = 0.0;
  double mask = 0.0;
  double ray_eikonal = 0.0;
  double dmean = 0.0;
  double dmed = 0.0;
};

/// Piecewise weight schedule. Eikonal and smoothness decay by 0.25 every
/// decay_period iterations, at most decay_steps times; the Eikonal term
/// stops at eikonal_end. The local Eikonal window is inclusive.
struct WeightSchedule {
  std::array<double, 3> normal{0.0, 0.0, 0.0};
  std::array<long, 2> normal_breaks{0, 0};
  double eikonal = 1e-8;
  long eikonal_end = 6000;
  double smooth = 1e-10;
  long decay_period = 2000;
  long decay_steps = 2;
  double local_eikonal = 1e-11;
  std::array<long, 2> local_eikonal_window{0, -1};
  double mask = 0.0;
  double ray_eikonal = 0.0;
  double dmed = 0.001;
  long dmed_start = 1000;
  double dmean = 0.001;
  long dmean_start = 2000;
};

WeightSchedule schedule_for(Profile profile);
LossWeights weight_schedule(long tau, const WeightSchedule& schedule);
/// Per-iteration loss weights of each profile. Pure in (tau, profile).
LossWeights weight_schedule(long tau, Profile profile);

struct LossReport {
  double photo = 0.0;
  double normal = 0.0;
  double eikonal = 0.0;
  double local_eikonal = 0.0;
  double smooth = 0.0;
  double mask = 0.0;
  double ray_eikonal = 0.0;
  double dmean = 0.0;
  double dmed = 0.0;
  LossWeights weights;
  bool normal_mask_empty = false;

  double total() const;
};

// ---- lattice-sampled regularizers --------------------------------------

/// Sample positions in dense coordinates of the index lattice: a uniform
/// occupied cell plus a uniform offset in [0,1)^3. Only samples whose cell
/// has six occupied face neighbors are kept, so fewer than n may return.
std::vector<Vec3> sample_cells(const AssociationIndex& index, std::size_t n, std::uint64_t seed);

/// sum over samples of (|grad f| - 1)^2, grad by central differences with
/// world step h_L. Adds weight * d/dgeo into grads when non-null.
double eikonal_global(const OctreeState& octree, const AssociationIndex& index,
                      std::span<const Vec3> samples, GradBuffer* grads = nullptr, double weight = 1.0);

/// sum over samples of |Laplacian f|_1 with (f+ - 2 f0 + f-) / h_L^2 per axis.
double laplacian_smooth(const OctreeState& octree, const AssociationIndex& index,
                        std::span<const Vec3> samples, GradBuffer* grads = nullptr, double weight = 1.0);

/// Each id kept independently with probability p.
std::vector<VoxelId> select_subset(std::span<const VoxelId> ids, double p, std::uint64_t seed);

/// scale * sum over ids of (|grad_center(v)| - 1)^2.
double eikonal_local(const OctreeState& octree, std::span<const VoxelId> ids, double scale = 1.0,
                     GradBuffer* grads = nullptr, double weight = 1.0);

// ---- image-space terms (per ray / per pixel) ---------------------------

struct NormalPrior {
  int width = 0;
  int height = 0;
  std::vector<Vec3> normals;
  std::vector<std::uint8_t> valid;
};

/// Cross product of the horizontal and vertical point differences (central
/// inside, one-sided at the border), oriented toward `camera_center`.
NormalPrior normal_prior_from_pointmap(const PointMap& map, const Vec3& camera_center,
                                       double confidence_threshold = 0.1);

struct ImageLoss {
  double value = 0.0;
  std::vector<Vec3> grad;       // d value / d rendered vector, per entry
  std::vector<double> grad_t;   // d value / d transmittance, per entry
  bool empty = false;
};

/// (1/|M|) sum over valid entries of (1 - N_rend . N_prior).
ImageLoss normal_loss(std::span<const Vec3> rendered, std::span<const Vec3> prior,
                      std::span<const std::uint8_t> valid);

/// Mean over entries of |T - target|, target 1 where mask is 0 and 0 where it is 1.
ImageLoss mask_loss(std::span<const double> transmittance, std::span<const std::uint8_t> mask);

/// Mean over entries and channels of (C - C_ref)^2.
ImageLoss photometric(std::span<const Vec3> rendered, std::span<const Vec3> reference);

// ---- ray terms ---------------------------------------------------------

struct SegmentGrad {
  double d_in = 0.0;
  double d_out = 0.0;
};

/// sum_i w_i (g_i + 1)^2 with g_i = (f_out - f_in) / length; w is constant.
/// Zero-length segments are skipped.
double ray_eikonal(std::span<const RaySegment> segments, std::span<const double> w,
                   std::vector<SegmentGrad>* grads = nullptr);

/// sum_i w_i |t_i - D| with D = sum w t / sum w. dw gets the full derivative.
double depth_spread_mean(std::span<const double> t, std::span<const double> w,
                         std::vector<double>* dw = nullptr);

/// sum_i w_i |t_i - t_med| with the weighted median held constant.
double depth_spread_median(std::span<const double> t, std::span<const double> w,
                           std::vector<double>* dw = nullptr);

}  // namespace svr
