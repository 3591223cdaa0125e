#pragma once

#include "svrecon/field.hpp"
#include "svrecon/geoinit.hpp"
#include "svrecon/lattice.hpp"

#include <limits>
#include <span>
#include <vector>

namespace svr {

// Guard on the Phi(f_in) denominator of the alpha formula.
inline constexpr double kPhiEpsilon = 1e-7;
inline constexpr double kSharpnessRamp = 0.07;

/// Logistic CDF 1 / (1 + exp(-s f)).
double phi_s(double f, double s);

/// max((Phi(f_in) - Phi(f_out)) / max(Phi(f_in), eps), 0), clamped to [0,1].
double alpha_from_sdf(double f_in, double f_out, double s);

struct AlphaPartials {
  double alpha = 0.0;
  double d_in = 0.0;   // d alpha / d f_in
  double d_out = 0.0;  // d alpha / d f_out
};

/// Alpha with its analytic partials. At the max() kink and on the
/// clamped branch both partials are 0.
AlphaPartials alpha_partials(double f_in, double f_out, double s);

/// Width of the band holding 99% of the logistic density: 2 ln(199) / s.
double learning_thickness(double s);

struct RaySegment {
  VoxelId voxel = kNoVoxel;
  double t_in = 0.0;
  double t_out = 0.0;
  Vec3 p_in = Vec3::Zero();
  Vec3 p_out = Vec3::Zero();
  double f_in = 0.0;
  double f_out = 0.0;
  CornerWeights w_in{};
  CornerWeights w_out{};

  double length() const { return t_out - t_in; }
  double t_mid() const { return 0.5 * (t_in + t_out); }
};

/// Pointer octree over the leaves of an OctreeState for ray traversal and
/// point location. Holds a reference to the state: structure is frozen at
/// construction, SDF values are read at traversal time.
class VoxelTree {
 public:
  VoxelTree() = default;
  explicit VoxelTree(const OctreeState& octree);

  const OctreeState* octree() const { return octree_; }

  /// Leaf segments along the ray within [t_min, t_max], sorted by t_in.
  /// Throws std::domain_error for a zero direction.
  void traverse(const Ray& ray, double t_min, double t_max, std::vector<RaySegment>& out) const;
  std::vector<RaySegment> traverse(const Ray& ray, double t_min = 0.0,
                                   double t_max = std::numeric_limits<double>::infinity()) const;

  /// Leaf containing p (floor convention on shared faces), or kNoVoxel.
  VoxelId locate(const Vec3& p) const;

 private:
  struct Node {
    int level = 0;
    DenseCoord anchor{};
    VoxelId voxel = kNoVoxel;  // set on leaves
    std::array<std::int32_t, 8> child{-1, -1, -1, -1, -1, -1, -1, -1};
  };

  struct Walk;
  void descend(std::int32_t node, Walk& walk, double t0, double t1) const;
  bool slab(const Node& n, const Walk& walk, double& t0, double& t1) const;

  const OctreeState* octree_ = nullptr;
  std::vector<Node> nodes_;
};

/// Convenience wrapper building a VoxelTree per call.
std::vector<RaySegment> traverse_ray(const OctreeState& octree, const Ray& ray, double t_min = 0.0,
                                     double t_max = std::numeric_limits<double>::infinity());

/// Ray parameters where the ray enters and leaves the scene cube; false on a miss.
bool intersect_bounds(const SceneBounds& bounds, const Ray& ray, double& t0, double& t1);

struct PixelRender {
  Vec3 color = Vec3::Zero();
  double transmittance = 1.0;
  Vec3 normal = Vec3::Zero();
  double depth = 0.0;  // sum of T alpha t_mid
};

/// Front-to-back compositing of per-segment colors and (optional) normals.
/// `colors` and, when non-empty, `normals` are aligned with `segments`.
/// Rays leaving with T > 0 pick up T * background.
PixelRender composite(std::span<const RaySegment> segments, double s, std::span<const Vec3> colors,
                      std::span<const Vec3> normals = {}, const Vec3& background = Vec3::Zero());

/// log s = base + 0.07 r within a level; on a level change the base absorbs
/// the completed ramp, then rises by ln(h_old / h_new).
class SharpnessSchedule {
 public:
  SharpnessSchedule() = default;
  SharpnessSchedule(double log_s_base, int level, double ramp_rate = kSharpnessRamp)
      : base_(log_s_base), level_(level), rate_(ramp_rate) {}

  /// Starting schedule with l(s0) = 2 h, i.e. s0 = ln(199) / h.
  static SharpnessSchedule for_cell_size(double h, int level, double ramp_rate = kSharpnessRamp);

  double log_s() const { return base_ + rate_ * ramp_; }
  double s() const;
  double thickness() const { return learning_thickness(s()); }
  double base() const { return base_; }
  double ramp() const { return ramp_; }
  int level() const { return level_; }
  double ramp_rate() const { return rate_; }

  /// Sets r_L. Throws std::logic_error when r decreases or leaves [0,1].
  void set_progress(double r);
  void change_level(double h_old, double h_new, int new_level);

 private:
  double base_ = 0.0;
  double ramp_ = 0.0;
  int level_ = 0;
  double rate_ = kSharpnessRamp;
};

}  // namespace svr
