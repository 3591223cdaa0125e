#pragma once

#include "svrecon/assoc.hpp"
#include "svrecon/lattice.hpp"

#include <array>
#include <optional>

namespace svr {

using CornerValues = std::array<double, 8>;
using CornerWeights = std::array<double, 8>;

// Gradients at or below this norm have no usable direction.
inline constexpr double kDegenerateGradient = 1e-12;

/// Trilinear weights of the 8 corners at local offset q in [0,1]^3.
CornerWeights trilinear_weights(const Vec3& q);
double trilinear(const CornerValues& geo, const Vec3& q);

struct FieldSample {
  double value = 0.0;
  VoxelId voxel = kNoVoxel;
  Vec3 local = Vec3::Zero();
  CornerWeights weights{};
};

/// Local offset q = (p - v_min) / h_v, clamped to [0,1]^3.
Vec3 local_coords(const Voxel& v, const SceneBounds& bounds, const Vec3& p);

/// Trilinear field of `v` at world point p (clamped into the voxel).
FieldSample sample_voxel(const Voxel& v, const SceneBounds& bounds, const Vec3& p);

/// SDF at world point p through the association lattice. nullopt when the
/// containing cell is unoccupied; std::domain_error when p is out of bounds.
/// Points on a shared face belong to the cell with the larger index.
std::optional<FieldSample> sdf_at(const OctreeState& octree, const AssociationIndex& index,
                                  const Vec3& p);

/// Same query with p given in lattice (dense) coordinates of the index level.
std::optional<FieldSample> sdf_at_dense(const OctreeState& octree, const AssociationIndex& index,
                                        const Vec3& dense);

/// World-space gradient of the trilinear interpolant at the voxel center:
/// component x = (1 / 4h) * sum_{j,k} (f_1jk - f_0jk).
Vec3 grad_center(const CornerValues& geo, double h);
inline Vec3 grad_center(const Voxel& v, const SceneBounds& b) { return grad_center(v.geo, v.size(b)); }

/// d grad_center / d geo_c for each corner c (constant, depends only on h).
std::array<Vec3, 8> grad_center_jacobian(double h);

/// Unit normal at the voxel center; nullopt when |grad| <= kDegenerateGradient.
std::optional<Vec3> normal_at_center(const CornerValues& geo, double h);
inline std::optional<Vec3> normal_at_center(const Voxel& v, const SceneBounds& b) {
  return normal_at_center(v.geo, v.size(b));
}

}  // namespace svr
