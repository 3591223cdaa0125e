#include "svrecon/field.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace svr {

CornerWeights trilinear_weights(const Vec3& q) {
  CornerWeights w;
  for (int c = 0; c < 8; ++c) {
    const auto o = corner_offset(c);
    w[c] = (o[0] ? q.x() : 1.0 - q.x()) * (o[1] ? q.y() : 1.0 - q.y()) * (o[2] ? q.z() : 1.0 - q.z());
  }
  return w;
}

double trilinear(const CornerValues& geo, const Vec3& q) {
  const CornerWeights w = trilinear_weights(q);
  double f = 0.0;
  for (int c = 0; c < 8; ++c) f += w[c] * geo[c];
  return f;
}

Vec3 local_coords(const Voxel& v, const SceneBounds& bounds, const Vec3& p) {
  const Vec3 q = (p - v.min_corner(bounds)) / v.size(bounds);
  return q.cwiseMax(0.0).cwiseMin(1.0);
}

FieldSample sample_voxel(const Voxel& v, const SceneBounds& bounds, const Vec3& p) {
  FieldSample s;
  s.voxel = v.id;
  s.local = local_coords(v, bounds, p);
  s.weights = trilinear_weights(s.local);
  for (int c = 0; c < 8; ++c) s.value += s.weights[c] * v.geo[c];
  return s;
}

std::optional<FieldSample> sdf_at_dense(const OctreeState& octree, const AssociationIndex& index,
                                        const Vec3& dense) {
  const double g = static_cast<double>(index.grid());
  std::uint32_t cell[3];
  for (int a = 0; a < 3; ++a) {
    if (!(dense[a] >= 0.0 && dense[a] <= g)) {
      throw std::domain_error("sdf_at: point outside scene bounds");
    }
    // Closed upper face maps to the last cell.
    cell[a] = static_cast<std::uint32_t>(std::min(std::floor(dense[a]), g - 1.0));
  }
  const auto id = index.lookup(linear_index({cell[0], cell[1], cell[2]}, index.grid()));
  if (!id) return std::nullopt;
  const Voxel& v = octree[*id];
  const double span = std::ldexp(1.0, index.level() - v.level);
  const Vec3 base(double(v.anchor.i) * span, double(v.anchor.j) * span, double(v.anchor.k) * span);
  FieldSample s;
  s.voxel = *id;
  s.local = ((dense - base) / span).cwiseMax(0.0).cwiseMin(1.0);
  s.weights = trilinear_weights(s.local);
  for (int c = 0; c < 8; ++c) s.value += s.weights[c] * v.geo[c];
  return s;
}

std::optional<FieldSample> sdf_at(const OctreeState& octree, const AssociationIndex& index,
                                  const Vec3& p) {
  const SceneBounds& b = octree.bounds();
  if (!b.contains(p)) throw std::domain_error("sdf_at: point outside scene bounds");
  const Vec3 dense = (p - b.x_min) / b.cell_size(index.level());
  return sdf_at_dense(octree, index, dense);
}

Vec3 grad_center(const CornerValues& f, double h) {
  Vec3 hi = Vec3::Zero(), lo = Vec3::Zero();
  for (int c = 0; c < 8; ++c) {
    const auto o = corner_offset(c);
    for (int a = 0; a < 3; ++a) (o[a] ? hi[a] : lo[a]) += f[c];
  }
  return (hi - lo) / (4.0 * h);
}

std::array<Vec3, 8> grad_center_jacobian(double h) {
  std::array<Vec3, 8> jac;
  for (int c = 0; c < 8; ++c) {
    const auto o = corner_offset(c);
    for (int a = 0; a < 3; ++a) jac[c][a] = (o[a] ? 1.0 : -1.0) / (4.0 * h);
  }
  return jac;
}

std::optional<Vec3> normal_at_center(const CornerValues& geo, double h) {
  const Vec3 g = grad_center(geo, h);
  const double n = g.norm();
  if (!(n > kDegenerateGradient)) return std::nullopt;
  return g / n;
}

}  // namespace svr
