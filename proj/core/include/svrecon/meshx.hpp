#pragma once

#include "svrecon/lattice.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace svr {

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> faces;

  bool empty() const { return faces.empty(); }
  double area() const;
};

/// Node values of a regular grid, k fastest: index (i * ny + j) * nz + k.
struct ScalarGrid {
  Vec3 origin = Vec3::Zero();
  double spacing = 1.0;
  int nx = 0, ny = 0, nz = 0;
  std::vector<double> values;

  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * ny + j) * nz + k;
  }
  /// Samples f at every node.
  static ScalarGrid sample(const Vec3& origin, double spacing, int n, const std::function<double(const Vec3&)>& f);
};

/// Marching cubes over every cell of the grid at iso-value 0. Faces are wound
/// so their normals point toward increasing values.
Mesh marching_cubes_grid(const ScalarGrid& grid);

struct ExtractReport {
  int index_level = 0;
  std::size_t cells = 0;
  bool empty = false;
};

/// Marching cubes on the level-`level` lattice over cells covered by leaves;
/// unoccupied cells are never polygonized. A lattice node takes its value
/// from the first covering leaf among its 8 adjacent cells (the cell it is
/// the min corner of comes first); nodes without one take `outside_value`. Throws std::domain_error when `level`
/// exceeds the finest leaf level + 1 or the association limit.
Mesh marching_cubes(const OctreeState& octree, int level, double outside_value,
                    ExtractReport* report = nullptr);

/// Merges vertices closer than `tolerance`, then drops faces with repeated
/// vertices or area below 1e-12. Unused vertices are removed; order is kept.
void weld(Mesh& mesh, double tolerance);

/// Area-weighted uniform samples on the surface. Throws std::invalid_argument
/// for an empty mesh.
std::vector<Vec3> sample_surface(const Mesh& mesh, std::size_t n, std::uint64_t seed);

/// 0.5 * (mean_a min_b |a-b| + mean_b min_a |a-b|). Throws std::invalid_argument on empty input.
double chamfer(std::span<const Vec3> a, std::span<const Vec3> b);

struct F1Score {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Precision: fraction of pred within d of gt; recall: fraction of gt within d of pred.
F1Score f1_score(std::span<const Vec3> pred, std::span<const Vec3> gt, double threshold);

}  // namespace svr
