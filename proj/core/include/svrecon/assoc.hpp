#pragma once

#include "svrecon/lattice.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace svr {

// Largest lattice the index will materialize a bitmask for (2^30 bits).
inline constexpr int kMaxAssociationLevel = 10;

/// Association between the conceptual level-L lattice and sparse voxels:
///   A: occupancy bitmask over all G^3 cells (64-bit words),
///   B: sorted indices of the M occupied cells,
///   C: id of the enclosing voxel for each entry of B.
/// Immutable after construction.
class AssociationIndex {
 public:
  AssociationIndex() = default;

  /// Builds the index from an explicit set of disjoint voxels, each with
  /// level <= `level`. Map C holds positions in `voxels`. Throws std::domain_error if a voxel is finer than the
  /// lattice or two voxels cover the same cell.
  static AssociationIndex rebuild(std::span<const Voxel> voxels, int level, int threads = 1);
  static AssociationIndex rebuild(const OctreeState& octree, std::span<const VoxelId> ids,
                                  int level, int threads = 1);
  /// Leaves of `octree` only.
  static AssociationIndex rebuild(const OctreeState& octree, int level, int threads = 1);

  int level() const { return level_; }
  std::uint64_t grid() const { return grid_; }
  std::size_t occupied_count() const { return table_b_.size(); }
  bool empty() const { return table_b_.empty(); }

  bool occupied(CellIndex cell) const {
    return (bitmask_a_[cell >> 6] >> (cell & 63)) & 1u;
  }

  /// Covering voxel of `cell`, or nullopt when unoccupied. One bitmask word
  /// read, then a binary search of B. Throws std::domain_error out of range.
  std::optional<VoxelId> lookup(CellIndex cell) const;

  std::span<const std::uint64_t> bitmask() const { return bitmask_a_; }
  std::span<const CellIndex> cells() const { return table_b_; }
  std::span<const VoxelId> voxel_map() const { return map_c_; }

  /// Bytes held by B and C (everything that scales with occupancy).
  std::size_t table_bytes() const {
    return table_b_.size() * sizeof(CellIndex) + map_c_.size() * sizeof(VoxelId);
  }

  friend bool operator==(const AssociationIndex&, const AssociationIndex&) = default;

 private:
  static AssociationIndex build(std::span<const Voxel> voxels, std::span<const VoxelId> ids, int level, int threads);

  int level_ = 0;
  std::uint64_t grid_ = 1;
  std::vector<std::uint64_t> bitmask_a_;
  std::vector<CellIndex> table_b_;
  std::vector<VoxelId> map_c_;
};

inline std::optional<VoxelId> nvs_lookup(const AssociationIndex& index, CellIndex cell) {
  return index.lookup(cell);
}

struct FaceNeighbors {
  std::array<CellIndex, 6> cells{};
  int count = 0;

  const CellIndex* begin() const { return cells.data(); }
  const CellIndex* end() const { return cells.data() + count; }
};

/// In-lattice face neighbors of `cell`, in the order -x, +x, -y, +y, -z, +z.
FaceNeighbors face_neighbors(DenseCoord cell, std::uint64_t grid);

}  // namespace svr
