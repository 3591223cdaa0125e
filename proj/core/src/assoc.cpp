#include "svrecon/assoc.hpp"

#include "svrecon/parallel.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace svr {

AssociationIndex AssociationIndex::rebuild(std::span<const Voxel> voxels, int level, int threads) {
  std::vector<VoxelId> ids(voxels.size());
  std::iota(ids.begin(), ids.end(), VoxelId{0});
  return build(voxels, ids, level, threads);
}

AssociationIndex AssociationIndex::build(std::span<const Voxel> voxels, std::span<const VoxelId> ids, int level,
                                         int threads) {
  if (level < 0 || level > kMaxAssociationLevel) {
    throw std::domain_error("association: lattice level " + std::to_string(level) +
                            " outside [0, " + std::to_string(kMaxAssociationLevel) + "]");
  }
  AssociationIndex idx;
  idx.level_ = level;
  idx.grid_ = std::uint64_t{1} << level;
  const std::uint64_t cells = idx.grid_ * idx.grid_ * idx.grid_;
  idx.bitmask_a_.assign((cells + 63) / 64, 0);

  // Offsets of each voxel's run in the unsorted buffer.
  std::vector<std::uint64_t> offset(voxels.size() + 1, 0);
  for (std::size_t n = 0; n < voxels.size(); ++n) {
    const Voxel& v = voxels[n];
    if (v.level > level) {
      throw std::domain_error("association: voxel " + std::to_string(ids[n]) + " at level " +
                              std::to_string(v.level) + " is finer than lattice level " +
                              std::to_string(level));
    }
    const std::uint64_t span = std::uint64_t{1} << (level - v.level);
    offset[n + 1] = offset[n] + span * span * span;
  }
  const std::uint64_t m = offset.back();
  if (m > cells) throw std::domain_error("association: voxels overlap");

  std::vector<CellIndex> unsorted_b(m);
  std::vector<VoxelId> unsorted_c(m);
  constexpr std::size_t kBlock = 256;
  const std::size_t blocks = (voxels.size() + kBlock - 1) / kBlock;
  parallel_for_blocks(blocks, threads, [&](std::size_t b) {
    const std::size_t end = std::min(voxels.size(), (b + 1) * kBlock);
    for (std::size_t n = b * kBlock; n < end; ++n) {
      std::uint64_t out = offset[n];
      for (const DenseCoord& c : cells_covered(voxels[n], level)) {
        unsorted_b[out] = linear_index(c, idx.grid_);
        unsorted_c[out] = ids[n];
        ++out;
      }
    }
  });

  std::vector<std::uint64_t> perm(m);
  std::iota(perm.begin(), perm.end(), std::uint64_t{0});
  std::sort(perm.begin(), perm.end(),
            [&](std::uint64_t a, std::uint64_t b) { return unsorted_b[a] < unsorted_b[b]; });

  idx.table_b_.resize(m);
  idx.map_c_.resize(m);
  for (std::uint64_t n = 0; n < m; ++n) {
    idx.table_b_[n] = unsorted_b[perm[n]];
    idx.map_c_[n] = unsorted_c[perm[n]];
    if (n > 0 && idx.table_b_[n] == idx.table_b_[n - 1]) {
      throw std::domain_error("association: voxels " + std::to_string(idx.map_c_[n - 1]) + " and " +
                              std::to_string(idx.map_c_[n]) + " overlap");
    }
    const CellIndex cell = idx.table_b_[n];
    idx.bitmask_a_[cell >> 6] |= std::uint64_t{1} << (cell & 63);
  }
  return idx;
}

AssociationIndex AssociationIndex::rebuild(const OctreeState& octree, std::span<const VoxelId> ids,
                                           int level, int threads) {
  std::vector<Voxel> chosen;
  chosen.reserve(ids.size());
  for (VoxelId id : ids) chosen.push_back(octree[id]);
  return build(chosen, ids, level, threads);
}

AssociationIndex AssociationIndex::rebuild(const OctreeState& octree, int level, int threads) {
  const auto leaves = octree.leaves();
  return rebuild(octree, leaves, level, threads);
}

std::optional<VoxelId> AssociationIndex::lookup(CellIndex cell) const {
  if (cell >= grid_ * grid_ * grid_) {
    throw std::domain_error("nvs_lookup: cell " + std::to_string(cell) + " outside lattice");
  }
  if (!occupied(cell)) return std::nullopt;
  const auto it = std::lower_bound(table_b_.begin(), table_b_.end(), cell);
  return map_c_[static_cast<std::size_t>(it - table_b_.begin())];
}

FaceNeighbors face_neighbors(DenseCoord c, std::uint64_t grid) {
  FaceNeighbors out;
  const std::uint64_t coords[3] = {c.i, c.j, c.k};
  for (int axis = 0; axis < 3; ++axis) {
    for (int dir : {-1, +1}) {
      const std::int64_t moved = std::int64_t(coords[axis]) + dir;
      if (moved < 0 || moved >= std::int64_t(grid)) continue;
      DenseCoord n = c;
      (axis == 0 ? n.i : axis == 1 ? n.j : n.k) = static_cast<std::uint32_t>(moved);
      out.cells[out.count++] = linear_index(n, grid);
    }
  }
  return out;
}

}  // namespace svr
