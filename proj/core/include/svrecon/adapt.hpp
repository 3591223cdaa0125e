#pragma once

#include "svrecon/lattice.hpp"
#include "svrecon/losses.hpp"

#include <span>
#include <vector>

namespace svr {

/// Id correspondence across a structural change.
struct Remap {
  std::vector<VoxelId> old_to_new;  // kNoVoxel when removed
  std::vector<VoxelId> new_to_old;  // kNoVoxel when created
};

struct PruneConfig {
  double kappa = 1.0;  // margin in units of h_v
};

/// Prune test for one voxel: no sign change over the 8 corners and every
/// |geo| > l / 2 + kappa * h_v.
bool prune_predicate(const Voxel& v, const SceneBounds& bounds, double thickness, double kappa);

struct PruneResult {
  OctreeState octree;
  Remap remap;
  std::vector<VoxelId> removed;  // old ids
};

/// Removes parentless leaves meeting the predicate. Below a retained parent,
/// a group is only removed together with the parent, when every voxel of
/// the parent's subtree qualifies.
PruneResult prune(const OctreeState& octree, double s, const PruneConfig& config = {});

struct SubdivideConfig {
  int target_level = 7;   // no split produces voxels finer than this
  int l_cap = 9;          // parents at or past this level are retained
  double top_fraction = 0.3;
};

/// Split eligibility: leaf below the target level with a sign change or a
/// corner inside the band |geo| < l / 2.
bool split_predicate(const Voxel& v, double thickness);

struct SubdivideResult {
  OctreeState octree;
  Remap remap;
  std::vector<VoxelId> split;     // old ids
  std::size_t skipped_at_max = 0;  // eligible but at the octree's max level
};

/// Splits eligible leaves into 8 children carrying the parent's trilinear
/// field. Leaves at level >= l_cap are gated by `stats` (larger splits
/// first, top fraction of those eligible). `stats` may be empty when no
/// eligible voxel reaches l_cap.
SubdivideResult subdivide(const OctreeState& octree, double s, const SubdivideConfig& config,
                          std::span<const double> stats = {});

/// Children of `parent` with trilinearly interpolated corners, in corner order.
std::array<Voxel, 8> split_voxel(const Voxel& parent);

struct Routing {
  int lattice_level = 0;
  std::vector<VoxelId> lattice;  // leaves at level <= l_cap plus l_cap ancestors
  std::vector<VoxelId> local;    // every voxel at level >= l_cap
};

/// Throws std::logic_error when a leaf finer than l_cap has no l_cap ancestor.
Routing route_regularizers(const OctreeState& octree, int l_cap);

/// Adds to `out` the lattice gradients of each l_cap ancestor, prolongated to
/// every descendant corner with the descendant's fixed trilinear weights
/// inside the ancestor.
void prolongate_gradients(const OctreeState& octree, int l_cap, const GradBuffer& lattice_grads,
                          GradBuffer& out);

}  // namespace svr
