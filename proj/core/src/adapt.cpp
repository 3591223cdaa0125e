#include "svrecon/adapt.hpp"

#include "svrecon/field.hpp"
#include "svrecon/render.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace svr {

bool prune_predicate(const Voxel& v, const SceneBounds& bounds, double thickness, double kappa) {
  const auto [lo, hi] = std::minmax_element(v.geo.begin(), v.geo.end());
  const bool uniform = *lo > 0.0 || *hi < 0.0;
  if (!uniform) return false;
  double min_abs = std::abs(v.geo[0]);
  for (double g : v.geo) min_abs = std::min(min_abs, std::abs(g));
  return min_abs > 0.5 * thickness + kappa * v.size(bounds);
}

namespace {

Remap make_remap(std::size_t old_size, const std::vector<VoxelId>& new_to_old) {
  Remap r;
  r.new_to_old = new_to_old;
  r.old_to_new.assign(old_size, kNoVoxel);
  for (std::size_t n = 0; n < new_to_old.size(); ++n) {
    if (new_to_old[n] != kNoVoxel) r.old_to_new[new_to_old[n]] = static_cast<VoxelId>(n);
  }
  return r;
}

}  // namespace

PruneResult prune(const OctreeState& octree, double s, const PruneConfig& config) {
  if (!(s > 0.0)) throw std::invalid_argument("prune: sharpness must be positive");
  const double ell = learning_thickness(s);
  const std::size_t n = octree.size();

  // Bottom-up: a subtree is removable when every voxel in it qualifies.
  std::vector<VoxelId> by_level(n);
  std::iota(by_level.begin(), by_level.end(), 0u);
  std::stable_sort(by_level.begin(), by_level.end(),
                   [&](VoxelId a, VoxelId b) { return octree[a].level > octree[b].level; });
  std::vector<std::uint8_t> removable(n, 0);
  for (VoxelId id : by_level) {
    bool ok = prune_predicate(octree[id], octree.bounds(), ell, config.kappa);
    if (ok && !octree.is_leaf(id)) {
      for (VoxelId c : octree.children(id)) ok = ok && removable[c];
    }
    removable[id] = ok;
  }

  std::vector<std::uint8_t> removed(n, 0);
  std::vector<VoxelId> stack;
  for (VoxelId id = 0; id < n; ++id) {
    if (!removable[id] || octree.parent(id) != kNoVoxel) continue;
    stack.push_back(id);
    while (!stack.empty()) {
      const VoxelId cur = stack.back();
      stack.pop_back();
      removed[cur] = 1;
      if (!octree.is_leaf(cur))
        for (VoxelId c : octree.children(cur)) stack.push_back(c);
    }
  }

  PruneResult result;
  std::vector<Voxel> kept;
  std::vector<VoxelId> new_to_old;
  kept.reserve(n);
  for (VoxelId id = 0; id < n; ++id) {
    if (removed[id]) {
      result.removed.push_back(id);
      continue;
    }
    kept.push_back(octree[id]);
    new_to_old.push_back(id);
  }
  result.octree = OctreeState(octree.bounds(), std::move(kept), octree.max_level());
  result.remap = make_remap(n, new_to_old);
  return result;
}

bool split_predicate(const Voxel& v, double thickness) {
  const auto [lo, hi] = std::minmax_element(v.geo.begin(), v.geo.end());
  if (*lo < 0.0 && *hi > 0.0) return true;
  for (double g : v.geo)
    if (std::abs(g) < 0.5 * thickness) return true;
  return false;
}

std::array<Voxel, 8> split_voxel(const Voxel& parent) {
  std::array<Voxel, 8> kids;
  for (int c = 0; c < 8; ++c) {
    const auto o = corner_offset(c);
    Voxel& k = kids[c];
    k.level = parent.level + 1;
    k.anchor = {parent.anchor.i * 2 + o[0], parent.anchor.j * 2 + o[1], parent.anchor.k * 2 + o[2]};
    k.color = parent.color;
    for (int kc = 0; kc < 8; ++kc) {
      const auto ko = corner_offset(kc);
      const Vec3 q(0.5 * (o[0] + ko[0]), 0.5 * (o[1] + ko[1]), 0.5 * (o[2] + ko[2]));
      k.geo[kc] = trilinear(parent.geo, q);
    }
  }
  return kids;
}

SubdivideResult subdivide(const OctreeState& octree, double s, const SubdivideConfig& config,
                          std::span<const double> stats) {
  if (!(s > 0.0)) throw std::invalid_argument("subdivide: sharpness must be positive");
  if (!(config.top_fraction >= 0.0 && config.top_fraction <= 1.0)) {
    throw std::invalid_argument("subdivide: top fraction outside [0,1]");
  }
  const double ell = learning_thickness(s);
  const std::size_t n = octree.size();
  SubdivideResult result;

  std::vector<std::uint8_t> split(n, 0);
  std::vector<VoxelId> gated;
  for (VoxelId id = 0; id < n; ++id) {
    const Voxel& v = octree[id];
    if (!octree.is_leaf(id) || v.level >= config.target_level) continue;
    if (!split_predicate(v, ell)) continue;
    if (v.level >= octree.max_level()) {
      ++result.skipped_at_max;
      continue;
    }
    if (v.level >= config.l_cap) {
      gated.push_back(id);
    } else {
      split[id] = 1;
    }
  }
  if (!gated.empty()) {
    if (stats.size() != n) throw std::invalid_argument("subdivide: loss statistics required past l_cap");
    std::stable_sort(gated.begin(), gated.end(), [&](VoxelId a, VoxelId b) { return stats[a] > stats[b]; });
    const auto take = static_cast<std::size_t>(
        std::ceil(config.top_fraction * static_cast<double>(gated.size()) - 1e-9));
    for (std::size_t m = 0; m < std::min(take, gated.size()); ++m) split[gated[m]] = 1;
  }

  std::vector<Voxel> out;
  std::vector<VoxelId> new_to_old;
  out.reserve(n);
  for (VoxelId id = 0; id < n; ++id) {
    if (split[id]) result.split.push_back(id);
    if (split[id] && octree[id].level < config.l_cap) continue;
    out.push_back(octree[id]);
    new_to_old.push_back(id);
  }
  for (VoxelId id : result.split) {
    for (const Voxel& k : split_voxel(octree[id])) {
      out.push_back(k);
      new_to_old.push_back(kNoVoxel);
    }
  }
  result.octree = OctreeState(octree.bounds(), std::move(out), octree.max_level());
  result.remap = make_remap(n, new_to_old);
  return result;
}

namespace {

VoxelId ancestor_at(const OctreeState& octree, VoxelId id, int level) {
  while (id != kNoVoxel && octree[id].level > level) id = octree.parent(id);
  if (id == kNoVoxel || octree[id].level != level) return kNoVoxel;
  return id;
}

}  // namespace

Routing route_regularizers(const OctreeState& octree, int l_cap) {
  Routing r;
  for (const Voxel& v : octree.voxels()) {
    const bool leaf = octree.is_leaf(v.id);
    if ((leaf && v.level <= l_cap) || (!leaf && v.level == l_cap)) {
      r.lattice.push_back(v.id);
      r.lattice_level = std::max(r.lattice_level, v.level);
    }
    if (leaf && v.level > l_cap && ancestor_at(octree, v.id, l_cap) == kNoVoxel) {
      throw std::logic_error("route_regularizers: voxel finer than l_cap has no l_cap ancestor");
    }
    if (v.level >= l_cap) r.local.push_back(v.id);
  }
  return r;
}

void prolongate_gradients(const OctreeState& octree, int l_cap, const GradBuffer& lattice_grads,
                          GradBuffer& out) {
  for (const Voxel& v : octree.voxels()) {
    if (v.level <= l_cap) continue;
    const VoxelId a = ancestor_at(octree, v.id, l_cap);
    if (a == kNoVoxel) throw std::logic_error("prolongate: missing l_cap ancestor");
    const auto& ga = lattice_grads.geo[a];
    const DenseCoord& base = octree[a].anchor;
    const double scale = std::ldexp(1.0, -(v.level - l_cap));
    for (int c = 0; c < 8; ++c) {
      const auto o = corner_offset(c);
      const Vec3 q((v.anchor.i + o[0]) * scale - base.i, (v.anchor.j + o[1]) * scale - base.j,
                   (v.anchor.k + o[2]) * scale - base.k);
      const CornerWeights w = trilinear_weights(q);
      double g = 0.0;
      for (int pc = 0; pc < 8; ++pc) g += w[pc] * ga[pc];
      out.geo[v.id][c] += g;
    }
  }
}

}  // namespace svr
