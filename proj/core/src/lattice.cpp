#include "svrecon/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace svr {

double SceneBounds::cell_size(int level) const { return std::ldexp(edge, -level); }

bool SceneBounds::contains(const Vec3& p) const {
  for (int a = 0; a < 3; ++a) {
    if (!(p[a] >= x_min[a] && p[a] <= x_min[a] + edge)) return false;
  }
  return true;
}

void SceneBounds::validate() const {
  if (!(edge > 0.0) || !std::isfinite(edge)) {
    throw std::invalid_argument("scene bounds: edge must be positive and finite");
  }
  if (!x_min.allFinite()) throw std::invalid_argument("scene bounds: x_min must be finite");
}

CellIndex linear_index(DenseCoord c, std::uint64_t grid) {
  if (c.i >= grid || c.j >= grid || c.k >= grid) {
    throw std::domain_error("linear_index: coordinate (" + std::to_string(c.i) + "," +
                            std::to_string(c.j) + "," + std::to_string(c.k) +
                            ") outside lattice of size " + std::to_string(grid));
  }
  return (CellIndex{c.i} * grid + c.j) * grid + c.k;
}

DenseCoord inverse_index(CellIndex index, std::uint64_t grid) {
  if (index >= grid * grid * grid) throw std::domain_error("inverse_index: index outside lattice");
  const auto k = static_cast<std::uint32_t>(index % grid);
  index /= grid;
  const auto j = static_cast<std::uint32_t>(index % grid);
  const auto i = static_cast<std::uint32_t>(index / grid);
  return {i, j, k};
}

Vec3 world_from_dense(const Vec3& dense, int level, const SceneBounds& bounds) {
  const double h = bounds.cell_size(level);
  return bounds.x_min + dense * h;
}

Vec3 world_from_dense(DenseCoord c, int level, const SceneBounds& bounds) {
  return world_from_dense(Vec3(c.i, c.j, c.k), level, bounds);
}

Vec3 Voxel::corner_position(int c, const SceneBounds& b) const {
  const auto o = corner_offset(c);
  return world_from_dense(Vec3(double(anchor.i) + o[0], double(anchor.j) + o[1], double(anchor.k) + o[2]),
                          level, b);
}

Vec3 Voxel::center(const SceneBounds& b) const {
  return world_from_dense(Vec3(anchor.i + 0.5, anchor.j + 0.5, anchor.k + 0.5), level, b);
}

bool Voxel::encloses(int other_level, DenseCoord a) const {
  if (other_level < level) return false;
  const int shift = other_level - level;
  return (a.i >> shift) == anchor.i && (a.j >> shift) == anchor.j && (a.k >> shift) == anchor.k;
}

void CoveredCells::iterator::update() {
  const std::uint64_t s = span_;
  const auto dk = static_cast<std::uint32_t>(pos_ % s);
  const auto dj = static_cast<std::uint32_t>((pos_ / s) % s);
  const auto di = static_cast<std::uint32_t>(pos_ / (s * s));
  current_ = {base_.i + di, base_.j + dj, base_.k + dk};
}

CoveredCells cells_covered(const Voxel& v, int target_level) {
  if (target_level < v.level) {
    throw std::domain_error("cells_covered: target level " + std::to_string(target_level) +
                            " is coarser than voxel level " + std::to_string(v.level));
  }
  const int shift = target_level - v.level;
  if (shift >= 32) throw std::domain_error("cells_covered: level gap too large");
  const DenseCoord base{v.anchor.i << shift, v.anchor.j << shift, v.anchor.k << shift};
  return {base, std::uint32_t{1} << shift};
}

std::uint64_t pack_voxel_key(int level, DenseCoord a) {
  return (std::uint64_t(level) << 48) | (std::uint64_t(a.i) << 32) | (std::uint64_t(a.j) << 16) |
         std::uint64_t(a.k);
}

OctreeState::OctreeState(const SceneBounds& bounds, std::vector<Voxel> voxels, int max_level)
    : bounds_(bounds), max_level_(max_level), voxels_(std::move(voxels)) {
  bounds_.validate();
  if (max_level_ < 1 || max_level_ > kMaxSupportedLevel) {
    throw std::invalid_argument("octree: max level must be in [1, " +
                                std::to_string(kMaxSupportedLevel) + "]");
  }
  const std::size_t n = voxels_.size();
  keys_.reserve(n);
  for (std::size_t id = 0; id < n; ++id) {
    Voxel& v = voxels_[id];
    v.id = static_cast<VoxelId>(id);
    if (v.level < 1 || v.level > max_level_) {
      throw std::invalid_argument("octree: voxel " + std::to_string(id) + " has level " +
                                  std::to_string(v.level) + " outside [1, " +
                                  std::to_string(max_level_) + "]");
    }
    const std::uint32_t g = std::uint32_t{1} << v.level;
    if (v.anchor.i >= g || v.anchor.j >= g || v.anchor.k >= g) {
      throw std::invalid_argument("octree: voxel " + std::to_string(id) + " anchor outside its level");
    }
    for (double f : v.geo) {
      if (!std::isfinite(f)) throw std::invalid_argument("octree: non-finite geo on voxel " + std::to_string(id));
    }
    keys_.emplace_back(pack_voxel_key(v.level, v.anchor), v.id);
  }
  std::sort(keys_.begin(), keys_.end());
  for (std::size_t i = 1; i < keys_.size(); ++i) {
    if (keys_[i].first == keys_[i - 1].first) {
      throw std::invalid_argument("octree: duplicate voxel at id " + std::to_string(keys_[i].second));
    }
  }

  parent_.assign(n, kNoVoxel);
  std::array<VoxelId, 8> none;
  none.fill(kNoVoxel);
  children_.assign(n, none);

  for (const Voxel& v : voxels_) {
    if (v.level == 1) continue;
    const DenseCoord pa{v.anchor.i >> 1, v.anchor.j >> 1, v.anchor.k >> 1};
    const VoxelId p = find(v.level - 1, pa);
    if (p != kNoVoxel) {
      parent_[v.id] = p;
      const int c = corner_index(v.anchor.i & 1, v.anchor.j & 1, v.anchor.k & 1);
      children_[p][c] = v.id;
    }
    // Any coarser ancestor without a direct parent link means two leaves overlap.
    if (p == kNoVoxel) {
      for (int l = v.level - 2; l >= 1; --l) {
        const int s = v.level - l;
        if (find(l, {v.anchor.i >> s, v.anchor.j >> s, v.anchor.k >> s}) != kNoVoxel) {
          throw std::invalid_argument("octree: voxel " + std::to_string(v.id) +
                                      " overlaps a coarser voxel with no parent chain");
        }
      }
    }
  }
  for (std::size_t id = 0; id < n; ++id) {
    const auto& ch = children_[id];
    const bool any = std::any_of(ch.begin(), ch.end(), [](VoxelId c) { return c != kNoVoxel; });
    const bool all = std::all_of(ch.begin(), ch.end(), [](VoxelId c) { return c != kNoVoxel; });
    if (any && !all) {
      throw std::invalid_argument("octree: retained parent " + std::to_string(id) +
                                  " is missing children");
    }
  }
}

OctreeState OctreeState::dense(const SceneBounds& bounds, int level, int max_level) {
  if (level < 1 || level > 8) throw std::invalid_argument("dense octree: level must be in [1, 8]");
  const std::uint32_t g = std::uint32_t{1} << level;
  std::vector<Voxel> voxels;
  voxels.reserve(std::size_t{g} * g * g);
  for (std::uint32_t i = 0; i < g; ++i)
    for (std::uint32_t j = 0; j < g; ++j)
      for (std::uint32_t k = 0; k < g; ++k) {
        Voxel v;
        v.level = level;
        v.anchor = {i, j, k};
        voxels.push_back(v);
      }
  return OctreeState(bounds, std::move(voxels), max_level);
}

std::vector<VoxelId> OctreeState::leaves() const {
  std::vector<VoxelId> out;
  out.reserve(voxels_.size());
  for (std::size_t id = 0; id < voxels_.size(); ++id) {
    if (is_leaf(static_cast<VoxelId>(id))) out.push_back(static_cast<VoxelId>(id));
  }
  return out;
}

std::size_t OctreeState::leaf_count() const {
  std::size_t n = 0;
  for (std::size_t id = 0; id < voxels_.size(); ++id) n += is_leaf(static_cast<VoxelId>(id)) ? 1 : 0;
  return n;
}

int OctreeState::finest_level() const {
  int l = 0;
  for (std::size_t id = 0; id < voxels_.size(); ++id) {
    if (is_leaf(static_cast<VoxelId>(id))) l = std::max(l, voxels_[id].level);
  }
  return l;
}

double OctreeState::leaf_volume() const {
  double vol = 0.0;
  for (std::size_t id = 0; id < voxels_.size(); ++id) {
    if (!is_leaf(static_cast<VoxelId>(id))) continue;
    const double h = bounds_.cell_size(voxels_[id].level);
    vol += h * h * h;
  }
  return vol;
}

VoxelId OctreeState::find(int level, DenseCoord anchor) const {
  const std::uint64_t key = pack_voxel_key(level, anchor);
  auto it = std::lower_bound(keys_.begin(), keys_.end(), std::make_pair(key, VoxelId{0}));
  if (it != keys_.end() && it->first == key) return it->second;
  return kNoVoxel;
}

bool operator==(const OctreeState& a, const OctreeState& b) {
  if (a.size() != b.size() || a.max_level_ != b.max_level_) return false;
  if (a.bounds_.edge != b.bounds_.edge || a.bounds_.x_min != b.bounds_.x_min) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Voxel& u = a.voxels_[i];
    const Voxel& v = b.voxels_[i];
    if (u.level != v.level || u.anchor != v.anchor || u.geo != v.geo || u.color != v.color) return false;
  }
  return true;
}

}  // namespace svr
