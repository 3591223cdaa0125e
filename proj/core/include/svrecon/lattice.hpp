#pragma once

#include <Eigen/Core>

#include <array>
#include <compare>
#include <cstdint>
#include <iosfwd>
#include <iterator>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace svr {

using Vec3 = Eigen::Vector3d;
using VoxelId = std::uint32_t;
using CellIndex = std::uint64_t;

inline constexpr VoxelId kNoVoxel = std::numeric_limits<VoxelId>::max();
inline constexpr int kDefaultMaxLevel = 10;
// Anchors are packed into 16 bits per axis.
inline constexpr int kMaxSupportedLevel = 16;

/// Axis-aligned reconstruction cube [x_min, x_min + edge]^3.
struct SceneBounds {
  Vec3 x_min = Vec3::Zero();
  double edge = 1.0;

  /// World edge length of a lattice cell at `level`, D / 2^level.
  double cell_size(int level) const;
  Vec3 x_max() const { return x_min + Vec3::Constant(edge); }
  bool contains(const Vec3& p) const;
  void validate() const;
};

/// Integer lattice coordinate at an implicit level.
struct DenseCoord {
  std::uint32_t i = 0;
  std::uint32_t j = 0;
  std::uint32_t k = 0;

  friend auto operator<=>(const DenseCoord&, const DenseCoord&) = default;
};

/// i*G^2 + j*G + k. Throws std::domain_error for out-of-range components.
CellIndex linear_index(DenseCoord c, std::uint64_t grid);
DenseCoord inverse_index(CellIndex index, std::uint64_t grid);

/// x_min + dense * (D / 2^level), per axis. `dense` may carry a fractional offset.
Vec3 world_from_dense(const Vec3& dense, int level, const SceneBounds& bounds);
Vec3 world_from_dense(DenseCoord c, int level, const SceneBounds& bounds);

// Corner c of a voxel sits at offset ((c>>2)&1, (c>>1)&1, c&1): z fastest, then y, then x.
constexpr int corner_index(int dx, int dy, int dz) { return (dx << 2) | (dy << 1) | dz; }
constexpr std::array<int, 3> corner_offset(int c) { return {(c >> 2) & 1, (c >> 1) & 1, c & 1}; }

struct Voxel {
  int level = 1;
  DenseCoord anchor{};
  std::array<double, 8> geo{};
  std::array<double, 3> color{};
  VoxelId id = kNoVoxel;

  double size(const SceneBounds& b) const { return b.cell_size(level); }
  Vec3 min_corner(const SceneBounds& b) const { return world_from_dense(anchor, level, b); }
  Vec3 corner_position(int c, const SceneBounds& b) const;
  Vec3 center(const SceneBounds& b) const;
  /// True when `other` lies inside this voxel's block (or is the same block).
  bool encloses(int other_level, DenseCoord other_anchor) const;
};

/// Half-open block of lattice cells covered by a voxel at a finer level.
class CoveredCells {
 public:
  class iterator {
   public:
    using iterator_category = std::forward_iterator_tag;
    using value_type = DenseCoord;
    using difference_type = std::ptrdiff_t;
    using pointer = const DenseCoord*;
    using reference = const DenseCoord&;

    iterator() = default;
    iterator(DenseCoord base, std::uint32_t span, std::uint64_t pos)
        : base_(base), span_(span), pos_(pos) { update(); }

    reference operator*() const { return current_; }
    pointer operator->() const { return &current_; }
    iterator& operator++() {
      ++pos_;
      update();
      return *this;
    }
    iterator operator++(int) {
      iterator tmp = *this;
      ++*this;
      return tmp;
    }
    friend bool operator==(const iterator& a, const iterator& b) { return a.pos_ == b.pos_; }

   private:
    void update();

    DenseCoord base_{};
    std::uint32_t span_ = 1;
    std::uint64_t pos_ = 0;
    DenseCoord current_{};
  };

  CoveredCells(DenseCoord base, std::uint32_t span) : base_(base), span_(span) {}

  iterator begin() const { return {base_, span_, 0}; }
  iterator end() const { return {base_, span_, count()}; }
  std::uint64_t count() const { return std::uint64_t{span_} * span_ * span_; }
  DenseCoord base() const { return base_; }
  std::uint32_t span() const { return span_; }

 private:
  DenseCoord base_;
  std::uint32_t span_;
};

/// Cells of the level-`target_level` lattice covered by `v`, i slowest, k fastest
/// (so linear indices within one row of k are increasing).
CoveredCells cells_covered(const Voxel& v, int target_level);

/// The set of active voxels: leaves that render plus internal parents that are
/// retained past the regularization cap. Structure is fixed at construction;
/// only parameter values (geo, color) are mutable.
class OctreeState {
 public:
  OctreeState() = default;
  /// Derives parent/child links geometrically. Voxel ids are reassigned to
  /// their position in `voxels`. Throws std::invalid_argument on overlapping
  /// leaves, duplicates, incomplete parents, or non-finite parameters.
  OctreeState(const SceneBounds& bounds, std::vector<Voxel> voxels,
              int max_level = kDefaultMaxLevel);

  /// Uniform grid of 8^level voxels with zero geo.
  static OctreeState dense(const SceneBounds& bounds, int level,
                           int max_level = kDefaultMaxLevel);

  const SceneBounds& bounds() const { return bounds_; }
  int max_level() const { return max_level_; }
  std::size_t size() const { return voxels_.size(); }
  bool empty() const { return voxels_.empty(); }

  const Voxel& operator[](VoxelId id) const { return voxels_[id]; }
  std::span<const Voxel> voxels() const { return voxels_; }

  std::array<double, 8>& geo(VoxelId id) { return voxels_[id].geo; }
  std::array<double, 3>& color(VoxelId id) { return voxels_[id].color; }

  bool is_leaf(VoxelId id) const { return children_[id][0] == kNoVoxel; }
  VoxelId parent(VoxelId id) const { return parent_[id]; }
  /// Child ids in corner order, or all kNoVoxel for leaves.
  const std::array<VoxelId, 8>& children(VoxelId id) const { return children_[id]; }

  std::vector<VoxelId> leaves() const;
  std::size_t leaf_count() const;
  /// Finest level among leaf voxels; 0 when empty.
  int finest_level() const;
  /// Volume covered by leaves, in world units.
  double leaf_volume() const;

  /// Id of the voxel with exactly this level and anchor, or kNoVoxel.
  VoxelId find(int level, DenseCoord anchor) const;

  friend bool operator==(const OctreeState& a, const OctreeState& b);

 private:
  SceneBounds bounds_{};
  int max_level_ = kDefaultMaxLevel;
  std::vector<Voxel> voxels_;
  std::vector<VoxelId> parent_;
  std::vector<std::array<VoxelId, 8>> children_;
  std::vector<std::pair<std::uint64_t, VoxelId>> keys_;  // sorted by key
};

std::uint64_t pack_voxel_key(int level, DenseCoord anchor);

// Octree checkpoint: "SVRX", u32 version, 4 f64 bounds, u64 count, then
// per voxel {u8 level, 3 u32 anchor, 8 f32 geo, 3 f32 color}; little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const OctreeState& octree);
void write_checkpoint(const std::string& path, const OctreeState& octree);
OctreeState read_checkpoint(std::istream& in, int max_level = kDefaultMaxLevel);
OctreeState read_checkpoint(const std::string& path, int max_level = kDefaultMaxLevel);

}  // namespace svr
