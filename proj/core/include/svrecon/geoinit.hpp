#pragma once

#include "svrecon/lattice.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <vector>

namespace svr {

using Mat3 = Eigen::Matrix3d;
using Vec2 = Eigen::Vector2d;

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 dir = Vec3::UnitZ();
};

/// Pinhole camera; x_cam = R * x_world + t, pixel = K * x_cam / z.
/// Pixel (u, v) has its center at (u + 0.5, v + 0.5).
struct CameraModel {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  Mat3 K = Mat3::Identity();
  int width = 0;
  int height = 0;

  Vec3 center() const;
  Vec3 to_camera(const Vec3& world) const { return R * world + t; }
  /// Image-plane position of a camera-space point with z > 0.
  Vec2 project_camera(const Vec3& cam) const;
  /// Unit-direction ray through the center of pixel (u, v).
  Ray pixel_ray(int u, int v) const;
  /// Throws std::invalid_argument for a non-rotation R, bad K, or an empty frustum.
  void validate() const;
};

Vec3 camera_center(const Mat3& R, const Vec3& t);

struct Pose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
};

/// One view's H x W grid of points with per-pixel confidence in [0,1].
struct PointMap {
  int width = 0;
  int height = 0;
  std::vector<Vec3> points;
  std::vector<double> confidence;

  const Vec3& at(int u, int v) const { return points[static_cast<std::size_t>(v) * width + u]; }
  double conf(int u, int v) const { return confidence[static_cast<std::size_t>(v) * width + u]; }
};

struct PointMapSet {
  std::vector<PointMap> views;
  /// Poses in the point maps' own (estimated) frame; nullopt when unknown.
  std::vector<std::optional<Pose>> estimated;

  std::size_t point_count() const;
};

struct Similarity7 {
  double scale = 1.0;
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return scale * (R * p) + t; }
  Similarity7 inverse() const;
};

/// Least-squares similarity minimizing sum |s R src_i + t - dst_i|^2 (closed
/// form with reflection correction). Throws std::invalid_argument for fewer
/// than 3 points, mismatched sizes, coincident or collinear sources.
Similarity7 umeyama_align(std::span<const Vec3> src, std::span<const Vec3> dst);

std::vector<Vec3> warp_points(std::span<const Vec3> points, const Similarity7& sim);
PointMapSet warp_point_maps(const PointMapSet& maps, const Similarity7& sim);

struct InitConfig {
  int level = 6;
  double confidence_threshold = 0.1;
  // Subsample pitch as a fraction of the level cell size.
  double subsample_pitch = 0.5;
  // Native pixels per low-resolution carving bin, per axis.
  int bin_factor = 8;
  // Depth margin as a fraction of the level cell size.
  double depth_margin = 0.25;
};

/// Values at the (G+1)^3 corner nodes of a dense level-L grid, k fastest.
struct CornerGrid {
  SceneBounds bounds;
  int level = 6;
  std::vector<double> values;

  std::uint32_t nodes_per_axis() const { return (1u << level) + 1; }
  std::size_t index(std::uint32_t i, std::uint32_t j, std::uint32_t k) const {
    const std::size_t n = nodes_per_axis();
    return (std::size_t{i} * n + j) * n + k;
  }
  Vec3 position(std::uint32_t i, std::uint32_t j, std::uint32_t k) const {
    return world_from_dense(Vec3(i, j, k), level, bounds);
  }
};

/// Confident points inside the bounds, thinned to one (the most confident)
/// per cell of a grid with the given pitch. Deterministic.
std::vector<Vec3> subsample_points(const PointMapSet& maps, const SceneBounds& bounds,
                                   double pitch, double confidence_threshold);

/// Every corner node gets minus its distance to the nearest point.
/// Throws std::invalid_argument on an empty point set.
CornerGrid init_unsigned(const SceneBounds& bounds, int level, std::span<const Vec3> points,
                         int threads = 1);

struct CarveReport {
  std::size_t total = 0;
  std::size_t flipped_visible = 0;    // in front of the point map in some view
  std::size_t flipped_unseen = 0;     // outside every frustum
  std::size_t remaining_negative = 0;
};

/// Flips corners to positive when they are seen in front of the binned
/// point-map depth in any camera, or fall outside every camera frustum.
CarveReport carve_signs(CornerGrid& grid, std::span<const CameraModel> cameras,
                        std::span<const Vec3> points, const InitConfig& config = {},
                        int threads = 1);

/// Dense octree at the grid level; each voxel copies its 8 corner nodes.
OctreeState octree_from_corner_grid(const CornerGrid& grid, int max_level = kDefaultMaxLevel,
                                    const Vec3& color = Vec3::Constant(0.5));

/// Baseline initialization: |x - cube center| - D/5 at every node.
CornerGrid spherical_init(const SceneBounds& bounds, int level);

struct InitReport {
  Similarity7 alignment;
  bool aligned = false;
  std::size_t input_points = 0;
  std::size_t subsampled_points = 0;
  CarveReport carve;
};

/// Full pipeline: optional alignment on camera centers, subsampling,
/// negative-distance assignment, and sign carving.
OctreeState initialize_from_point_maps(const SceneBounds& bounds, std::span<const CameraModel> cameras,
                                       const PointMapSet& maps, const InitConfig& config,
                                       InitReport* report = nullptr, int threads = 1,
                                       int max_level = kDefaultMaxLevel);

}  // namespace svr
