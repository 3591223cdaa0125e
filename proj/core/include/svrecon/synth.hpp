#pragma once

#include "svrecon/geoinit.hpp"
#include "svrecon/lattice.hpp"
#include "svrecon/meshx.hpp"

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace svr {

enum class ShapeKind { sphere, box, torus };

struct Shape {
  ShapeKind kind = ShapeKind::sphere;
  Vec3 center = Vec3::Zero();
  double radius = 1.0;                             // sphere
  Vec3 half_extent = Vec3::Constant(0.75);         // box
  double major = 1.0;                              // torus, in the xy-plane
  double minor = 0.25;
  Vec3 albedo = Vec3(0.8, 0.6, 0.4);
};

/// "sphere", "box" or "torus" with default parameters; std::invalid_argument otherwise.
Shape make_shape(std::string_view name);

double analytic_sdf(const Shape& shape, const Vec3& p);
/// Unit gradient of the SDF (central differences for the box).
Vec3 analytic_normal(const Shape& shape, const Vec3& p);

struct ShadingConfig {
  Vec3 light_dir = Vec3(0.3, 0.5, 0.8).normalized();  // toward the light
  double ambient = 0.3;
  Vec3 background = Vec3::Zero();
};

/// Everything the oracle knows about one view.
struct ReferenceView {
  int width = 0;
  int height = 0;
  std::vector<Vec3> rgb;
  std::vector<std::uint8_t> mask;
  std::vector<double> depth;  // camera z; 0 on misses
  PointMap pointmap;          // world frame, confidence 1 on hits, 0 on misses
  std::vector<Vec3> normals;  // analytic, zero on misses
};

/// Sphere-traced render to |f| < 1e-6 with Lambertian shading from a fixed light.
ReferenceView render_reference(const Shape& shape, const CameraModel& camera, const ShadingConfig& shading = {});

/// Pinhole camera at `eye` looking at `target` (x right, y down, z forward).
CameraModel look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height, double focal);

/// n cameras evenly spaced on a horizontal circle around `target`, plus one
/// camera at +45 and one at -45 degrees elevation. All at distance `radius`.
std::vector<CameraModel> camera_ring(int n, double radius, const Vec3& target, int width = 128, int height = 128,
                                     double focal = 96.0);

struct SynthConfig {
  Shape shape;
  int views = 16;           // total, including the two elevated views
  int width = 128;
  int height = 128;
  double focal = 96.0;
  double camera_radius = 3.5;
  SceneBounds bounds{Vec3::Constant(-2.0), 4.0};
  bool perturb_poses = false;
  std::uint64_t seed = 1;
  ShadingConfig shading;
};

struct SyntheticScene {
  SceneBounds bounds;
  Shape shape;
  std::vector<CameraModel> cameras;
  std::vector<ReferenceView> views;
  PointMapSet pointmaps;                 // in the estimated frame when perturbed
  std::optional<Similarity7> world_to_estimated;
};

SyntheticScene make_scene(const SynthConfig& config);

/// Points on the analytic surface, area-uniform up to the projection of a
/// fine marching-cubes mesh back onto the surface.
std::vector<Vec3> surface_samples(const Shape& shape, const SceneBounds& bounds, std::size_t n, std::uint64_t seed);

/// Marching cubes of the analytic SDF on a 2^level grid over the bounds.
Mesh analytic_mesh(const Shape& shape, const SceneBounds& bounds, int level);

}  // namespace svr
