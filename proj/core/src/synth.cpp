#include "svrecon/synth.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace svr {

Shape make_shape(std::string_view name) {
  Shape s;
  if (name == "sphere") {
    s.kind = ShapeKind::sphere;
  } else if (name == "box") {
    s.kind = ShapeKind::box;
  } else if (name == "torus") {
    s.kind = ShapeKind::torus;
  } else {
    throw std::invalid_argument("unknown shape: " + std::string(name));
  }
  return s;
}

double analytic_sdf(const Shape& shape, const Vec3& p) {
  const Vec3 x = p - shape.center;
  switch (shape.kind) {
    case ShapeKind::sphere:
      return x.norm() - shape.radius;
    case ShapeKind::box: {
      const Vec3 q = x.cwiseAbs() - shape.half_extent;
      return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
    }
    case ShapeKind::torus: {
      const double ring = std::hypot(x.x(), x.y()) - shape.major;
      return std::hypot(ring, x.z()) - shape.minor;
    }
  }
  return 0.0;
}

Vec3 analytic_normal(const Shape& shape, const Vec3& p) {
  const Vec3 x = p - shape.center;
  Vec3 g;
  switch (shape.kind) {
    case ShapeKind::sphere:
      g = x;
      break;
    case ShapeKind::torus: {
      const double rho = std::hypot(x.x(), x.y());
      const Vec3 core = rho > 0.0 ? Vec3(x.x() / rho * shape.major, x.y() / rho * shape.major, 0.0)
                                  : Vec3(shape.major, 0.0, 0.0);
      g = x - core;
      break;
    }
    case ShapeKind::box: {
      const double e = 1e-6;
      for (int a = 0; a < 3; ++a) {
        Vec3 d = Vec3::Zero();
        d[a] = e;
        g[a] = (analytic_sdf(shape, p + d) - analytic_sdf(shape, p - d)) / (2.0 * e);
      }
      break;
    }
  }
  const double n = g.norm();
  return n > 0.0 ? Vec3(g / n) : Vec3(Vec3::UnitZ());
}

CameraModel look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height, double focal) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-9) right = forward.cross(Vec3::UnitY());
  right.normalize();
  const Vec3 down = forward.cross(right);
  CameraModel cam;
  cam.R.row(0) = right.transpose();
  cam.R.row(1) = down.transpose();
  cam.R.row(2) = forward.transpose();
  cam.t = -cam.R * eye;
  cam.K << focal, 0.0, 0.5 * width, 0.0, focal, 0.5 * height, 0.0, 0.0, 1.0;
  cam.width = width;
  cam.height = height;
  return cam;
}

std::vector<CameraModel> camera_ring(int n, double radius, const Vec3& target, int width, int height, double focal) {
  if (n < 2) throw std::invalid_argument("camera_ring: need at least 2 views");
  std::vector<CameraModel> cams;
  const Vec3 up = Vec3::UnitZ();
  for (int i = 0; i < n; ++i) {
    const double phi = 2.0 * std::numbers::pi * i / n;
    const Vec3 eye = target + radius * Vec3(std::cos(phi), std::sin(phi), 0.0);
    cams.push_back(look_at(eye, target, up, width, height, focal));
  }
  const double el = std::numbers::pi / 4.0;
  for (int s : {1, -1}) {
    const double phi = s > 0 ? std::numbers::pi / n : std::numbers::pi + std::numbers::pi / n;
    const Vec3 eye = target + radius * Vec3(std::cos(el) * std::cos(phi), std::cos(el) * std::sin(phi), s * std::sin(el));
    cams.push_back(look_at(eye, target, up, width, height, focal));
  }
  return cams;
}

ReferenceView render_reference(const Shape& shape, const CameraModel& camera, const ShadingConfig& shading) {
  ReferenceView view;
  view.width = camera.width;
  view.height = camera.height;
  const std::size_t n = static_cast<std::size_t>(camera.width) * camera.height;
  view.rgb.assign(n, shading.background);
  view.mask.assign(n, 0);
  view.depth.assign(n, 0.0);
  view.normals.assign(n, Vec3::Zero());
  view.pointmap.width = camera.width;
  view.pointmap.height = camera.height;
  view.pointmap.points.assign(n, Vec3::Zero());
  view.pointmap.confidence.assign(n, 0.0);

  constexpr int kMaxSteps = 1000;
  constexpr double kHit = 1e-6;
  constexpr double kFar = 100.0;
  for (int v = 0; v < camera.height; ++v) {
    for (int u = 0; u < camera.width; ++u) {
      const Ray ray = camera.pixel_ray(u, v);
      double t = 0.0;
      bool hit = false;
      for (int step = 0; step < kMaxSteps && t < kFar; ++step) {
        const double f = analytic_sdf(shape, ray.origin + t * ray.dir);
        if (std::abs(f) < kHit) {
          hit = true;
          break;
        }
        t += f;
      }
      if (!hit) continue;
      const std::size_t idx = static_cast<std::size_t>(v) * camera.width + u;
      const Vec3 p = ray.origin + t * ray.dir;
      const Vec3 nrm = analytic_normal(shape, p);
      const double lambert = std::max(0.0, nrm.dot(shading.light_dir));
      view.rgb[idx] = shape.albedo * (shading.ambient + (1.0 - shading.ambient) * lambert);
      view.mask[idx] = 1;
      view.depth[idx] = camera.to_camera(p).z();
      view.normals[idx] = nrm;
      view.pointmap.points[idx] = p;
      view.pointmap.confidence[idx] = 1.0;
    }
  }
  return view;
}

namespace {

Similarity7 random_similarity(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> scale(0.5, 2.0);
  Eigen::Quaterniond q(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
  q.normalize();
  Similarity7 s;
  s.scale = scale(rng);
  s.R = q.toRotationMatrix();
  s.t = Vec3(gauss(rng), gauss(rng), gauss(rng));
  return s;
}

}  // namespace

SyntheticScene make_scene(const SynthConfig& config) {
  if (config.views < 4) throw std::invalid_argument("synth: need at least 4 views");
  config.bounds.validate();
  SyntheticScene scene;
  scene.bounds = config.bounds;
  scene.shape = config.shape;
  const Vec3 target = config.bounds.x_min + Vec3::Constant(0.5 * config.bounds.edge);
  scene.cameras = camera_ring(config.views - 2, config.camera_radius, target, config.width, config.height, config.focal);
  for (const auto& cam : scene.cameras) {
    scene.views.push_back(render_reference(config.shape, cam, config.shading));
    scene.pointmaps.views.push_back(scene.views.back().pointmap);
  }
  if (config.perturb_poses) {
    std::mt19937_64 rng(config.seed);
    const Similarity7 sim = random_similarity(rng);
    PointMapSet world = scene.pointmaps;
    world.estimated.clear();
    for (const auto& cam : scene.cameras) world.estimated.push_back(Pose{cam.R, cam.t});
    scene.pointmaps = warp_point_maps(world, sim);
    // Misses stay at the origin so files do not leak world coordinates.
    for (std::size_t v = 0; v < scene.pointmaps.views.size(); ++v) {
      auto& pm = scene.pointmaps.views[v];
      for (std::size_t i = 0; i < pm.points.size(); ++i)
        if (pm.confidence[i] == 0.0) pm.points[i] = Vec3::Zero();
    }
    scene.world_to_estimated = sim;
  }
  return scene;
}

Mesh analytic_mesh(const Shape& shape, const SceneBounds& bounds, int level) {
  const int n = (1 << level) + 1;
  const ScalarGrid grid = ScalarGrid::sample(bounds.x_min, bounds.cell_size(level), n,
                                             [&](const Vec3& p) { return analytic_sdf(shape, p); });
  Mesh mesh = marching_cubes_grid(grid);
  weld(mesh, 1e-7 * bounds.edge);
  return mesh;
}

std::vector<Vec3> surface_samples(const Shape& shape, const SceneBounds& bounds, std::size_t n, std::uint64_t seed) {
  const Mesh mesh = analytic_mesh(shape, bounds, 7);
  std::vector<Vec3> pts = sample_surface(mesh, n, seed);
  for (Vec3& p : pts) {
    for (int it = 0; it < 5; ++it) p -= analytic_sdf(shape, p) * analytic_normal(shape, p);
  }
  return pts;
}

}  // namespace svr
