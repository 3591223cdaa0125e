#include "svrecon/geoinit.hpp"

#include "svrecon/kdtree.hpp"
#include "svrecon/parallel.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>

namespace svr {

Vec3 camera_center(const Mat3& R, const Vec3& t) { return -R.transpose() * t; }

Vec3 CameraModel::center() const { return camera_center(R, t); }

Vec2 CameraModel::project_camera(const Vec3& cam) const {
  const Vec3 h = K * cam;
  return {h.x() / h.z(), h.y() / h.z()};
}

Ray CameraModel::pixel_ray(int u, int v) const {
  const Vec3 pix(u + 0.5, v + 0.5, 1.0);
  const Vec3 d_cam = K.inverse() * pix;
  Ray r;
  r.origin = center();
  r.dir = (R.transpose() * d_cam).normalized();
  return r;
}

void CameraModel::validate() const {
  if (width <= 0 || height <= 0) throw std::invalid_argument("camera: zero-area frustum");
  if (!R.allFinite() || !t.allFinite() || !K.allFinite()) {
    throw std::invalid_argument("camera: non-finite parameters");
  }
  if ((R.transpose() * R - Mat3::Identity()).norm() > 1e-6 || R.determinant() < 0.0) {
    throw std::invalid_argument("camera: R is not a rotation");
  }
  if (!(K(0, 0) > 0.0 && K(1, 1) > 0.0) || K(1, 0) != 0.0 || K(2, 0) != 0.0 || K(2, 1) != 0.0 ||
      K(2, 2) != 1.0) {
    throw std::invalid_argument("camera: K must be upper-triangular with positive focal lengths");
  }
}

std::size_t PointMapSet::point_count() const {
  std::size_t n = 0;
  for (const auto& v : views) n += v.points.size();
  return n;
}

Similarity7 Similarity7::inverse() const {
  Similarity7 inv;
  inv.scale = 1.0 / scale;
  inv.R = R.transpose();
  inv.t = -inv.scale * (inv.R * t);
  return inv;
}

Similarity7 umeyama_align(std::span<const Vec3> src, std::span<const Vec3> dst) {
  if (src.size() != dst.size()) throw std::invalid_argument("umeyama: point counts differ");
  if (src.size() < 3) throw std::invalid_argument("umeyama: need at least 3 points");
  const double n = static_cast<double>(src.size());

  Vec3 mu_s = Vec3::Zero(), mu_d = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    mu_s += src[i];
    mu_d += dst[i];
  }
  mu_s /= n;
  mu_d /= n;

  double var_s = 0.0;
  Mat3 cov = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Vec3 a = src[i] - mu_s;
    const Vec3 b = dst[i] - mu_d;
    var_s += a.squaredNorm();
    cov += b * a.transpose();
  }
  var_s /= n;
  cov /= n;

  double extent = 0.0;
  for (const auto& p : src) extent = std::max(extent, (p - mu_s).norm());
  if (!(var_s > 0.0) || extent == 0.0) throw std::invalid_argument("umeyama: source points are coincident");

  // Collinearity: second principal extent of the source vanishes.
  Mat3 src_cov = Mat3::Zero();
  for (const auto& p : src) src_cov += (p - mu_s) * (p - mu_s).transpose();
  Eigen::JacobiSVD<Mat3> src_svd(src_cov);
  if (src_svd.singularValues()[1] <= 1e-12 * src_svd.singularValues()[0]) {
    throw std::invalid_argument("umeyama: source points are collinear (rank-deficient covariance)");
  }

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3& U = svd.matrixU();
  const Mat3& V = svd.matrixV();
  Vec3 sign = Vec3::Ones();
  if (U.determinant() * V.determinant() < 0.0) sign[2] = -1.0;

  Similarity7 sim;
  sim.R = U * sign.asDiagonal() * V.transpose();
  sim.scale = svd.singularValues().dot(sign) / var_s;
  if (!(sim.scale > 0.0)) throw std::invalid_argument("umeyama: degenerate correspondence (scale <= 0)");
  sim.t = mu_d - sim.scale * (sim.R * mu_s);
  return sim;
}

std::vector<Vec3> warp_points(std::span<const Vec3> points, const Similarity7& sim) {
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(sim.apply(p));
  return out;
}

PointMapSet warp_point_maps(const PointMapSet& maps, const Similarity7& sim) {
  PointMapSet out = maps;
  for (auto& v : out.views) {
    for (auto& p : v.points) p = sim.apply(p);
  }
  // Poses move to the target frame as well: x_cam = R x + t with x = sim^-1(y).
  const Similarity7 inv = sim.inverse();
  for (auto& pose : out.estimated) {
    if (!pose) continue;
    Pose moved;
    moved.R = pose->R * inv.R;
    moved.t = pose->R * inv.t + pose->t;
    // Rescale camera space so R stays a rotation.
    moved.t /= inv.scale;
    pose = moved;
  }
  return out;
}

std::vector<Vec3> subsample_points(const PointMapSet& maps, const SceneBounds& bounds, double pitch,
                                   double confidence_threshold) {
  if (!(pitch > 0.0)) throw std::invalid_argument("subsample: pitch must be positive");
  const auto cells = static_cast<std::int64_t>(std::ceil(bounds.edge / pitch));
  struct Best {
    double conf;
    std::size_t order;
    Vec3 p;
  };
  std::map<std::int64_t, Best> grid;
  std::size_t order = 0;
  for (const auto& view : maps.views) {
    for (std::size_t n = 0; n < view.points.size(); ++n, ++order) {
      const double c = view.confidence[n];
      const Vec3& p = view.points[n];
      if (!(c >= confidence_threshold) || !p.allFinite() || !bounds.contains(p)) continue;
      std::int64_t idx = 0;
      for (int a = 0; a < 3; ++a) {
        const auto q = std::clamp<std::int64_t>(
            static_cast<std::int64_t>(std::floor((p[a] - bounds.x_min[a]) / pitch)), 0, cells - 1);
        idx = idx * cells + q;
      }
      auto [it, inserted] = grid.try_emplace(idx, Best{c, order, p});
      if (!inserted && c > it->second.conf) it->second = Best{c, order, p};
    }
  }
  std::vector<Vec3> out;
  out.reserve(grid.size());
  for (const auto& [idx, best] : grid) out.push_back(best.p);
  return out;
}

CornerGrid init_unsigned(const SceneBounds& bounds, int level, std::span<const Vec3> points,
                         int threads) {
  if (points.empty()) throw std::invalid_argument("init: empty point set");
  bounds.validate();
  CornerGrid grid;
  grid.bounds = bounds;
  grid.level = level;
  const std::uint32_t n = grid.nodes_per_axis();
  grid.values.assign(std::size_t{n} * n * n, 0.0);

  const KdTree tree(std::vector<Vec3>(points.begin(), points.end()));
  parallel_for_blocks(n, threads, [&](std::size_t i) {
    for (std::uint32_t j = 0; j < n; ++j) {
      for (std::uint32_t k = 0; k < n; ++k) {
        const auto hit = tree.nearest(grid.position(static_cast<std::uint32_t>(i), j, k));
        grid.values[grid.index(static_cast<std::uint32_t>(i), j, k)] = -std::sqrt(hit.distance_sq);
      }
    }
  });
  return grid;
}

namespace {

struct DepthBins {
  int bins_x = 0, bins_y = 0, factor = 8;
  std::vector<double> min_depth;

  double at(const Vec2& px) const {
    const int bx = static_cast<int>(px.x()) / factor;
    const int by = static_cast<int>(px.y()) / factor;
    return min_depth[static_cast<std::size_t>(by) * bins_x + bx];
  }
};

bool in_frustum(const CameraModel& cam, const Vec3& c, Vec2* px) {
  if (!(c.z() > 0.0)) return false;
  *px = cam.project_camera(c);
  return px->x() >= 0.0 && px->y() >= 0.0 && px->x() < cam.width && px->y() < cam.height;
}

DepthBins bin_depths(const CameraModel& cam, std::span<const Vec3> points, int factor) {
  DepthBins bins;
  bins.factor = factor;
  bins.bins_x = (cam.width + factor - 1) / factor;
  bins.bins_y = (cam.height + factor - 1) / factor;
  bins.min_depth.assign(static_cast<std::size_t>(bins.bins_x) * bins.bins_y,
                        std::numeric_limits<double>::infinity());
  for (const auto& p : points) {
    const Vec3 c = cam.to_camera(p);
    Vec2 px;
    if (!in_frustum(cam, c, &px)) continue;
    const int bx = static_cast<int>(px.x()) / factor;
    const int by = static_cast<int>(px.y()) / factor;
    double& d = bins.min_depth[static_cast<std::size_t>(by) * bins.bins_x + bx];
    d = std::min(d, c.z());
  }
  return bins;
}

}  // namespace

CarveReport carve_signs(CornerGrid& grid, std::span<const CameraModel> cameras,
                        std::span<const Vec3> points, const InitConfig& config, int threads) {
  for (const auto& cam : cameras) cam.validate();
  if (config.bin_factor < 1) throw std::invalid_argument("carve: bin factor must be >= 1");
  std::vector<DepthBins> bins;
  bins.reserve(cameras.size());
  for (const auto& cam : cameras) bins.push_back(bin_depths(cam, points, config.bin_factor));
  const double margin = config.depth_margin * grid.bounds.cell_size(grid.level);

  const std::uint32_t n = grid.nodes_per_axis();
  // 0 = unchanged, 1 = visible in front of the point map, 2 = outside every frustum.
  std::vector<std::uint8_t> flip(grid.values.size(), 0);
  parallel_for_blocks(n, threads, [&](std::size_t i) {
    for (std::uint32_t j = 0; j < n; ++j) {
      for (std::uint32_t k = 0; k < n; ++k) {
        const auto ii = static_cast<std::uint32_t>(i);
        const Vec3 p = grid.position(ii, j, k);
        bool seen = false, free = false;
        for (std::size_t c = 0; c < cameras.size() && !free; ++c) {
          const Vec3 pc = cameras[c].to_camera(p);
          Vec2 px;
          if (!in_frustum(cameras[c], pc, &px)) continue;
          seen = true;
          if (pc.z() < bins[c].at(px) - margin) free = true;
        }
        flip[grid.index(ii, j, k)] = free ? 1 : (seen ? 0 : 2);
      }
    }
  });

  CarveReport report;
  report.total = grid.values.size();
  for (std::size_t n2 = 0; n2 < grid.values.size(); ++n2) {
    if (flip[n2] == 1) ++report.flipped_visible;
    if (flip[n2] == 2) ++report.flipped_unseen;
    if (flip[n2] != 0) grid.values[n2] = std::abs(grid.values[n2]);
    if (grid.values[n2] < 0.0) ++report.remaining_negative;
  }
  return report;
}

OctreeState octree_from_corner_grid(const CornerGrid& grid, int max_level, const Vec3& color) {
  const std::uint32_t g = 1u << grid.level;
  std::vector<Voxel> voxels;
  voxels.reserve(std::size_t{g} * g * g);
  for (std::uint32_t i = 0; i < g; ++i) {
    for (std::uint32_t j = 0; j < g; ++j) {
      for (std::uint32_t k = 0; k < g; ++k) {
        Voxel v;
        v.level = grid.level;
        v.anchor = {i, j, k};
        for (int c = 0; c < 8; ++c) {
          const auto o = corner_offset(c);
          v.geo[c] = grid.values[grid.index(i + o[0], j + o[1], k + o[2])];
        }
        v.color = {color.x(), color.y(), color.z()};
        voxels.push_back(v);
      }
    }
  }
  return OctreeState(grid.bounds, std::move(voxels), max_level);
}

CornerGrid spherical_init(const SceneBounds& bounds, int level) {
  bounds.validate();
  CornerGrid grid;
  grid.bounds = bounds;
  grid.level = level;
  const std::uint32_t n = grid.nodes_per_axis();
  grid.values.resize(std::size_t{n} * n * n);
  const Vec3 center = bounds.x_min + Vec3::Constant(0.5 * bounds.edge);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < n; ++j) {
      for (std::uint32_t k = 0; k < n; ++k) {
        grid.values[grid.index(i, j, k)] = (grid.position(i, j, k) - center).norm() - bounds.edge / 5.0;
      }
    }
  }
  return grid;
}

OctreeState initialize_from_point_maps(const SceneBounds& bounds, std::span<const CameraModel> cameras,
                                       const PointMapSet& maps, const InitConfig& config,
                                       InitReport* report, int threads, int max_level) {
  InitReport local;
  local.input_points = maps.point_count();
  if (local.input_points == 0) throw std::invalid_argument("init: point maps are empty");

  const PointMapSet* aligned = &maps;
  PointMapSet warped;
  const bool have_poses = !maps.estimated.empty() && maps.estimated.size() == cameras.size() &&
                          std::all_of(maps.estimated.begin(), maps.estimated.end(),
                                      [](const auto& p) { return p.has_value(); });
  if (have_poses) {
    std::vector<Vec3> src, dst;
    for (std::size_t i = 0; i < cameras.size(); ++i) {
      src.push_back(camera_center(maps.estimated[i]->R, maps.estimated[i]->t));
      dst.push_back(cameras[i].center());
    }
    local.alignment = umeyama_align(src, dst);
    local.aligned = true;
    warped = warp_point_maps(maps, local.alignment);
    aligned = &warped;
  }

  const double h = bounds.cell_size(config.level);
  const auto points =
      subsample_points(*aligned, bounds, config.subsample_pitch * h, config.confidence_threshold);
  local.subsampled_points = points.size();
  if (points.empty()) throw std::invalid_argument("init: no confident points inside the scene bounds");

  // Carving bins use every confident point, not just the subsample.
  std::vector<Vec3> all;
  for (const auto& view : aligned->views) {
    for (std::size_t n = 0; n < view.points.size(); ++n) {
      if (view.confidence[n] >= config.confidence_threshold && view.points[n].allFinite()) {
        all.push_back(view.points[n]);
      }
    }
  }

  CornerGrid grid = init_unsigned(bounds, config.level, points, threads);
  local.carve = carve_signs(grid, cameras, all, config, threads);
  if (report) *report = local;
  return octree_from_corner_grid(grid, max_level);
}

}  // namespace svr
