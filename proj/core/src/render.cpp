#include "svrecon/render.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace svr {

double phi_s(double f, double s) { return 1.0 / (1.0 + std::exp(-s * f)); }

double alpha_from_sdf(double f_in, double f_out, double s) {
  const double a = phi_s(f_in, s);
  const double b = phi_s(f_out, s);
  if (!(a > b)) return 0.0;
  return std::clamp((a - b) / std::max(a, kPhiEpsilon), 0.0, 1.0);
}

AlphaPartials alpha_partials(double f_in, double f_out, double s) {
  const double a = phi_s(f_in, s);
  const double b = phi_s(f_out, s);
  AlphaPartials r;
  if (!(a > b)) return r;
  const double den = std::max(a, kPhiEpsilon);
  r.alpha = (a - b) / den;
  if (r.alpha > 1.0) {
    r.alpha = 1.0;
    return r;
  }
  const double db = s * b * (1.0 - b);
  if (a >= kPhiEpsilon) {
    r.d_in = s * b * (1.0 - a) / a;
  } else {
    r.d_in = s * a * (1.0 - a) / kPhiEpsilon;
  }
  r.d_out = -db / den;
  return r;
}

double learning_thickness(double s) { return 2.0 * std::log(199.0) / s; }

bool intersect_bounds(const SceneBounds& bounds, const Ray& ray, double& t0, double& t1) {
  t0 = -std::numeric_limits<double>::infinity();
  t1 = std::numeric_limits<double>::infinity();
  const Vec3 hi = bounds.x_max();
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin[a], d = ray.dir[a];
    if (d == 0.0) {
      if (o < bounds.x_min[a] || o > hi[a]) return false;
      continue;
    }
    double ta = (bounds.x_min[a] - o) / d, tb = (hi[a] - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return t0 < t1;
}

struct VoxelTree::Walk {
  Ray ray;
  Vec3 inv;
  double t_min = 0.0;
  double t_max = 0.0;
  std::vector<RaySegment>* out = nullptr;
};

VoxelTree::VoxelTree(const OctreeState& octree) : octree_(&octree) {
  nodes_.push_back(Node{});
  for (const Voxel& v : octree.voxels()) {
    if (!octree.is_leaf(v.id)) continue;
    std::int32_t cur = 0;
    for (int l = 1; l <= v.level; ++l) {
      const int shift = v.level - l;
      const DenseCoord a{v.anchor.i >> shift, v.anchor.j >> shift, v.anchor.k >> shift};
      const int c = corner_index(a.i & 1, a.j & 1, a.k & 1);
      std::int32_t next = nodes_[static_cast<std::size_t>(cur)].child[c];
      if (next < 0) {
        next = static_cast<std::int32_t>(nodes_.size());
        nodes_[static_cast<std::size_t>(cur)].child[c] = next;
        Node n;
        n.level = l;
        n.anchor = a;
        nodes_.push_back(n);
      }
      cur = next;
    }
    nodes_[static_cast<std::size_t>(cur)].voxel = v.id;
  }
}

bool VoxelTree::slab(const Node& n, const Walk& walk, double& t0, double& t1) const {
  const SceneBounds& b = octree_->bounds();
  const double h = b.cell_size(n.level);
  const std::uint32_t anchor[3] = {n.anchor.i, n.anchor.j, n.anchor.k};
  t0 = walk.t_min;
  t1 = walk.t_max;
  for (int a = 0; a < 3; ++a) {
    const double lo = b.x_min[a] + anchor[a] * h;
    const double hi = b.x_min[a] + (anchor[a] + 1) * h;
    const double o = walk.ray.origin[a];
    if (walk.ray.dir[a] == 0.0) {
      if (o < lo || o >= hi) return false;
      continue;
    }
    double ta = (lo - o) * walk.inv[a], tb = (hi - o) * walk.inv[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return t0 < t1;
}

void VoxelTree::descend(std::int32_t id, Walk& walk, double t0, double t1) const {
  const Node& node = nodes_[static_cast<std::size_t>(id)];
  if (node.voxel != kNoVoxel) {
    const Voxel& v = (*octree_)[node.voxel];
    const SceneBounds& b = octree_->bounds();
    RaySegment seg;
    seg.voxel = v.id;
    seg.t_in = t0;
    seg.t_out = t1;
    seg.p_in = walk.ray.origin + t0 * walk.ray.dir;
    seg.p_out = walk.ray.origin + t1 * walk.ray.dir;
    seg.w_in = trilinear_weights(local_coords(v, b, seg.p_in));
    seg.w_out = trilinear_weights(local_coords(v, b, seg.p_out));
    for (int c = 0; c < 8; ++c) {
      seg.f_in += seg.w_in[c] * v.geo[c];
      seg.f_out += seg.w_out[c] * v.geo[c];
    }
    walk.out->push_back(seg);
    return;
  }
  std::array<std::pair<double, std::int32_t>, 8> order;
  std::array<double, 8> exits{};
  int count = 0;
  for (int c = 0; c < 8; ++c) {
    const std::int32_t ch = node.child[c];
    if (ch < 0) continue;
    double c0, c1;
    if (!slab(nodes_[static_cast<std::size_t>(ch)], walk, c0, c1)) continue;
    exits[static_cast<std::size_t>(count)] = c1;
    order[static_cast<std::size_t>(count++)] = {c0, ch};
  }
  std::array<int, 8> perm{0, 1, 2, 3, 4, 5, 6, 7};
  std::sort(perm.begin(), perm.begin() + count, [&](int x, int y) { return order[x].first < order[y].first; });
  for (int n = 0; n < count; ++n) {
    const int p = perm[static_cast<std::size_t>(n)];
    descend(order[static_cast<std::size_t>(p)].second, walk, order[static_cast<std::size_t>(p)].first,
            exits[static_cast<std::size_t>(p)]);
  }
}

void VoxelTree::traverse(const Ray& ray, double t_min, double t_max, std::vector<RaySegment>& out) const {
  if (ray.dir.squaredNorm() == 0.0 || !ray.dir.allFinite()) {
    throw std::domain_error("traverse: zero ray direction");
  }
  out.clear();
  if (!octree_ || nodes_.empty()) return;
  Walk walk;
  walk.ray = ray;
  walk.inv = ray.dir.cwiseInverse();
  walk.t_min = t_min;
  walk.t_max = t_max;
  walk.out = &out;
  double t0, t1;
  if (!slab(nodes_[0], walk, t0, t1)) return;
  descend(0, walk, t0, t1);
}

std::vector<RaySegment> VoxelTree::traverse(const Ray& ray, double t_min, double t_max) const {
  std::vector<RaySegment> out;
  traverse(ray, t_min, t_max, out);
  return out;
}

VoxelId VoxelTree::locate(const Vec3& p) const {
  if (!octree_ || nodes_.empty()) return kNoVoxel;
  const SceneBounds& b = octree_->bounds();
  if (!b.contains(p)) return kNoVoxel;
  std::int32_t cur = 0;
  while (true) {
    const Node& n = nodes_[static_cast<std::size_t>(cur)];
    if (n.voxel != kNoVoxel) return n.voxel;
    const int l = n.level + 1;
    const double g = std::ldexp(1.0, l);
    std::uint32_t a[3];
    for (int ax = 0; ax < 3; ++ax) {
      const double d = std::floor((p[ax] - b.x_min[ax]) / b.cell_size(l));
      a[ax] = static_cast<std::uint32_t>(std::clamp(d, 0.0, g - 1.0));
    }
    const std::uint32_t base[3] = {n.anchor.i * 2, n.anchor.j * 2, n.anchor.k * 2};
    int off[3];
    for (int ax = 0; ax < 3; ++ax) {
      off[ax] = a[ax] <= base[ax] ? 0 : 1;
    }
    const std::int32_t next = n.child[corner_index(off[0], off[1], off[2])];
    if (next < 0) return kNoVoxel;
    cur = next;
  }
}

std::vector<RaySegment> traverse_ray(const OctreeState& octree, const Ray& ray, double t_min, double t_max) {
  return VoxelTree(octree).traverse(ray, t_min, t_max);
}

PixelRender composite(std::span<const RaySegment> segments, double s, std::span<const Vec3> colors,
                      std::span<const Vec3> normals, const Vec3& background) {
  if (colors.size() != segments.size() || (!normals.empty() && normals.size() != segments.size())) {
    throw std::invalid_argument("composite: payload size mismatch");
  }
  PixelRender px;
  double T = 1.0;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const double alpha = alpha_from_sdf(segments[i].f_in, segments[i].f_out, s);
    const double w = T * alpha;
    px.color += w * colors[i];
    if (!normals.empty()) px.normal += w * normals[i];
    px.depth += w * segments[i].t_mid();
    T *= 1.0 - alpha;
  }
  px.transmittance = T;
  px.color += T * background;
  return px;
}

SharpnessSchedule SharpnessSchedule::for_cell_size(double h, int level, double ramp_rate) {
  return SharpnessSchedule(std::log(std::log(199.0) / h), level, ramp_rate);
}

double SharpnessSchedule::s() const { return std::exp(log_s()); }

void SharpnessSchedule::set_progress(double r) {
  if (!(r >= 0.0 && r <= 1.0)) throw std::logic_error("sharpness: progress outside [0,1]");
  if (r < ramp_) throw std::logic_error("sharpness: progress decreased within a level");
  ramp_ = r;
}

void SharpnessSchedule::change_level(double h_old, double h_new, int new_level) {
  if (!(h_old > 0.0 && h_new > 0.0)) throw std::invalid_argument("sharpness: cell sizes must be positive");
  base_ += rate_ * ramp_;
  base_ += std::log(h_old / h_new);
  ramp_ = 0.0;
  level_ = new_level;
}

}  // namespace svr
