#include "svrecon/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace svr {

void GradBuffer::reset(std::size_t voxels) {
  geo.assign(voxels, {});
  color.assign(voxels, {});
}

void GradBuffer::add(const GradBuffer& other) {
  if (other.size() != size()) throw std::invalid_argument("GradBuffer::add: size mismatch");
  for (std::size_t v = 0; v < geo.size(); ++v) {
    for (int c = 0; c < 8; ++c) geo[v][c] += other.geo[v][c];
    for (int c = 0; c < 3; ++c) color[v][c] += other.color[v][c];
  }
}

void GradBuffer::add_geo(VoxelId v, const CornerWeights& w, double scale) {
  auto& g = geo[v];
  for (int c = 0; c < 8; ++c) g[c] += scale * w[c];
}

bool GradBuffer::all_finite() const {
  for (const auto& g : geo)
    for (double x : g)
      if (!std::isfinite(x)) return false;
  for (const auto& g : color)
    for (double x : g)
      if (!std::isfinite(x)) return false;
  return true;
}

std::vector<Vec3> sample_cells(const AssociationIndex& index, std::size_t n, std::uint64_t seed) {
  std::vector<Vec3> out;
  if (index.empty()) return out;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, index.occupied_count() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto cells = index.cells();
  out.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    const CellIndex cell = cells[pick(rng)];
    const double dx = unit(rng), dy = unit(rng), dz = unit(rng);
    const DenseCoord c = inverse_index(cell, index.grid());
    const FaceNeighbors nb = face_neighbors(c, index.grid());
    if (nb.count != 6) continue;
    if (!std::all_of(nb.begin(), nb.end(), [&](CellIndex x) { return index.occupied(x); })) continue;
    out.emplace_back(c.i + dx, c.j + dy, c.k + dz);
  }
  return out;
}

namespace {

struct Stencil {
  FieldSample center;
  FieldSample minus[3];
  FieldSample plus[3];
};

bool gather(const OctreeState& octree, const AssociationIndex& index, const Vec3& p, Stencil& st,
            bool need_center) {
  if (need_center) {
    auto s = sdf_at_dense(octree, index, p);
    if (!s) return false;
    st.center = *s;
  }
  const double g = static_cast<double>(index.grid());
  for (int a = 0; a < 3; ++a) {
    Vec3 q = p;
    q[a] = p[a] - 1.0;
    if (q[a] < 0.0) return false;
    auto m = sdf_at_dense(octree, index, q);
    q[a] = p[a] + 1.0;
    if (q[a] > g) return false;
    auto pl = sdf_at_dense(octree, index, q);
    if (!m || !pl) return false;
    st.minus[a] = *m;
    st.plus[a] = *pl;
  }
  return true;
}

}  // namespace

double eikonal_global(const OctreeState& octree, const AssociationIndex& index, std::span<const Vec3> samples,
                      GradBuffer* grads, double weight) {
  const double h = octree.bounds().cell_size(index.level());
  double loss = 0.0;
  Stencil st;
  for (const Vec3& p : samples) {
    if (!gather(octree, index, p, st, false)) continue;
    Vec3 g;
    for (int a = 0; a < 3; ++a) g[a] = (st.plus[a].value - st.minus[a].value) / (2.0 * h);
    const double norm = g.norm();
    loss += (norm - 1.0) * (norm - 1.0);
    if (!grads || norm == 0.0) continue;
    const Vec3 dg = 2.0 * (norm - 1.0) / norm * g;
    for (int a = 0; a < 3; ++a) {
      const double k = weight * dg[a] / (2.0 * h);
      grads->add_geo(st.plus[a].voxel, st.plus[a].weights, k);
      grads->add_geo(st.minus[a].voxel, st.minus[a].weights, -k);
    }
  }
  return loss;
}

double laplacian_smooth(const OctreeState& octree, const AssociationIndex& index, std::span<const Vec3> samples,
                        GradBuffer* grads, double weight) {
  const double h = octree.bounds().cell_size(index.level());
  const double inv_h2 = 1.0 / (h * h);
  double loss = 0.0;
  Stencil st;
  for (const Vec3& p : samples) {
    if (!gather(octree, index, p, st, true)) continue;
    for (int a = 0; a < 3; ++a) {
      const double lap = (st.plus[a].value - 2.0 * st.center.value + st.minus[a].value) * inv_h2;
      loss += std::abs(lap);
      if (!grads || lap == 0.0) continue;
      const double k = weight * (lap > 0.0 ? 1.0 : -1.0) * inv_h2;
      grads->add_geo(st.plus[a].voxel, st.plus[a].weights, k);
      grads->add_geo(st.minus[a].voxel, st.minus[a].weights, k);
      grads->add_geo(st.center.voxel, st.center.weights, -2.0 * k);
    }
  }
  return loss;
}

std::vector<VoxelId> select_subset(std::span<const VoxelId> ids, double p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(std::clamp(p, 0.0, 1.0));
  std::vector<VoxelId> out;
  for (VoxelId id : ids)
    if (keep(rng)) out.push_back(id);
  return out;
}

double eikonal_local(const OctreeState& octree, std::span<const VoxelId> ids, double scale, GradBuffer* grads,
                     double weight) {
  double loss = 0.0;
  for (VoxelId id : ids) {
    const Voxel& v = octree[id];
    const double h = v.size(octree.bounds());
    const Vec3 g = grad_center(v.geo, h);
    const double norm = g.norm();
    loss += scale * (norm - 1.0) * (norm - 1.0);
    if (!grads || norm == 0.0) continue;
    const Vec3 dg = scale * weight * 2.0 * (norm - 1.0) / norm * g;
    const auto jac = grad_center_jacobian(h);
    for (int c = 0; c < 8; ++c) grads->geo[id][c] += dg.dot(jac[c]);
  }
  return loss;
}

NormalPrior normal_prior_from_pointmap(const PointMap& map, const Vec3& camera_center,
                                       double confidence_threshold) {
  if (map.width < 2 || map.height < 2) throw std::invalid_argument("normal prior: point map smaller than 2x2");
  NormalPrior prior;
  prior.width = map.width;
  prior.height = map.height;
  const std::size_t n = static_cast<std::size_t>(map.width) * map.height;
  prior.normals.assign(n, Vec3::Zero());
  prior.valid.assign(n, 0);
  auto ok = [&](int u, int v) { return map.conf(u, v) >= confidence_threshold && map.at(u, v).allFinite(); };
  for (int v = 0; v < map.height; ++v) {
    for (int u = 0; u < map.width; ++u) {
      if (!ok(u, v)) continue;
      // Nearest valid neighbor within two pixels on each side, else the pixel itself.
      auto reach = [&](int step, bool horizontal) {
        for (int k = 1; k <= 2; ++k) {
          const int uu = horizontal ? u + step * k : u, vv = horizontal ? v : v + step * k;
          if (uu < 0 || vv < 0 || uu >= map.width || vv >= map.height) break;
          if (ok(uu, vv)) return horizontal ? uu : vv;
        }
        return horizontal ? u : v;
      };
      const int u0 = reach(-1, true), u1 = reach(1, true);
      const int v0 = reach(-1, false), v1 = reach(1, false);
      if (u0 == u1 || v0 == v1) continue;
      const Vec3 dx = map.at(u1, v) - map.at(u0, v);
      const Vec3 dy = map.at(u, v1) - map.at(u, v0);
      Vec3 nrm = dx.cross(dy);
      const double len = nrm.norm();
      if (!(len >= 1e-12)) continue;
      nrm /= len;
      if (nrm.dot(camera_center - map.at(u, v)) < 0.0) nrm = -nrm;
      const std::size_t idx = static_cast<std::size_t>(v) * map.width + u;
      prior.normals[idx] = nrm;
      prior.valid[idx] = 1;
    }
  }
  return prior;
}

ImageLoss normal_loss(std::span<const Vec3> rendered, std::span<const Vec3> prior,
                      std::span<const std::uint8_t> valid) {
  if (rendered.size() != prior.size() || rendered.size() != valid.size()) {
    throw std::invalid_argument("normal_loss: shape mismatch");
  }
  ImageLoss out;
  out.grad.assign(rendered.size(), Vec3::Zero());
  const auto count = static_cast<std::size_t>(std::count_if(valid.begin(), valid.end(), [](auto m) { return m != 0; }));
  if (count == 0) {
    out.empty = true;
    return out;
  }
  const double inv = 1.0 / static_cast<double>(count);
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    if (!valid[i]) continue;
    out.value += 1.0 - rendered[i].dot(prior[i]);
    out.grad[i] = -inv * prior[i];
  }
  out.value *= inv;
  return out;
}

ImageLoss mask_loss(std::span<const double> transmittance, std::span<const std::uint8_t> mask) {
  if (transmittance.size() != mask.size()) throw std::invalid_argument("mask_loss: shape mismatch");
  ImageLoss out;
  out.grad_t.assign(transmittance.size(), 0.0);
  if (transmittance.empty()) {
    out.empty = true;
    return out;
  }
  const double inv = 1.0 / static_cast<double>(transmittance.size());
  for (std::size_t i = 0; i < transmittance.size(); ++i) {
    const double target = mask[i] ? 0.0 : 1.0;
    const double d = transmittance[i] - target;
    out.value += std::abs(d);
    out.grad_t[i] = d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0);
  }
  out.value *= inv;
  return out;
}

ImageLoss photometric(std::span<const Vec3> rendered, std::span<const Vec3> reference) {
  if (rendered.size() != reference.size()) throw std::invalid_argument("photometric: shape mismatch");
  ImageLoss out;
  out.grad.assign(rendered.size(), Vec3::Zero());
  if (rendered.empty()) {
    out.empty = true;
    return out;
  }
  const double inv = 1.0 / (3.0 * static_cast<double>(rendered.size()));
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    const Vec3 d = rendered[i] - reference[i];
    out.value += d.squaredNorm();
    out.grad[i] = 2.0 * inv * d;
  }
  out.value *= inv;
  return out;
}

double ray_eikonal(std::span<const RaySegment> segments, std::span<const double> w,
                   std::vector<SegmentGrad>* grads) {
  if (w.size() != segments.size()) throw std::invalid_argument("ray_eikonal: weight count mismatch");
  if (grads) grads->assign(segments.size(), {});
  double loss = 0.0;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const double len = segments[i].length();
    if (!(len > 0.0)) continue;
    const double g = (segments[i].f_out - segments[i].f_in) / len;
    loss += w[i] * (g + 1.0) * (g + 1.0);
    if (grads) {
      const double k = 2.0 * w[i] * (g + 1.0) / len;
      (*grads)[i] = {-k, k};
    }
  }
  return loss;
}

namespace {
double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }
constexpr double kMinWeightSum = 1e-8;
}  // namespace

double depth_spread_mean(std::span<const double> t, std::span<const double> w, std::vector<double>* dw) {
  if (t.size() != w.size()) throw std::invalid_argument("depth_spread_mean: size mismatch");
  if (dw) dw->assign(t.size(), 0.0);
  const double W = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(W > kMinWeightSum)) return 0.0;
  double D = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) D += w[i] * t[i];
  D /= W;
  double loss = 0.0, S = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    loss += w[i] * std::abs(t[i] - D);
    S += w[i] * sgn(t[i] - D);
  }
  if (dw) {
    // dD/dw_i = (t_i - D) / W
    for (std::size_t i = 0; i < t.size(); ++i) (*dw)[i] = std::abs(t[i] - D) - S * (t[i] - D) / W;
  }
  return loss;
}

double depth_spread_median(std::span<const double> t, std::span<const double> w, std::vector<double>* dw) {
  if (t.size() != w.size()) throw std::invalid_argument("depth_spread_median: size mismatch");
  if (dw) dw->assign(t.size(), 0.0);
  const double W = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(W > kMinWeightSum)) return 0.0;
  // Segments are ordered by depth; the median is where the running weight passes W/2.
  double acc = 0.0, med = t.back();
  for (std::size_t i = 0; i < t.size(); ++i) {
    acc += w[i];
    if (acc >= 0.5 * W) {
      med = t[i];
      break;
    }
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    loss += w[i] * std::abs(t[i] - med);
    if (dw) (*dw)[i] = std::abs(t[i] - med);
  }
  return loss;
}

}  // namespace svr
