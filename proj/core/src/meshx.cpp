#include "svrecon/meshx.hpp"

#include "mc_tables.hpp"
#include "svrecon/assoc.hpp"
#include "svrecon/field.hpp"
#include "svrecon/kdtree.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <unordered_map>

namespace svr {

double Mesh::area() const {
  double a = 0.0;
  for (const auto& f : faces) {
    a += 0.5 * (vertices[f[1]] - vertices[f[0]]).cross(vertices[f[2]] - vertices[f[0]]).norm();
  }
  return a;
}

ScalarGrid ScalarGrid::sample(const Vec3& origin, double spacing, int n, const std::function<double(const Vec3&)>& f) {
  ScalarGrid g;
  g.origin = origin;
  g.spacing = spacing;
  g.nx = g.ny = g.nz = n;
  g.values.resize(static_cast<std::size_t>(n) * n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) g.values[g.index(i, j, k)] = f(origin + spacing * Vec3(i, j, k));
  return g;
}

namespace {

constexpr int kVertexOffset[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                     {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdgeVertices[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                      {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

/// Shared-edge polygonizer. Node values come from a callback so dense and
/// sparse extraction use the same code path.
class Polygonizer {
 public:
  Polygonizer(Vec3 origin, double spacing, std::uint64_t nodes_per_axis)
      : origin_(std::move(origin)), spacing_(spacing), n_(nodes_per_axis) {}

  template <class Value>
  void cell(std::int64_t i, std::int64_t j, std::int64_t k, Value&& value) {
    double f[8];
    int cube = 0;
    for (int v = 0; v < 8; ++v) {
      f[v] = value(i + kVertexOffset[v][0], j + kVertexOffset[v][1], k + kVertexOffset[v][2]);
      if (f[v] < 0.0) cube |= 1 << v;
    }
    if (mc::kEdgeTable[cube] == 0) return;
    std::uint32_t ids[12];
    for (int e = 0; e < 12; ++e) {
      if (!(mc::kEdgeTable[cube] & (1 << e))) continue;
      int a = kEdgeVertices[e][0], b = kEdgeVertices[e][1];
      // Canonical direction: from the lower lattice node.
      if (kVertexOffset[a][0] + kVertexOffset[a][1] + kVertexOffset[a][2] >
          kVertexOffset[b][0] + kVertexOffset[b][1] + kVertexOffset[b][2]) {
        std::swap(a, b);
      }
      const std::int64_t li = i + kVertexOffset[a][0], lj = j + kVertexOffset[a][1], lk = k + kVertexOffset[a][2];
      int axis = 0;
      for (int d = 0; d < 3; ++d)
        if (kVertexOffset[a][d] != kVertexOffset[b][d]) axis = d;
      const std::uint64_t key = ((static_cast<std::uint64_t>(li) * n_ + lj) * n_ + lk) * 3 + axis;
      auto [it, inserted] = edges_.try_emplace(key, static_cast<std::uint32_t>(mesh_.vertices.size()));
      if (inserted) {
        const double t = f[a] / (f[a] - f[b]);
        Vec3 p(static_cast<double>(li), static_cast<double>(lj), static_cast<double>(lk));
        p[axis] += t;
        mesh_.vertices.push_back(origin_ + spacing_ * p);
      }
      ids[e] = it->second;
    }
    for (int t = 0; mc::kTriTable[cube][t] != -1; t += 3) {
      // Table winding faces toward decreasing values; flip it.
      mesh_.faces.push_back({ids[mc::kTriTable[cube][t]], ids[mc::kTriTable[cube][t + 2]],
                             ids[mc::kTriTable[cube][t + 1]]});
    }
  }

  Mesh take() { return std::move(mesh_); }

 private:
  Vec3 origin_;
  double spacing_;
  std::uint64_t n_;
  std::unordered_map<std::uint64_t, std::uint32_t> edges_;
  Mesh mesh_;
};

}  // namespace

Mesh marching_cubes_grid(const ScalarGrid& grid) {
  const std::uint64_t n = static_cast<std::uint64_t>(std::max({grid.nx, grid.ny, grid.nz}));
  Polygonizer poly(grid.origin, grid.spacing, n);
  auto value = [&](std::int64_t i, std::int64_t j, std::int64_t k) {
    return grid.values[grid.index(static_cast<int>(i), static_cast<int>(j), static_cast<int>(k))];
  };
  for (int i = 0; i + 1 < grid.nx; ++i)
    for (int j = 0; j + 1 < grid.ny; ++j)
      for (int k = 0; k + 1 < grid.nz; ++k) poly.cell(i, j, k, value);
  return poly.take();
}

Mesh marching_cubes(const OctreeState& octree, int level, double outside_value, ExtractReport* report) {
  const int finest = octree.finest_level();
  if (level < 1 || level > finest + 1) throw std::domain_error("marching_cubes: level must be in [1, finest + 1]");
  const int li = std::max(level, finest);
  if (li > kMaxAssociationLevel) throw std::domain_error("marching_cubes: level beyond the association limit");
  const AssociationIndex index = AssociationIndex::rebuild(octree, li);
  const int shift = li - level;
  const std::uint64_t g_ext = std::uint64_t{1} << level;
  const std::uint64_t g_idx = index.grid();

  std::vector<CellIndex> cells;
  cells.reserve(index.occupied_count() >> (3 * shift));
  for (CellIndex c : index.cells()) {
    const DenseCoord d = inverse_index(c, g_idx);
    cells.push_back(linear_index({d.i >> shift, d.j >> shift, d.k >> shift}, g_ext));
  }
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());

  const SceneBounds& b = octree.bounds();
  auto value = [&](std::int64_t a, std::int64_t bb, std::int64_t c) {
    const std::int64_t node[3] = {a << shift, bb << shift, c << shift};
    for (int dx = 0; dx >= -1; --dx) {
      for (int dy = 0; dy >= -1; --dy) {
        for (int dz = 0; dz >= -1; --dz) {
          const std::int64_t cc[3] = {node[0] + dx, node[1] + dy, node[2] + dz};
          bool inside = true;
          for (auto x : cc) inside = inside && x >= 0 && x < static_cast<std::int64_t>(g_idx);
          if (!inside) continue;
          const auto id = index.lookup(linear_index(
              {static_cast<std::uint32_t>(cc[0]), static_cast<std::uint32_t>(cc[1]), static_cast<std::uint32_t>(cc[2])},
              g_idx));
          if (!id) continue;
          const Voxel& v = octree[*id];
          const double span = std::ldexp(1.0, li - v.level);
          const Vec3 q = ((Vec3(node[0], node[1], node[2]) -
                           Vec3(v.anchor.i, v.anchor.j, v.anchor.k) * span) / span)
                             .cwiseMax(0.0)
                             .cwiseMin(1.0);
          return trilinear(v.geo, q);
        }
      }
    }
    return outside_value;
  };

  Polygonizer poly(b.x_min, b.cell_size(level), g_ext + 1);
  for (CellIndex c : cells) {
    const DenseCoord d = inverse_index(c, g_ext);
    poly.cell(d.i, d.j, d.k, value);
  }
  Mesh mesh = poly.take();
  weld(mesh, 1e-7 * b.edge);
  if (report) {
    report->index_level = li;
    report->cells = cells.size();
    report->empty = mesh.empty();
  }
  return mesh;
}

void weld(Mesh& mesh, double tolerance) {
  std::vector<std::uint32_t> target(mesh.vertices.size());
  if (tolerance > 0.0) {
    std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> buckets;
    auto key = [&](std::int64_t x, std::int64_t y, std::int64_t z) {
      return (static_cast<std::uint64_t>(x) * 73856093u) ^ (static_cast<std::uint64_t>(y) * 19349663u) ^
             (static_cast<std::uint64_t>(z) * 83492791u);
    };
    for (std::uint32_t v = 0; v < mesh.vertices.size(); ++v) {
      const Vec3& p = mesh.vertices[v];
      const std::int64_t c[3] = {static_cast<std::int64_t>(std::floor(p.x() / tolerance)),
                                 static_cast<std::int64_t>(std::floor(p.y() / tolerance)),
                                 static_cast<std::int64_t>(std::floor(p.z() / tolerance))};
      std::uint32_t found = v;
      for (int dx = -1; dx <= 1 && found == v; ++dx)
        for (int dy = -1; dy <= 1 && found == v; ++dy)
          for (int dz = -1; dz <= 1 && found == v; ++dz) {
            auto it = buckets.find(key(c[0] + dx, c[1] + dy, c[2] + dz));
            if (it == buckets.end()) continue;
            for (std::uint32_t w : it->second) {
              if ((mesh.vertices[w] - p).norm() < tolerance) {
                found = w;
                break;
              }
            }
          }
      target[v] = found;
      if (found == v) buckets[key(c[0], c[1], c[2])].push_back(v);
    }
  } else {
    for (std::uint32_t v = 0; v < target.size(); ++v) target[v] = v;
  }

  std::vector<std::array<std::uint32_t, 3>> faces;
  faces.reserve(mesh.faces.size());
  for (const auto& f : mesh.faces) {
    const std::array<std::uint32_t, 3> g{target[f[0]], target[f[1]], target[f[2]]};
    if (g[0] == g[1] || g[1] == g[2] || g[0] == g[2]) continue;
    const double area =
        0.5 * (mesh.vertices[g[1]] - mesh.vertices[g[0]]).cross(mesh.vertices[g[2]] - mesh.vertices[g[0]]).norm();
    if (!(area > 1e-12)) continue;
    faces.push_back(g);
  }

  // Compact, keeping first-use order of the original vertex indices.
  std::vector<std::uint32_t> remap(mesh.vertices.size(), UINT32_MAX);
  std::vector<bool> used(mesh.vertices.size(), false);
  for (const auto& f : faces)
    for (auto v : f) used[v] = true;
  std::vector<Vec3> verts;
  for (std::uint32_t v = 0; v < mesh.vertices.size(); ++v) {
    if (!used[v]) continue;
    remap[v] = static_cast<std::uint32_t>(verts.size());
    verts.push_back(mesh.vertices[v]);
  }
  for (auto& f : faces)
    for (auto& v : f) v = remap[v];
  mesh.vertices = std::move(verts);
  mesh.faces = std::move(faces);
}

std::vector<Vec3> sample_surface(const Mesh& mesh, std::size_t n, std::uint64_t seed) {
  if (mesh.empty()) throw std::invalid_argument("sample_surface: empty mesh");
  std::vector<double> cdf(mesh.faces.size());
  double acc = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& t = mesh.faces[f];
    acc += 0.5 * (mesh.vertices[t[1]] - mesh.vertices[t[0]]).cross(mesh.vertices[t[2]] - mesh.vertices[t[0]]).norm();
    cdf[f] = acc;
  }
  if (!(acc > 0.0)) throw std::invalid_argument("sample_surface: zero-area mesh");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Vec3> out;
  out.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double r = unit(rng) * acc;
    const auto f = std::min<std::size_t>(
        static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), r) - cdf.begin()), cdf.size() - 1);
    const auto& t = mesh.faces[f];
    const double r1 = std::sqrt(unit(rng)), r2 = unit(rng);
    out.push_back((1.0 - r1) * mesh.vertices[t[0]] + r1 * (1.0 - r2) * mesh.vertices[t[1]] +
                  r1 * r2 * mesh.vertices[t[2]]);
  }
  return out;
}

namespace {

double mean_nearest(std::span<const Vec3> from, const KdTree& to) {
  double sum = 0.0;
  for (const Vec3& p : from) sum += std::sqrt(to.nearest(p).distance_sq);
  return sum / static_cast<double>(from.size());
}

double fraction_within(std::span<const Vec3> from, const KdTree& to, double d) {
  std::size_t hits = 0;
  for (const Vec3& p : from)
    if (std::sqrt(to.nearest(p).distance_sq) <= d) ++hits;
  return static_cast<double>(hits) / static_cast<double>(from.size());
}

}  // namespace

double chamfer(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("chamfer: empty point set");
  const KdTree ta(std::vector<Vec3>(a.begin(), a.end()));
  const KdTree tb(std::vector<Vec3>(b.begin(), b.end()));
  return 0.5 * (mean_nearest(a, tb) + mean_nearest(b, ta));
}

F1Score f1_score(std::span<const Vec3> pred, std::span<const Vec3> gt, double threshold) {
  if (pred.empty() || gt.empty()) throw std::invalid_argument("f1_score: empty point set");
  if (!(threshold > 0.0)) throw std::invalid_argument("f1_score: threshold must be positive");
  const KdTree tp(std::vector<Vec3>(pred.begin(), pred.end()));
  const KdTree tg(std::vector<Vec3>(gt.begin(), gt.end()));
  F1Score s;
  s.precision = fraction_within(pred, tg, threshold);
  s.recall = fraction_within(gt, tp, threshold);
  const double sum = s.precision + s.recall;
  s.f1 = sum > 0.0 ? 2.0 * s.precision * s.recall / sum : 0.0;
  return s;
}

}  // namespace svr
