#pragma once

#include "svrecon/trainer.hpp"
#include "test_util.hpp"

#include <memory>
#include <string>

namespace svr::test {

/// Three level-2 voxels in a row along x, crossed by near-axial rays.
struct GradScene {
  OctreeState octree;
  RayBatch batch;
  AssociationIndex index;
  RegularizerInputs reg;
  EvalOptions options;
};

inline std::unique_ptr<GradScene> make_grad_scene(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  auto sc = std::make_unique<GradScene>();
  const SceneBounds b{Vec3::Zero(), 1.0};
  std::vector<Voxel> voxels;
  for (std::uint32_t i = 0; i < 3; ++i) {
    Voxel v;
    v.level = 2;
    v.anchor = {i, 1, 1};
    for (int c = 0; c < 8; ++c) v.geo[c] = v.corner_position(c, b).x() - 0.4 + 0.03 * g(rng);
    for (double& x : v.color) x = 0.2 + 0.6 * u(rng);
    voxels.push_back(v);
  }
  sc->octree = OctreeState(b, voxels);
  for (int r = 0; r < 24; ++r) {
    const Vec3 o(-0.5, 0.27 + 0.2 * u(rng), 0.27 + 0.2 * u(rng));
    Vec3 d(1.0, 0.01 * g(rng), 0.01 * g(rng));
    sc->batch.rays.push_back(Ray{o, d.normalized()});
    sc->batch.target.push_back(Vec3(u(rng), u(rng), u(rng)));
    sc->batch.mask.push_back(u(rng) < 0.5);
    sc->batch.prior_normal.push_back(Vec3(g(rng), g(rng), g(rng)).normalized());
    sc->batch.prior_valid.push_back(u(rng) < 0.8);
  }
  sc->index = AssociationIndex::rebuild(sc->octree, 4);
  sc->reg.index = &sc->index;
  sc->reg.samples = sample_cells(sc->index, 64, seed + 1);
  sc->reg.local = {0, 1, 2};
  sc->reg.local_scale = 2.0;
  sc->reg.l_cap = 9;
  sc->options.s = 12.0;
  sc->options.background = Vec3(0.1, 0.3, 0.2);
  sc->options.early_stop_transmittance = 0.0;
  return sc;
}

inline LossWeights only(double LossWeights::*term) {
  LossWeights w;
  w.photo = 0.0;
  w.*term = 1.0;
  return w;
}

/// Per-segment visibility weights T_i alpha_i, recomputed from scratch.
inline std::vector<std::vector<double>> visibility_weights(const GradScene& sc) {
  std::vector<std::vector<double>> out;
  const VoxelTree tree(sc.octree);
  const double s = sc.options.s;
  for (const Ray& r : sc.batch.rays) {
    std::vector<double> w;
    double T = 1.0;
    for (const RaySegment& seg : tree.traverse(r)) {
      const double a = 1.0 / (1.0 + std::exp(-s * seg.f_in)), b = 1.0 / (1.0 + std::exp(-s * seg.f_out));
      const double al = std::clamp((a - b) / std::max(a, 1e-7), 0.0, 1.0);
      w.push_back(T * al);
      T *= 1.0 - al;
    }
    out.push_back(w);
  }
  return out;
}

/// Mean over rays of sum_i w_i ((f_out - f_in)/len + 1)^2 with w frozen.
inline double frozen_ray_eikonal(const GradScene& sc, const std::vector<std::vector<double>>& w) {
  const VoxelTree tree(sc.octree);
  const SceneBounds& b = sc.octree.bounds();
  double sum = 0.0;
  for (std::size_t r = 0; r < sc.batch.rays.size(); ++r) {
    const auto segs = tree.traverse(sc.batch.rays[r]);
    for (std::size_t i = 0; i < segs.size(); ++i) {
      const Voxel& v = sc.octree[segs[i].voxel];
      auto f = [&](const Vec3& p) {
        const Vec3 q = (p - v.min_corner(b)) / v.size(b);
        double val = 0.0;
        for (int c = 0; c < 8; ++c) {
          const auto o = corner_offset(c);
          val += v.geo[c] * (o[0] ? q.x() : 1 - q.x()) * (o[1] ? q.y() : 1 - q.y()) * (o[2] ? q.z() : 1 - q.z());
        }
        return val;
      };
      const double len = segs[i].t_out - segs[i].t_in;
      if (len <= 0.0) continue;
      const double slope = (f(segs[i].p_out) - f(segs[i].p_in)) / len;
      sum += w[r][i] * (slope + 1.0) * (slope + 1.0);
    }
  }
  return sum / double(sc.batch.rays.size());
}

struct GradCheck {
  int checked = 0;
  int skipped = 0;
  double max_rel = 0.0;
  std::string worst;
};

/// Compares the analytic gradient of `weights`-weighted total loss against
/// central differences over every corner and color parameter. When the
/// ray-Eikonal weight is nonzero its part of the objective uses frozen
/// visibility weights, matching the analytic convention.
inline GradCheck check_gradients(GradScene& sc, const LossWeights& weights, double geo_step, double color_step) {
  OctreeState& oct = sc.octree;
  const double re = weights.ray_eikonal;
  LossWeights rest = weights;
  rest.ray_eikonal = 0.0;
  const auto w0 = visibility_weights(sc);
  auto objective = [&] {
    const VoxelTree tree(oct);
    double v = evaluate_loss(oct, tree, sc.batch, sc.reg, rest, sc.options).total();
    if (re > 0.0) v += re * frozen_ray_eikonal(sc, w0);
    return v;
  };
  GradBuffer grads(oct.size());
  {
    const VoxelTree tree(oct);
    evaluate_loss(oct, tree, sc.batch, sc.reg, weights, sc.options, &grads);
  }
  double max_abs = 0.0;
  for (VoxelId v = 0; v < oct.size(); ++v) {
    for (double x : grads.geo[v]) max_abs = std::max(max_abs, std::abs(x));
    for (double x : grads.color[v]) max_abs = std::max(max_abs, std::abs(x));
  }
  const double floor = std::max(1e-6 * max_abs, 1e-300);
  GradCheck out;
  auto probe = [&](double& x, double analytic, double step, const std::string& name) {
    if (near_kink(objective, x, step, 1e-2)) {
      ++out.skipped;
      return;
    }
    const double fd = central_fd(objective, x, step);
    const double e = rel_err(analytic, fd, floor);
    ++out.checked;
    if (e > out.max_rel) {
      out.max_rel = e;
      out.worst = name + " analytic " + std::to_string(analytic) + " fd " + std::to_string(fd);
    }
  };
  for (VoxelId v = 0; v < oct.size(); ++v) {
    const double h = oct[v].size(oct.bounds());
    for (int c = 0; c < 8; ++c)
      probe(oct.geo(v)[c], grads.geo[v][c], geo_step * h, "geo[" + std::to_string(v) + "][" + std::to_string(c) + "]");
    for (int c = 0; c < 3; ++c)
      probe(oct.color(v)[c], grads.color[v][c], color_step,
            "color[" + std::to_string(v) + "][" + std::to_string(c) + "]");
  }
  return out;
}

}  // namespace svr::test
