#include "grad_scene.hpp"
#include "svrecon/adapt.hpp"
#include "svrecon/assoc.hpp"
#include "svrecon/meshx.hpp"
#include "svrecon/synth.hpp"
#include "svrecon/trainer.hpp"
#include "test_util.hpp"

#include <Eigen/Geometry>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <string>

using namespace svr;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

char buf[512];

template <class... Args>
std::string fmt(const char* f, Args... args) {
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

Outcome a1_nvs() {
  const auto t0 = Clock::now();
  Outcome o;
  std::mt19937_64 rng(101);
  std::size_t queries = 0;
  for (int trial = 0; trial < 50 && o.pass; ++trial) {
    const int max_level = 2 + trial % 5;
    const auto voxels = test::random_leaves(rng, max_level);
    const int L = 6;
    const std::uint64_t g = std::uint64_t(1) << L;
    const auto idx = AssociationIndex::rebuild(voxels, L);
    std::uniform_int_distribution<CellIndex> cell(0, g * g * g - 1);
    for (int q = 0; q < 1000; ++q, ++queries) {
      const CellIndex c = cell(rng);
      if (nvs_lookup(idx, c) != test::brute_cover(voxels, L, inverse_index(c, g))) {
        o.require(false, fmt("octree %d cell %llu disagrees", trial, (unsigned long long)c));
        break;
      }
    }
    const auto again = AssociationIndex::rebuild(voxels, L);
    const bool same = std::equal(idx.bitmask().begin(), idx.bitmask().end(), again.bitmask().begin(),
                                 again.bitmask().end()) &&
                      std::equal(idx.cells().begin(), idx.cells().end(), again.cells().begin(), again.cells().end()) &&
                      std::equal(idx.voxel_map().begin(), idx.voxel_map().end(), again.voxel_map().begin(),
                                 again.voxel_map().end());
    o.require(same, fmt("rebuild of octree %d not identical", trial));
  }
  const double t = seconds_since(t0);
  o.require(t < 30.0, fmt("runtime %.1fs", t));
  if (o.pass) o.detail = fmt("%zu lookups, %.2fs", queries, t);
  return o;
}

Outcome a2_umeyama() {
  const auto t0 = Clock::now();
  Outcome o;
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> log_s(std::log(0.1), std::log(10.0));
  std::normal_distribution<double> g(0.0, 1.0);
  double worst_rms = 0.0, worst_param = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const double s = std::exp(log_s(rng));
    const Mat3 R = Eigen::Quaterniond(g(rng), g(rng), g(rng), g(rng)).normalized().toRotationMatrix();
    const Vec3 t = 5.0 * Vec3(u(rng), u(rng), u(rng));
    std::vector<Vec3> src(20), dst(20);
    for (int i = 0; i < 20; ++i) {
      src[i] = Vec3(u(rng), u(rng), u(rng));
      dst[i] = s * R * src[i] + t;
    }
    const Similarity7 est = umeyama_align(src, dst);
    double sq = 0.0;
    for (int i = 0; i < 20; ++i) sq += (est.apply(src[i]) - dst[i]).squaredNorm();
    worst_rms = std::max(worst_rms, std::sqrt(sq / 20.0));
    worst_param = std::max({worst_param, std::abs(est.scale - s) / s, (est.R - R).cwiseAbs().maxCoeff(),
                            (est.t - t).cwiseAbs().maxCoeff()});
  }
  const double time = seconds_since(t0);
  o.require(worst_rms < 1e-9, fmt("rms residual %.3g", worst_rms));
  o.require(worst_param < 1e-7, fmt("parameter error %.3g", worst_param));
  o.require(time < 5.0, fmt("runtime %.1fs", time));
  if (o.pass) o.detail = fmt("max rms %.2g, max parameter error %.2g", worst_rms, worst_param);
  return o;
}

Outcome a3_gradients() {
  const auto t0 = Clock::now();
  Outcome o;
  const std::pair<const char*, double LossWeights::*> terms[] = {
      {"photo", &LossWeights::photo},       {"normal", &LossWeights::normal},
      {"mask", &LossWeights::mask},         {"dmean", &LossWeights::dmean},
      {"dmed", &LossWeights::dmed},         {"eikonal", &LossWeights::eikonal},
      {"smooth", &LossWeights::smooth},     {"local_eikonal", &LossWeights::local_eikonal},
      {"ray_eikonal", &LossWeights::ray_eikonal}};
  int checked = 0, skipped = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    for (const auto& [name, term] : terms) {
      auto sc = test::make_grad_scene(seed);
      const test::GradCheck r = test::check_gradients(*sc, test::only(term), 1e-4, 1e-4);
      const bool regularizer =
          term == &LossWeights::eikonal || term == &LossWeights::smooth || term == &LossWeights::local_eikonal;
      const double tol = regularizer ? 1e-5 : 1e-3;
      o.require(r.max_rel < tol, fmt("%s seed %llu: rel %.3g at %s", name, (unsigned long long)seed, r.max_rel,
                                     r.worst.c_str()));
      o.require(r.checked >= 20, fmt("%s: only %d parameters checked", name, r.checked));
      checked += r.checked;
      skipped += r.skipped;
    }
    auto sc = test::make_grad_scene(seed + 10);
    LossWeights w;
    w.normal = 0.1;
    w.mask = 0.5;
    w.dmean = 0.01;
    w.dmed = 0.01;
    w.eikonal = 1e-3;
    w.smooth = 1e-5;
    w.local_eikonal = 1e-3;
    w.ray_eikonal = 1e-2;
    const test::GradCheck r = test::check_gradients(*sc, w, 1e-4, 1e-4);
    o.require(r.max_rel < 1e-3, fmt("total seed %llu: rel %.3g at %s", (unsigned long long)seed, r.max_rel,
                                    r.worst.c_str()));
    checked += r.checked;
    skipped += r.skipped;
  }
  const double t = seconds_since(t0);
  o.require(t < 120.0, fmt("runtime %.1fs", t));
  if (o.pass) o.detail = fmt("%d parameter checks, %d near kinks skipped, %.1fs", checked, skipped, t);
  return o;
}

Outcome a4_sphere() {
  const auto t0 = Clock::now();
  Outcome o;
  const int threads = 8;
  SynthConfig sc;
  sc.shape = make_shape("sphere");
  sc.views = 16;
  const SyntheticScene scene = make_scene(sc);
  InitConfig init;
  init.level = 6;
  const OctreeState oct = initialize_from_point_maps(scene.bounds, scene.cameras, scene.pointmaps, init, nullptr, threads);

  std::vector<std::vector<Vec3>> images;
  std::vector<std::vector<std::uint8_t>> masks;
  std::vector<PointMap> maps;
  for (const ReferenceView& v : scene.views) {
    images.push_back(v.rgb);
    masks.push_back(v.mask);
    maps.push_back(v.pointmap);
  }
  TrainConfig cfg = default_config(Profile::synthetic);
  cfg.iterations = 2000;
  cfg.threads = threads;
  Trainer trainer(oct, make_training_views(scene.cameras, images, masks, maps, cfg.confidence_threshold), cfg);
  trainer.run();
  const OctreeState& out = trainer.octree();
  const SceneBounds& b = out.bounds();
  const int finest = out.finest_level();
  o.require(finest == 7, fmt("finest level %d", finest));

  const double thickness = trainer.sharpness().thickness();
  const Mesh mesh = marching_cubes(out, 7, thickness);
  if (mesh.empty()) {
    o.require(false, "empty mesh");
    return o;
  }
  double radial = 0.0;
  for (const Vec3& v : mesh.vertices) radial += std::abs(v.norm() - 1.0);
  radial /= double(mesh.vertices.size());
  const double h7 = b.cell_size(7);
  const auto gt = surface_samples(scene.shape, scene.bounds, 20000, 7);
  const double cd = chamfer(sample_surface(mesh, 20000, 3), gt);

  double eik = 0.0;
  std::size_t band = 0;
  for (const Voxel& v : out.voxels()) {
    if (!out.is_leaf(v.id)) continue;
    double center = 0.0;
    for (double g : v.geo) center += g / 8.0;
    if (std::abs(center) > thickness / 2.0) continue;
    eik += std::abs(grad_center(v, b).norm() - 1.0);
    ++band;
  }
  eik /= double(std::max<std::size_t>(band, 1));
  const double t = seconds_since(t0);
  o.require(radial < 2.0 * h7, fmt("mean |r-1| %.4f >= %.4f", radial, 2.0 * h7));
  o.require(cd < 0.03 * b.edge, fmt("chamfer %.4f >= %.4f", cd, 0.03 * b.edge));
  o.require(band > 0 && eik < 0.2, fmt("in-band eikonal %.4f over %zu voxels", eik, band));
  o.require(t < 600.0, fmt("runtime %.1fs", t));
  if (o.pass) {
    o.detail = fmt("mean |r-1| %.4f, chamfer %.4f, in-band eikonal %.4f over %zu voxels, %.0fs", radial, cd, eik,
                   band, t);
  }
  return o;
}

Outcome a5_subdivision() {
  const auto t0 = Clock::now();
  Outcome o;
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const SceneBounds b{Vec3(-1.5, 0.25, 3.0), 2.5};
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Voxel> leaves = test::random_leaves(rng, 4, 0.5, 1.0);
    for (Voxel& v : leaves)
      for (double& g : v.geo) g = u(rng) - 0.5;
    const std::size_t pick = rng() % leaves.size();
    std::vector<Voxel> with_children = leaves;
    for (const Voxel& k : split_voxel(leaves[pick])) with_children.push_back(k);
    const OctreeState before(b, leaves), after(b, with_children);
    const int L = 5;
    const auto ib = AssociationIndex::rebuild(before, L);
    const auto ia = AssociationIndex::rebuild(after, L);
    const Voxel& p = leaves[pick];
    const Vec3 lo = p.min_corner(b);
    const double size = p.size(b);
    for (int n = 0; n < 1000; ++n) {
      const Vec3 x = lo + size * Vec3(u(rng), u(rng), u(rng));
      const auto f0 = sdf_at(before, ib, x);
      const auto f1 = sdf_at(after, ia, x);
      if (!f0 || !f1) {
        o.require(false, "interior point not covered");
        break;
      }
      // Corner values are O(1); the denominator is floored at 1e-3 of that scale.
      worst = std::max(worst, test::rel_err(f0->value, f1->value, 1e-3));
    }
  }
  const double t = seconds_since(t0);
  o.require(worst < 1e-12, fmt("max rel err %.3g", worst));
  o.require(t < 5.0, fmt("runtime %.1fs", t));
  if (o.pass) o.detail = fmt("20000 points, max rel err %.2g", worst);
  return o;
}

Outcome a6_prune() {
  Outcome o;
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const SceneBounds b{Vec3(-1, -1, -1), 2.0};
  std::size_t removed_total = 0, voxels_total = 0;
  for (int cycle = 0; cycle < 10; ++cycle) {
    auto leaves = test::random_leaves(rng, 4);
    for (Voxel& v : leaves) {
      const double base = 1.5 * u(rng);
      for (double& g : v.geo) g = base + 0.2 * u(rng);
    }
    OctreeState oct(b, leaves);
    const double s = 20.0 + 20.0 * (u(rng) + 1.0);
    SubdivideConfig cfg;
    cfg.target_level = 5;
    cfg.l_cap = 9;
    cfg.top_fraction = 1.0;
    oct = subdivide(oct, s, cfg).octree;

    const double ell = 2.0 * std::log(199.0) / s;
    for (const Voxel& v : oct.voxels()) {
      bool pos = true, neg = true;
      double m = std::numeric_limits<double>::infinity();
      for (double g : v.geo) {
        pos = pos && g > 0.0;
        neg = neg && g < 0.0;
        m = std::min(m, std::abs(g));
      }
      const bool oracle = (pos || neg) && m > ell / 2.0 + b.edge / double(1 << v.level);
      o.require(prune_predicate(v, b, learning_thickness(s), 1.0) == oracle,
                fmt("cycle %d voxel %u predicate mismatch", cycle, unsigned(v.id)));
    }
    const PruneResult r = prune(oct, s);
    for (VoxelId id : r.removed) {
      const Voxel& v = oct[id];
      bool pos = false, neg = false;
      for (double g : v.geo) {
        pos = pos || g > 0.0;
        neg = neg || g < 0.0;
      }
      o.require(!(pos && neg), fmt("cycle %d removed mixed-sign voxel %u", cycle, unsigned(id)));
      o.require(prune_predicate(v, b, learning_thickness(s), 1.0), fmt("cycle %d removed in-band voxel", cycle));
    }
    removed_total += r.removed.size();
    voxels_total += oct.size();
  }
  if (o.pass) o.detail = fmt("%zu of %zu voxels removed", removed_total, voxels_total);
  return o;
}

bool within_ulps(double a, double b, int ulps) {
  return std::abs(a - b) <= ulps * std::numeric_limits<double>::epsilon() * std::max(std::abs(a), std::abs(b));
}

Outcome a7_schedule() {
  Outcome o;
  const TrainConfig c = default_config(Profile::dtu);
  auto lam = [&](long tau) { return weight_schedule(tau, c.weights); };
  o.require(lam(0).normal == 0.10 && lam(4500).normal == 0.01 && lam(6500).normal == 0.0, "lambda_n samples");
  // Piecewise breaks at 4000 and 6000.
  o.require(lam(3999).normal == 0.10 && lam(4000).normal == 0.01, "lambda_n break at 4000");
  o.require(lam(5999).normal == 0.01 && lam(6000).normal == 0.0 && lam(7999).normal == 0.0, "lambda_n break at 6000");
  for (long tau : {2000L, 4000L}) {
    o.require(within_ulps(lam(tau).eikonal, 0.25 * lam(tau - 1).eikonal, 1), fmt("lambda_e decay at %ld", tau));
    o.require(lam(tau).eikonal == lam(tau + 999).eikonal, fmt("lambda_e constant after %ld", tau));
  }

  const SceneBounds b{Vec3::Zero(), 4.0};
  SharpnessSchedule s = initial_sharpness(c, b);
  double prev = -std::numeric_limits<double>::infinity();
  int steps = 0;
  for (long tau = 0; tau < c.iterations; ++tau) {
    const SharpnessSchedule before = s;
    advance_sharpness(s, c, b, tau);
    if (s.level() > before.level() && tau > 0) {
      ++steps;
      o.require(s.level() == before.level() + 1, fmt("level jump at %ld", tau));
      o.require(s.log_s() == before.log_s() + std::log(2.0), fmt("level step at %ld: delta %.17g", tau,
                                                                  s.log_s() - before.log_s()));
    }
    o.require(s.log_s() >= prev, fmt("log s decreased at %ld", tau));
    prev = s.log_s();
  }
  o.require(steps == 3, fmt("%d level steps", steps));
  o.require(s.log_s() == sharpness_at(c, b, c.iterations - 1).log_s(), "replay differs from incremental trace");
  if (o.pass) o.detail = fmt("%d level steps, final log s %.6f", steps, s.log_s());
  return o;
}

Outcome a8_compositing() {
  Outcome o;
  std::mt19937_64 rng(808);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst_identity = 0.0, worst_oracle = 0.0;
  for (int list = 0; list < 10000; ++list) {
    const int n = 1 + int(rng() % 24);
    const double s = std::exp(4.0 * u(rng));
    std::vector<RaySegment> segs(n);
    std::vector<Vec3> colors(n), normals(n);
    double t = u(rng);
    for (int i = 0; i < n; ++i) {
      segs[i].t_in = t;
      t += 0.01 + 0.2 * u(rng);
      segs[i].t_out = t;
      segs[i].f_in = g(rng);
      segs[i].f_out = segs[i].f_in - 0.5 * g(rng);
      colors[i] = Vec3(u(rng), u(rng), u(rng));
      normals[i] = Vec3(g(rng), g(rng), g(rng));
    }
    const Vec3 bg(u(rng), u(rng), u(rng));
    const PixelRender px = composite(segs, s, colors, normals, bg);

    auto sig = [s](double f) { return 1.0 / (1.0 + std::exp(-s * f)); };
    double T = 1.0, sum_w = 0.0, prod = 1.0, depth = 0.0;
    Vec3 color = Vec3::Zero(), normal = Vec3::Zero();
    for (int i = 0; i < n; ++i) {
      const double a = sig(segs[i].f_in), c = sig(segs[i].f_out);
      const double alpha = std::clamp((a - c) / std::max(a, 1e-7), 0.0, 1.0);
      const double w = T * alpha;
      sum_w += w;
      color += w * colors[i];
      normal += w * normals[i];
      depth += w * 0.5 * (segs[i].t_in + segs[i].t_out);
      T *= 1.0 - alpha;
      prod *= 1.0 - alpha;
    }
    color += T * bg;
    worst_identity = std::max(worst_identity, std::abs((1.0 - sum_w) - prod));
    worst_oracle = std::max({worst_oracle, std::abs(px.transmittance - T), (px.color - color).cwiseAbs().maxCoeff(),
                             (px.normal - normal).cwiseAbs().maxCoeff(), std::abs(px.depth - depth)});
  }
  o.require(worst_identity < 1e-12, fmt("identity error %.3g", worst_identity));
  o.require(worst_oracle < 1e-12, fmt("oracle error %.3g", worst_oracle));
  if (o.pass) o.detail = fmt("identity %.2g, oracle %.2g", worst_identity, worst_oracle);
  return o;
}

Outcome a9_metrics() {
  Outcome o;
  std::mt19937_64 rng(909);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (int pair = 0; pair < 100; ++pair) {
    std::vector<Vec3> a(1 + rng() % 200), b(1 + rng() % 200);
    const Vec3 shift = 0.3 * Vec3(u(rng), u(rng), u(rng));
    for (Vec3& p : a) p = Vec3(u(rng), u(rng), u(rng));
    for (Vec3& p : b) p = Vec3(u(rng), u(rng), u(rng)) + shift;
    const double tau = 0.05 + 0.3 * (u(rng) + 1.0);

    auto nearest = [](const Vec3& p, const std::vector<Vec3>& set) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec3& q : set) best = std::min(best, (p - q).norm());
      return best;
    };
    double ab = 0.0, ba = 0.0, hit_a = 0.0, hit_b = 0.0;
    for (const Vec3& p : a) {
      const double d = nearest(p, b);
      ab += d;
      hit_a += d <= tau;
    }
    for (const Vec3& p : b) {
      const double d = nearest(p, a);
      ba += d;
      hit_b += d <= tau;
    }
    const double cd = 0.5 * (ab / double(a.size()) + ba / double(b.size()));
    const double precision = hit_a / double(a.size()), recall = hit_b / double(b.size());
    const double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    const F1Score f = f1_score(a, b, tau);
    worst = std::max({worst, std::abs(chamfer(a, b) - cd), std::abs(f.precision - precision),
                      std::abs(f.recall - recall), std::abs(f.f1 - f1)});
  }
  o.require(worst < 1e-12, fmt("max error %.3g", worst));
  if (o.pass) o.detail = fmt("max error %.2g", worst);
  return o;
}

}  // namespace

int main() {
  const std::pair<const char*, Outcome (*)()> criteria[] = {
      {"A1 NVS oracle equivalence", a1_nvs},        {"A2 Umeyama recovery", a2_umeyama},
      {"A3 Gradient correctness", a3_gradients},    {"A4 Synthetic-sphere end-to-end", a4_sphere},
      {"A5 Field-preserving subdivision", a5_subdivision}, {"A6 Prune safety", a6_prune},
      {"A7 Schedule conformance", a7_schedule},     {"A8 Compositing identity", a8_compositing},
      {"A9 Metrics oracle", a9_metrics}};
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
