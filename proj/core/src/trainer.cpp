#include "svrecon/trainer.hpp"

#include "svrecon/error.hpp"
#include "svrecon/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace svr {

namespace {

constexpr std::size_t kRaysPerBlock = 64;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tau, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (tau + 1) + 0xBF58476D1CE4E5B9ull * stream;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

struct RayCache {
  std::vector<RaySegment> segments;
  std::vector<double> w;
  PixelRender px;
  double ray_eikonal = 0.0;
  double dmean = 0.0;
  double dmed = 0.0;
  std::vector<double> dw;  // lambda-weighted depth spread gradients
  std::vector<SegmentGrad> re;
};

void validate_schedule(const TrainConfig& c) {
  if (c.prune_every <= 0 || c.subdivide_every <= 0) throw std::invalid_argument("train config: cadences must be > 0");
  if (c.iterations < 0) throw std::invalid_argument("train config: iterations must be >= 0");
  if (c.rays_per_batch <= 0) throw std::invalid_argument("train config: rays per batch must be > 0");
  if (c.level_schedule.empty()) throw std::invalid_argument("train config: empty level schedule");
  if (c.level_schedule.front().iteration != 0) throw std::invalid_argument("train config: level schedule must start at 0");
  for (std::size_t i = 1; i < c.level_schedule.size(); ++i) {
    if (c.level_schedule[i].iteration <= c.level_schedule[i - 1].iteration ||
        c.level_schedule[i].level < c.level_schedule[i - 1].level) {
      throw std::invalid_argument("train config: level schedule must be increasing in iteration, nondecreasing in level");
    }
  }
}

}  // namespace

TrainConfig default_config(Profile profile) {
  TrainConfig c;
  c.profile = profile;
  c.weights = schedule_for(profile);
  switch (profile) {
    case Profile::dtu:
      c.iterations = 8000;
      c.level_schedule = {{0, 6}, {2000, 7}, {4000, 8}, {6000, 9}};
      c.l_cap = 9;
      break;
    case Profile::tnt:
      c.iterations = 10000;
      c.level_schedule = {{0, 6}, {2000, 7}, {4000, 8}, {6000, 9}, {8000, 10}};
      c.l_cap = 9;
      break;
    case Profile::synthetic:
    case Profile::baseline:
      c.iterations = 2000;
      c.level_schedule = {{0, 6}, {1000, 7}};
      c.l_cap = 7;
      break;
  }
  return c;
}

int target_level(const std::vector<LevelStep>& schedule, long tau) {
  if (schedule.empty()) throw std::invalid_argument("target_level: empty schedule");
  int level = schedule.front().level;
  for (const LevelStep& s : schedule) {
    if (s.iteration > tau) break;
    level = s.level;
  }
  return level;
}

double level_progress(const TrainConfig& config, long tau) {
  const int level = target_level(config.level_schedule, tau);
  long start = 0;
  long end = config.iterations;
  for (const LevelStep& s : config.level_schedule) {
    if (s.level < level) continue;
    if (s.level == level) {
      if (s.iteration <= tau && start < s.iteration && target_level(config.level_schedule, s.iteration - 1) < level) {
        start = s.iteration;
      }
      continue;
    }
    end = s.iteration;
    break;
  }
  if (end - 1 <= start) return 1.0;
  return std::clamp(static_cast<double>(tau - start) / static_cast<double>(end - 1 - start), 0.0, 1.0);
}

void advance_sharpness(SharpnessSchedule& sharpness, const TrainConfig& config, const SceneBounds& bounds, long tau) {
  const int level = target_level(config.level_schedule, tau);
  if (level > sharpness.level()) {
    sharpness.change_level(bounds.cell_size(sharpness.level()), bounds.cell_size(level), level);
  }
  sharpness.set_progress(level_progress(config, tau));
}

SharpnessSchedule initial_sharpness(const TrainConfig& config, const SceneBounds& bounds) {
  const int level = target_level(config.level_schedule, 0);
  if (config.initial_log_s) return SharpnessSchedule(*config.initial_log_s, level, config.ramp_rate);
  return SharpnessSchedule::for_cell_size(bounds.cell_size(level), level, config.ramp_rate);
}

SharpnessSchedule sharpness_at(const TrainConfig& config, const SceneBounds& bounds, long tau) {
  validate_schedule(config);
  SharpnessSchedule s = initial_sharpness(config, bounds);
  for (long t = 0; t <= tau; ++t) advance_sharpness(s, config, bounds, t);
  return s;
}

LossReport evaluate_loss(const OctreeState& octree, const VoxelTree& tree, const RayBatch& batch,
                         const RegularizerInputs& reg, const LossWeights& weights, const EvalOptions& options,
                         GradBuffer* grads, VoxelStats* photo_stats) {
  const std::size_t n = batch.rays.size();
  if (batch.target.size() != n) throw std::invalid_argument("evaluate_loss: target count mismatch");
  if (!batch.mask.empty() && batch.mask.size() != n) throw std::invalid_argument("evaluate_loss: mask count mismatch");
  if (!batch.prior_valid.empty() && (batch.prior_valid.size() != n || batch.prior_normal.size() != n)) {
    throw std::invalid_argument("evaluate_loss: prior count mismatch");
  }
  if (tree.octree() != &octree) throw std::logic_error("evaluate_loss: tree built over another octree");
  if (grads && grads->size() != octree.size()) throw std::invalid_argument("evaluate_loss: gradient buffer size");

  LossReport report;
  report.weights = weights;
  const double s = options.s;
  const double inv_n = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
  const bool use_normal = weights.normal > 0.0 && !batch.prior_valid.empty();
  const bool use_mask = weights.mask > 0.0 && !batch.mask.empty();

  // Forward.
  std::vector<RayCache> cache(n);
  const std::size_t blocks = (n + kRaysPerBlock - 1) / kRaysPerBlock;
  parallel_for_blocks(blocks, options.threads, [&](std::size_t b) {
    std::vector<Vec3> colors, normals;
    std::vector<double> t;
    for (std::size_t r = b * kRaysPerBlock; r < std::min(n, (b + 1) * kRaysPerBlock); ++r) {
      RayCache& rc = cache[r];
      tree.traverse(batch.rays[r], 0.0, std::numeric_limits<double>::infinity(), rc.segments);
      double T = 1.0;
      for (std::size_t i = 0; i < rc.segments.size(); ++i) {
        const double a = alpha_from_sdf(rc.segments[i].f_in, rc.segments[i].f_out, s);
        rc.w.push_back(T * a);
        T *= 1.0 - a;
        if (T < options.early_stop_transmittance) {
          rc.segments.resize(i + 1);
          break;
        }
      }
      colors.clear();
      normals.clear();
      t.clear();
      for (const RaySegment& seg : rc.segments) {
        const Voxel& v = octree[seg.voxel];
        colors.emplace_back(v.color[0], v.color[1], v.color[2]);
        if (use_normal) normals.push_back(normal_at_center(v, octree.bounds()).value_or(Vec3::Zero()));
        t.push_back(seg.t_mid());
      }
      rc.px = composite(rc.segments, s, colors, normals, options.background);
      if (weights.ray_eikonal > 0.0) rc.ray_eikonal = ray_eikonal(rc.segments, rc.w, grads ? &rc.re : nullptr);
      if (weights.dmean > 0.0 || weights.dmed > 0.0) {
        rc.dw.assign(rc.segments.size(), 0.0);
        std::vector<double> d;
        if (weights.dmean > 0.0) {
          rc.dmean = depth_spread_mean(t, rc.w, grads ? &d : nullptr);
          for (std::size_t i = 0; i < d.size(); ++i) rc.dw[i] += weights.dmean * inv_n * d[i];
        }
        if (weights.dmed > 0.0) {
          rc.dmed = depth_spread_median(t, rc.w, grads ? &d : nullptr);
          for (std::size_t i = 0; i < d.size(); ++i) rc.dw[i] += weights.dmed * inv_n * d[i];
        }
      }
    }
  });

  std::vector<Vec3> rendered(n), rendered_n(n);
  std::vector<double> trans(n);
  for (std::size_t r = 0; r < n; ++r) {
    rendered[r] = cache[r].px.color;
    rendered_n[r] = cache[r].px.normal;
    trans[r] = cache[r].px.transmittance;
    report.ray_eikonal += cache[r].ray_eikonal * inv_n;
    report.dmean += cache[r].dmean * inv_n;
    report.dmed += cache[r].dmed * inv_n;
  }
  const ImageLoss photo = photometric(rendered, batch.target);
  report.photo = photo.value;
  ImageLoss nloss, mloss;
  if (use_normal) {
    nloss = normal_loss(rendered_n, batch.prior_normal, batch.prior_valid);
    report.normal = nloss.value;
    report.normal_mask_empty = nloss.empty;
  }
  if (use_mask) {
    mloss = mask_loss(trans, batch.mask);
    report.mask = mloss.value;
  }

  // Backward through the render path: per-block records merged in block order.
  if (grads || photo_stats) {
    std::vector<std::vector<SegmentParamGrad>> records(blocks), photo_records(blocks);
    parallel_for_blocks(blocks, options.threads, [&](std::size_t b) {
      for (std::size_t r = b * kRaysPerBlock; r < std::min(n, (b + 1) * kRaysPerBlock); ++r) {
        const RayCache& rc = cache[r];
        if (rc.segments.empty()) continue;
        RenderUpstream up;
        up.g_color = photo.empty ? Vec3::Zero() : Vec3(weights.photo * photo.grad[r]);
        up.g_trans = up.g_color.dot(options.background);
        if (photo_stats) {
          for (auto& g : backprop_render(octree, rc.segments, s, up)) photo_records[b].push_back(g);
        }
        if (!grads) continue;
        if (use_normal && !nloss.empty) up.g_normal = weights.normal * nloss.grad[r];
        if (use_mask && !mloss.empty) up.g_trans += weights.mask * mloss.grad_t[r];
        up.g_weight = rc.dw;
        auto segs = backprop_render(octree, rc.segments, s, up);
        for (std::size_t i = 0; i < rc.re.size(); ++i) {
          const double k = weights.ray_eikonal * inv_n;
          for (int c = 0; c < 8; ++c) {
            segs[i].geo[c] += k * (rc.re[i].d_in * rc.segments[i].w_in[c] + rc.re[i].d_out * rc.segments[i].w_out[c]);
          }
        }
        for (auto& g : segs) records[b].push_back(g);
      }
    });
    if (grads) {
      for (const auto& block : records) {
        for (const SegmentParamGrad& g : block) {
          for (int c = 0; c < 8; ++c) grads->geo[g.voxel][c] += g.geo[c];
          for (int c = 0; c < 3; ++c) grads->color[g.voxel][c] += g.color[c];
        }
      }
    }
    if (photo_stats) {
      photo_stats->assign(octree.size(), 0.0);
      for (const auto& block : photo_records) {
        for (const SegmentParamGrad& g : block) {
          double m = 0.0;
          for (double x : g.geo) m += x * x;
          (*photo_stats)[g.voxel] += std::sqrt(m);
        }
      }
    }
  }

  // Regularizers.
  if (reg.index && !reg.samples.empty() && (weights.eikonal > 0.0 || weights.smooth > 0.0)) {
    GradBuffer lattice;
    if (grads) lattice.reset(octree.size());
    GradBuffer* lg = grads ? &lattice : nullptr;
    if (weights.eikonal > 0.0) report.eikonal = eikonal_global(octree, *reg.index, reg.samples, lg, weights.eikonal);
    if (weights.smooth > 0.0) report.smooth = laplacian_smooth(octree, *reg.index, reg.samples, lg, weights.smooth);
    if (grads) {
      grads->add(lattice);
      prolongate_gradients(octree, reg.l_cap, lattice, *grads);
    }
  }
  if (weights.local_eikonal > 0.0 && !reg.local.empty()) {
    report.local_eikonal = eikonal_local(octree, reg.local, reg.local_scale, grads, weights.local_eikonal);
  }
  return report;
}

void OptimState::resize(std::size_t voxels) {
  m_geo.assign(voxels, {});
  v_geo.assign(voxels, {});
  m_color.assign(voxels, {});
  v_color.assign(voxels, {});
}

void OptimState::remap(const Remap& r) {
  auto move = [&](auto& vec) {
    std::remove_reference_t<decltype(vec)> next(r.new_to_old.size());
    for (std::size_t i = 0; i < next.size(); ++i) {
      if (r.new_to_old[i] != kNoVoxel) next[i] = vec.at(r.new_to_old[i]);
    }
    vec = std::move(next);
  };
  move(m_geo);
  move(v_geo);
  move(m_color);
  move(v_color);
}

void apply_update(OctreeState& octree, const GradBuffer& grads, OptimState& optim, const AdamParams& p) {
  if (grads.size() != octree.size() || optim.m_geo.size() != octree.size()) {
    throw std::logic_error("apply_update: state shapes do not match the octree");
  }
  ++optim.step;
  const double bc1 = 1.0 - std::pow(p.beta1, static_cast<double>(optim.step));
  const double bc2 = 1.0 - std::pow(p.beta2, static_cast<double>(optim.step));
  auto adam = [&](double& param, double g, double& m, double& v, double lr) {
    m = p.beta1 * m + (1.0 - p.beta1) * g;
    v = p.beta2 * v + (1.0 - p.beta2) * g * g;
    param -= lr * (m / bc1) / (std::sqrt(v / bc2) + p.eps);
  };
  for (VoxelId id = 0; id < octree.size(); ++id) {
    auto& geo = octree.geo(id);
    for (int c = 0; c < 8; ++c) adam(geo[c], grads.geo[id][c], optim.m_geo[id][c], optim.v_geo[id][c], p.lr_geo);
    auto& col = octree.color(id);
    for (int c = 0; c < 3; ++c) {
      adam(col[c], grads.color[id][c], optim.m_color[id][c], optim.v_color[id][c], p.lr_color);
      col[c] = std::clamp(col[c], 0.0, 1.0);
    }
  }
}

std::string to_json_line(const IterationLog& log) {
  const LossReport& r = log.report;
  nlohmann::ordered_json j;
  j["iter"] = log.iteration;
  j["total"] = r.total();
  j["photo"] = r.photo;
  j["normal"] = r.normal;
  j["eikonal"] = r.eikonal;
  j["local_eikonal"] = r.local_eikonal;
  j["smooth"] = r.smooth;
  j["mask"] = r.mask;
  j["ray_eikonal"] = r.ray_eikonal;
  j["dmean"] = r.dmean;
  j["dmed"] = r.dmed;
  j["lambda"] = {{"photo", r.weights.photo}, {"normal", r.weights.normal}, {"eikonal", r.weights.eikonal},
                 {"local_eikonal", r.weights.local_eikonal}, {"smooth", r.weights.smooth},
                 {"mask", r.weights.mask}, {"ray_eikonal", r.weights.ray_eikonal},
                 {"dmean", r.weights.dmean}, {"dmed", r.weights.dmed}};
  j["log_s"] = log.log_s;
  j["level"] = log.level;
  j["voxels"] = log.voxels;
  j["pruned"] = log.pruned;
  j["split"] = log.split;
  if (r.normal_mask_empty) j["normal_mask_empty"] = true;
  return j.dump();
}

Trainer::Trainer(OctreeState octree, std::vector<TrainingView> views, TrainConfig config)
    : octree_(std::move(octree)), views_(std::move(views)), config_(std::move(config)) {
  validate_schedule(config_);
  if (views_.empty()) throw std::invalid_argument("trainer: no training views");
  for (const TrainingView& v : views_) {
    const std::size_t px = static_cast<std::size_t>(v.camera.width) * v.camera.height;
    if (v.rgb.size() != px) throw std::invalid_argument("trainer: image size does not match its camera");
    if (!v.mask.empty() && v.mask.size() != px) throw std::invalid_argument("trainer: mask size mismatch");
    if (!v.prior.valid.empty() && v.prior.valid.size() != px) throw std::invalid_argument("trainer: prior size mismatch");
  }
  sharpness_ = initial_sharpness(config_, octree_.bounds());
  level_ = sharpness_.level();
  if (config_.start_iteration > 0) {
    sharpness_ = sharpness_at(config_, octree_.bounds(), config_.start_iteration - 1);
    level_ = sharpness_.level();
    tau_ = config_.start_iteration;
  }
  optim_.resize(octree_.size());
  stats_.assign(octree_.size(), 0.0);
  rebuild_structures();
}

void Trainer::rebuild_structures() {
  tree_ = VoxelTree(octree_);
  routing_ = route_regularizers(octree_, config_.l_cap);
  lattice_ = AssociationIndex::rebuild(octree_, routing_.lattice, routing_.lattice_level, config_.threads);
}

void Trainer::adapt(std::size_t& pruned, std::size_t& split, bool force_split) {
  bool changed = false;
  const double s = sharpness_.s();
  if (tau_ % config_.prune_every == 0) {
    PruneResult pr = prune(octree_, s, PruneConfig{config_.kappa});
    if (!pr.removed.empty()) {
      pruned = pr.removed.size();
      optim_.remap(pr.remap);
      std::vector<double> next(pr.remap.new_to_old.size(), 0.0);
      for (std::size_t i = 0; i < next.size(); ++i) {
        if (pr.remap.new_to_old[i] != kNoVoxel) next[i] = stats_[pr.remap.new_to_old[i]];
      }
      stats_ = std::move(next);
      octree_ = std::move(pr.octree);
      changed = true;
    }
  }
  if (force_split || tau_ % config_.subdivide_every == 0) {
    SubdivideConfig sc;
    sc.target_level = level_;
    sc.l_cap = config_.l_cap;
    sc.top_fraction = config_.top_fraction;
    SubdivideResult sr = subdivide(octree_, s, sc, stats_);
    if (!sr.split.empty()) {
      split = sr.split.size();
      optim_.remap(sr.remap);
      std::vector<double> next(sr.remap.new_to_old.size(), 0.0);
      for (std::size_t i = 0; i < next.size(); ++i) {
        if (sr.remap.new_to_old[i] != kNoVoxel) next[i] = stats_[sr.remap.new_to_old[i]];
      }
      stats_ = std::move(next);
      octree_ = std::move(sr.octree);
      changed = true;
    }
  }
  if (changed) rebuild_structures();
}

RayBatch Trainer::sample_batch(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  const TrainingView& view = views_[std::uniform_int_distribution<std::size_t>(0, views_.size() - 1)(rng)];
  const std::size_t px = static_cast<std::size_t>(view.camera.width) * view.camera.height;
  std::uniform_int_distribution<std::size_t> pick(0, px - 1);
  RayBatch batch;
  const auto n = static_cast<std::size_t>(config_.rays_per_batch);
  batch.rays.reserve(n);
  batch.target.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t idx = pick(rng);
    const int u = static_cast<int>(idx % view.camera.width);
    const int v = static_cast<int>(idx / view.camera.width);
    batch.rays.push_back(view.camera.pixel_ray(u, v));
    batch.target.push_back(view.rgb[idx]);
    if (!view.mask.empty()) batch.mask.push_back(view.mask[idx]);
    if (!view.prior.valid.empty()) {
      batch.prior_normal.push_back(view.prior.normals[idx]);
      batch.prior_valid.push_back(view.prior.valid[idx]);
    }
  }
  return batch;
}

IterationLog Trainer::step() {
  IterationLog log;
  log.iteration = tau_;
  const int prev_level = sharpness_.level();
  advance_sharpness(sharpness_, config_, octree_.bounds(), tau_);
  level_ = sharpness_.level();
  adapt(log.pruned, log.split, level_ > prev_level);

  const LossWeights weights = weight_schedule(tau_, config_.weights);
  const RayBatch batch = sample_batch(mix_seed(config_.seed, tau_, 0));
  RegularizerInputs reg;
  reg.index = &lattice_;
  reg.l_cap = config_.l_cap;
  if (weights.eikonal > 0.0 || weights.smooth > 0.0) {
    reg.samples = sample_cells(lattice_, config_.regularizer_samples, mix_seed(config_.seed, tau_, 1));
  }
  if (weights.local_eikonal > 0.0) {
    reg.local = select_subset(routing_.local, config_.local_eikonal_probability, mix_seed(config_.seed, tau_, 2));
  }
  EvalOptions opt;
  opt.s = sharpness_.s();
  opt.background = config_.background;
  opt.early_stop_transmittance = config_.early_stop_transmittance;
  opt.threads = config_.threads;

  GradBuffer grads(octree_.size());
  const bool gate = level_ >= config_.l_cap && config_.level_schedule.back().level > config_.l_cap;
  VoxelStats photo;
  log.report = evaluate_loss(octree_, tree_, batch, reg, weights, opt, &grads, gate ? &photo : nullptr);

  const LossReport& r = log.report;
  const std::pair<const char*, double> terms[] = {
      {"photo", r.photo}, {"normal", r.normal}, {"eikonal", r.eikonal}, {"local_eikonal", r.local_eikonal},
      {"smooth", r.smooth}, {"mask", r.mask}, {"ray_eikonal", r.ray_eikonal}, {"dmean", r.dmean}, {"dmed", r.dmed}};
  for (const auto& [name, value] : terms) {
    if (!std::isfinite(value)) {
      throw NumericalAbort("non-finite loss term " + std::string(name) + " at iteration " + std::to_string(tau_),
                           tau_, name, -1);
    }
  }
  if (!grads.all_finite()) {
    long bad = -1;
    for (std::size_t id = 0; id < grads.size() && bad < 0; ++id) {
      for (double g : grads.geo[id]) bad = std::isfinite(g) ? bad : static_cast<long>(id);
      for (double g : grads.color[id]) bad = std::isfinite(g) ? bad : static_cast<long>(id);
    }
    throw NumericalAbort("non-finite gradient at iteration " + std::to_string(tau_) + ", voxel " + std::to_string(bad),
                         tau_, "gradient", bad);
  }
  if (gate) {
    for (std::size_t i = 0; i < stats_.size(); ++i) {
      stats_[i] = config_.stat_decay * stats_[i] + (1.0 - config_.stat_decay) * photo[i];
    }
  }

  AdamParams ap;
  ap.lr_geo = config_.lr_geo_scale * octree_.bounds().cell_size(level_);
  ap.lr_color = config_.lr_color;
  ap.beta1 = config_.beta1;
  ap.beta2 = config_.beta2;
  ap.eps = config_.adam_eps;
  apply_update(octree_, grads, optim_, ap);

  log.log_s = sharpness_.log_s();
  log.s = sharpness_.s();
  log.level = level_;
  log.voxels = octree_.size();
  log_s_trace_.push_back(log.log_s);
  ++tau_;
  return log;
}

void Trainer::run(const std::function<void(const IterationLog&)>& on_iteration) {
  while (tau_ < config_.iterations) {
    const IterationLog log = step();
    if (on_iteration) on_iteration(log);
  }
}

std::vector<TrainingView> make_training_views(const std::vector<CameraModel>& cameras,
                                              const std::vector<std::vector<Vec3>>& images,
                                              const std::vector<std::vector<std::uint8_t>>& masks,
                                              const std::vector<PointMap>& pointmaps, double confidence_threshold) {
  if (images.size() != cameras.size()) throw std::invalid_argument("training views: image count mismatch");
  std::vector<TrainingView> views;
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    TrainingView v;
    v.camera = cameras[i];
    v.rgb = images[i];
    if (i < masks.size()) v.mask = masks[i];
    if (i < pointmaps.size() && pointmaps[i].width == cameras[i].width && pointmaps[i].height == cameras[i].height) {
      v.prior = normal_prior_from_pointmap(pointmaps[i], cameras[i].center(), confidence_threshold);
    }
    views.push_back(std::move(v));
  }
  return views;
}

}  // namespace svr
