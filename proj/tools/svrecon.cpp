#include "svrecon/config.hpp"
#include "svrecon/error.hpp"
#include "svrecon/geoinit.hpp"
#include "svrecon/io.hpp"
#include "svrecon/meshx.hpp"
#include "svrecon/parallel.hpp"
#include "svrecon/synth.hpp"
#include "svrecon/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitBadInput = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitEmptyMesh = 4;

struct Common {
  int threads = 0;
  bool deterministic = false;

  int resolved_threads() const { return threads > 0 ? threads : svr::default_threads(); }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw svr::InputError("cannot open for writing: " + path);
  out << text;
  if (!out) throw svr::InputError("write failed: " + path);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw svr::InputError("cannot create directory " + dir.string() + ": " + ec.message());
}

// ---- synth ---------------------------------------------------------------

struct SynthArgs {
  std::string shape = "sphere";
  std::string out;
  int views = 16;
  int width = 128;
  int height = 128;
  double focal = 96.0;
  double radius = 3.5;
  bool perturb = false;
  std::uint64_t seed = 1;
  std::size_t gt_samples = 100000;
};

int run_synth(const SynthArgs& a) {
  svr::SynthConfig cfg;
  cfg.shape = svr::make_shape(a.shape);
  cfg.views = a.views;
  cfg.width = a.width;
  cfg.height = a.height;
  cfg.focal = a.focal;
  cfg.camera_radius = a.radius;
  cfg.perturb_poses = a.perturb;
  cfg.seed = a.seed;
  const svr::SyntheticScene scene = svr::make_scene(cfg);

  const fs::path root(a.out);
  for (const char* sub : {"images", "masks", "pointmaps", "depth"}) ensure_dir(root / sub);
  svr::CameraSet set;
  set.cameras = scene.cameras;
  set.bounds = scene.bounds;
  if (a.perturb) set.estimated = scene.pointmaps.estimated;
  for (std::size_t i = 0; i < scene.views.size(); ++i) {
    const svr::ReferenceView& v = scene.views[i];
    const std::string name = svr::view_name(i);
    svr::write_png((root / "images" / (name + ".png")).string(), svr::RgbImage{v.width, v.height, v.rgb});
    svr::GrayImage mask{v.width, v.height, {}};
    mask.pixels = v.mask;
    svr::write_png((root / "masks" / (name + ".png")).string(), mask);
    svr::write_pointmap_ply((root / "pointmaps" / (name + ".ply")).string(), scene.pointmaps.views[i]);
    svr::RgbImage depth{v.width, v.height, {}};
    for (double d : v.depth) depth.pixels.push_back(svr::Vec3::Constant(d));
    svr::write_pfm((root / "depth" / (name + ".pfm")).string(), depth);
  }
  svr::write_cameras_json((root / "cameras.json").string(), set);
  svr::write_obj((root / "gt_mesh.obj").string(), svr::analytic_mesh(scene.shape, scene.bounds, 7));
  svr::write_points_ply((root / "gt_points.ply").string(),
                        svr::surface_samples(scene.shape, scene.bounds, a.gt_samples, a.seed));
  std::printf("wrote %zu views to %s\n", scene.views.size(), a.out.c_str());
  return 0;
}

// ---- init ----------------------------------------------------------------

struct InitArgs {
  std::string scene;
  std::string out;
  std::string report;
  int level = 6;
  bool spherical = false;
  std::vector<double> bounds;
};

svr::SceneBounds resolve_bounds(const svr::CameraSet& cams, const std::vector<double>& flag) {
  if (flag.size() == 4) {
    svr::SceneBounds b{svr::Vec3(flag[0], flag[1], flag[2]), flag[3]};
    b.validate();
    return b;
  }
  if (!cams.bounds) throw svr::InputError("cameras.json has no bounds; pass --bounds x y z edge");
  return *cams.bounds;
}

svr::PointMapSet point_map_set(const svr::SceneData& scene) {
  svr::PointMapSet maps;
  maps.views = scene.pointmaps;
  maps.estimated = scene.cameras.estimated;
  return maps;
}

int run_init(const InitArgs& a, const Common& common) {
  const svr::SceneData scene = svr::load_scene(a.scene, false);
  const svr::SceneBounds bounds = resolve_bounds(scene.cameras, a.bounds);
  if (a.spherical) {
    const svr::OctreeState octree = svr::octree_from_corner_grid(svr::spherical_init(bounds, a.level));
    svr::write_checkpoint(a.out, octree);
    std::printf("spherical init: %zu voxels at level %d\n", octree.size(), a.level);
    return 0;
  }
  svr::InitConfig cfg;
  cfg.level = a.level;
  svr::InitReport rep;
  svr::OctreeState octree;
  try {
    octree = svr::initialize_from_point_maps(bounds, scene.cameras.cameras, point_map_set(scene), cfg, &rep,
                                             common.resolved_threads());
  } catch (const std::invalid_argument& e) {
    throw svr::InputError(e.what());
  }
  svr::write_checkpoint(a.out, octree);

  json j;
  j["aligned"] = rep.aligned;
  j["scale"] = rep.alignment.scale;
  j["R"] = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) j["R"].push_back(rep.alignment.R(r, c));
  j["t"] = {rep.alignment.t.x(), rep.alignment.t.y(), rep.alignment.t.z()};
  j["input_points"] = rep.input_points;
  j["subsampled_points"] = rep.subsampled_points;
  j["carve"] = {{"total", rep.carve.total},
                {"flipped_visible", rep.carve.flipped_visible},
                {"flipped_unseen", rep.carve.flipped_unseen},
                {"remaining_negative", rep.carve.remaining_negative}};
  j["voxels"] = octree.size();
  if (!a.report.empty()) write_text(a.report, j.dump(2) + "\n");
  if (rep.aligned) {
    std::printf("alignment: scale %.9g from %zu camera centers\n", rep.alignment.scale, scene.cameras.cameras.size());
  } else {
    std::printf("alignment: identity (no estimated poses)\n");
  }
  std::printf("init: %zu points, %zu after subsampling, %zu/%zu corners flipped (%zu visible, %zu unseen)\n",
              rep.input_points, rep.subsampled_points, rep.carve.flipped_visible + rep.carve.flipped_unseen,
              rep.carve.total, rep.carve.flipped_visible, rep.carve.flipped_unseen);
  return 0;
}

// ---- train ---------------------------------------------------------------

struct TrainArgs {
  std::string scene;
  std::string checkpoint;
  std::string out;
  std::string profile;
  std::string config;
  std::string log;
  long iters = 0;
  int rays = 0;
  std::uint64_t seed = 0;
  double lr_geo_scale = 0.0;
  double lr_color = 0.0;
  int l_cap = 0;
  long checkpoint_every = 0;
  long resume_iteration = 0;
  bool baseline = false;
  bool print_config = false;
};

svr::TrainConfig resolve_train_config(const TrainArgs& a, const CLI::App& cmd) {
  std::optional<svr::Profile> profile;
  try {
    if (!a.profile.empty()) profile = svr::parse_profile(a.profile);
    else if (a.baseline) profile = svr::Profile::baseline;
  } catch (const std::invalid_argument& e) {
    throw svr::InputError(e.what());
  }
  svr::TrainConfig c = a.config.empty() ? svr::default_config(profile.value_or(svr::Profile::synthetic))
                                        : svr::load_train_config(a.config, profile);
  if (cmd.count("--iters")) c.iterations = a.iters;
  if (cmd.count("--rays")) c.rays_per_batch = a.rays;
  if (cmd.count("--seed")) c.seed = a.seed;
  if (cmd.count("--lr-geo-scale")) c.lr_geo_scale = a.lr_geo_scale;
  if (cmd.count("--lr-color")) c.lr_color = a.lr_color;
  if (cmd.count("--l-cap")) c.l_cap = a.l_cap;
  if (cmd.count("--resume-iteration")) c.start_iteration = a.resume_iteration;
  if (a.baseline) {
    c.profile = svr::Profile::baseline;
    c.weights = svr::schedule_for(svr::Profile::baseline);
  }
  return c;
}

std::vector<svr::TrainingView> scene_views(const svr::SceneData& scene, double confidence_threshold) {
  // Point maps in an estimated frame are brought into the camera frame first.
  svr::PointMapSet maps = point_map_set(scene);
  const auto& est = scene.cameras.estimated;
  const bool have_poses = !est.empty() && std::all_of(est.begin(), est.end(), [](const auto& p) { return p.has_value(); });
  if (have_poses) {
    std::vector<svr::Vec3> src, dst;
    for (std::size_t i = 0; i < est.size(); ++i) {
      src.push_back(svr::camera_center(est[i]->R, est[i]->t));
      dst.push_back(scene.cameras.cameras[i].center());
    }
    maps = svr::warp_point_maps(maps, svr::umeyama_align(src, dst));
  }
  std::vector<std::vector<svr::Vec3>> images;
  std::vector<std::vector<std::uint8_t>> masks;
  for (const auto& im : scene.images) images.push_back(im.pixels);
  for (const auto& m : scene.masks) masks.push_back(m.pixels);
  return svr::make_training_views(scene.cameras.cameras, images, masks, maps.views, confidence_threshold);
}

int run_train(const TrainArgs& a, const CLI::App& cmd, const Common& common) {
  svr::TrainConfig cfg = resolve_train_config(a, cmd);
  cfg.threads = common.resolved_threads();
  if (a.print_config) {
    std::printf("%s\n", svr::train_config_to_json(cfg).c_str());
    return 0;
  }
  if (a.scene.empty() || a.checkpoint.empty() || a.out.empty()) {
    throw svr::InputError("train needs --scene, --checkpoint and --out");
  }
  svr::OctreeState octree = svr::read_checkpoint(a.checkpoint);
  if (cfg.iterations <= cfg.start_iteration) {
    svr::write_checkpoint(a.out, octree);
    std::printf("no iterations to run; checkpoint copied to %s\n", a.out.c_str());
    return 0;
  }
  const svr::SceneData scene = svr::load_scene(a.scene, true);
  std::vector<svr::TrainingView> views;
  try {
    views = scene_views(scene, cfg.confidence_threshold);
  } catch (const std::invalid_argument& e) {
    throw svr::InputError(e.what());
  }

  const std::string log_path = a.log.empty() ? a.out + ".log.ndjson" : a.log;
  std::ofstream log(log_path, std::ios::binary | (cfg.start_iteration > 0 ? std::ios::app : std::ios::trunc));
  if (!log) throw svr::InputError("cannot open log: " + log_path);

  svr::Trainer trainer(std::move(octree), std::move(views), cfg);
  try {
    trainer.run([&](const svr::IterationLog& it) {
      log << svr::to_json_line(it) << '\n';
      if (a.checkpoint_every > 0 && (it.iteration + 1) % a.checkpoint_every == 0) {
        char name[32];
        std::snprintf(name, sizeof(name), ".iter_%06ld", it.iteration + 1);
        svr::write_checkpoint(a.out + name, trainer.octree());
      }
      if (it.iteration % 100 == 0) {
        std::printf("iter %ld  loss %.6g  photo %.6g  log_s %.4f  level %d  voxels %zu\n", it.iteration,
                    it.report.total(), it.report.photo, it.log_s, it.level, it.voxels);
        std::fflush(stdout);
      }
    });
  } catch (const svr::NumericalAbort& e) {
    json dump{{"iteration", e.iteration()}, {"term", e.term()}, {"voxel", e.voxel()}, {"message", e.what()}};
    write_text(a.out + ".abort.json", dump.dump(2) + "\n");
    svr::write_checkpoint(a.out + ".abort", trainer.octree());
    throw;
  }
  svr::write_checkpoint(a.out, trainer.octree());
  std::printf("final log_s %.6f, thickness %.6g, %zu voxels -> %s\n", trainer.sharpness().log_s(),
              trainer.sharpness().thickness(), trainer.octree().size(), a.out.c_str());
  return 0;
}

// ---- extract -------------------------------------------------------------

struct ExtractArgs {
  std::string checkpoint;
  std::string out;
  int level = 0;
  double outside = 0.0;
};

int run_extract(const ExtractArgs& a) {
  const svr::OctreeState octree = svr::read_checkpoint(a.checkpoint);
  const int finest = octree.finest_level();
  const int level = a.level > 0 ? a.level : finest;
  // Without a stored sharpness, fall back to l(s0) = 2 h at the finest level.
  const double outside = a.outside > 0.0 ? a.outside : 2.0 * octree.bounds().cell_size(finest);
  svr::ExtractReport rep;
  svr::Mesh mesh;
  try {
    mesh = svr::marching_cubes(octree, level, outside, &rep);
  } catch (const std::domain_error& e) {
    throw svr::InputError(e.what());
  }
  fs::path base(a.out);
  if (base.extension() == ".obj" || base.extension() == ".ply") base.replace_extension();
  svr::write_obj(base.string() + ".obj", mesh);
  svr::write_mesh_ply(base.string() + ".ply", mesh);
  if (mesh.empty()) {
    std::fprintf(stderr, "warning: extracted mesh is empty (no zero crossing at level %d)\n", level);
    return kExitEmptyMesh;
  }
  std::printf("mesh: %zu vertices, %zu faces at level %d -> %s.{obj,ply}\n", mesh.vertices.size(), mesh.faces.size(),
              level, base.string().c_str());
  return 0;
}

// ---- eval ----------------------------------------------------------------

struct EvalArgs {
  std::string mesh;
  std::string gt;
  std::string out;
  double threshold = 0.05;
  std::size_t samples = 100000;
  std::uint64_t seed = 0;
};

std::vector<svr::Vec3> eval_points(const std::string& path, std::size_t n, std::uint64_t seed) {
  const svr::Mesh m = svr::read_mesh(path);
  if (m.faces.empty()) {
    if (m.vertices.empty()) throw svr::InputError("no points in " + path);
    return m.vertices;
  }
  return svr::sample_surface(m, n, seed);
}

int run_eval(const EvalArgs& a) {
  const auto pred = eval_points(a.mesh, a.samples, a.seed);
  const auto gt = eval_points(a.gt, a.samples, a.seed);
  if (!(a.threshold > 0.0)) throw svr::InputError("threshold must be positive");
  const double cd = svr::chamfer(pred, gt);
  const svr::F1Score f = svr::f1_score(pred, gt, a.threshold);
  nlohmann::ordered_json j;
  j["chamfer"] = cd;
  j["precision"] = f.precision;
  j["recall"] = f.recall;
  j["f1"] = f.f1;
  j["threshold"] = a.threshold;
  const std::string text = j.dump(2) + "\n";
  if (a.out.empty()) {
    std::fputs(text.c_str(), stdout);
  } else {
    write_text(a.out, text);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-voxel SDF surface reconstruction"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--threads", common.threads, "Worker threads (default: SVRECON_THREADS or all cores)")
      ->check(CLI::NonNegativeNumber);
  app.add_flag("--deterministic", common.deterministic,
               "Request reproducible output (always the case; accepted for scripts)");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Render a synthetic scene with ground truth");
  synth->add_option("--shape", sa.shape, "sphere, box or torus")->check(CLI::IsMember({"sphere", "box", "torus"}));
  synth->add_option("--views", sa.views, "Total views (ring plus two elevated)")->check(CLI::Range(4, 1000));
  synth->add_option("--width", sa.width)->check(CLI::Range(8, 8192));
  synth->add_option("--height", sa.height)->check(CLI::Range(8, 8192));
  synth->add_option("--focal", sa.focal)->check(CLI::PositiveNumber);
  synth->add_option("--radius", sa.radius, "Camera distance from the cube center")->check(CLI::PositiveNumber);
  synth->add_flag("--perturb-poses", sa.perturb, "Emit point maps and poses in a random similarity frame");
  synth->add_option("--seed", sa.seed);
  synth->add_option("--gt-samples", sa.gt_samples, "Surface samples in gt_points.ply");
  synth->add_option("--out", sa.out, "Scene directory")->required();

  InitArgs ia;
  auto* init = app.add_subcommand("init", "Build the level-6 SDF from point maps");
  init->add_option("--scene", ia.scene)->required();
  init->add_option("--out", ia.out, "Output checkpoint")->required();
  init->add_option("--level", ia.level)->check(CLI::Range(1, 8));
  init->add_option("--report", ia.report, "Write the init report as JSON");
  init->add_option("--bounds", ia.bounds, "x_min y_min z_min edge")->expected(4);
  init->add_flag("--spherical", ia.spherical, "Approximate spherical zero level set instead of point maps");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Optimize a checkpoint against a scene");
  train->add_option("--scene", ta.scene);
  train->add_option("--checkpoint", ta.checkpoint, "Input checkpoint");
  train->add_option("--out", ta.out, "Output checkpoint");
  train->add_option("--profile", ta.profile, "dtu, tnt, synthetic or baseline")
      ->check(CLI::IsMember({"dtu", "tnt", "synthetic", "baseline"}));
  train->add_option("--config", ta.config, "JSON config mirroring the training options");
  train->add_option("--log", ta.log, "NDJSON loss log (default: <out>.log.ndjson)");
  train->add_option("--iters", ta.iters)->check(CLI::NonNegativeNumber);
  train->add_option("--rays", ta.rays)->check(CLI::PositiveNumber);
  train->add_option("--seed", ta.seed);
  train->add_option("--lr-geo-scale", ta.lr_geo_scale);
  train->add_option("--lr-color", ta.lr_color);
  train->add_option("--l-cap", ta.l_cap);
  train->add_option("--checkpoint-every", ta.checkpoint_every, "Write <out>.iter_NNNNNN every N iterations");
  train->add_option("--resume-iteration", ta.resume_iteration, "Iteration the input checkpoint was saved at");
  train->add_flag("--baseline-ray-eikonal", ta.baseline, "Ray Eikonal baseline without continuity losses");
  train->add_flag("--print-config", ta.print_config, "Print the resolved config and exit");

  ExtractArgs ea;
  auto* extract = app.add_subcommand("extract", "Marching cubes to OBJ and PLY");
  extract->add_option("--checkpoint", ea.checkpoint)->required();
  extract->add_option("--out", ea.out, "Output path without extension")->required();
  extract->add_option("--level", ea.level, "Lattice level (default: finest leaf level)");
  extract->add_option("--outside-value", ea.outside, "Value for nodes without a covering voxel");

  EvalArgs va;
  auto* eval = app.add_subcommand("eval", "Chamfer and F1 between two meshes or point sets");
  eval->add_option("--mesh", va.mesh)->required();
  eval->add_option("--gt", va.gt)->required();
  eval->add_option("--threshold", va.threshold);
  eval->add_option("--samples", va.samples);
  eval->add_option("--seed", va.seed);
  eval->add_option("--out", va.out, "Metrics JSON (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitBadInput;
  }

  try {
    if (*synth) return run_synth(sa);
    if (*init) return run_init(ia, common);
    if (*train) return run_train(ta, *train, common);
    if (*extract) return run_extract(ea);
    if (*eval) return run_eval(va);
  } catch (const svr::InputError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitBadInput;
  } catch (const svr::NumericalAbort& e) {
    std::fprintf(stderr, "numerical abort: %s (iteration %ld, term %s, voxel %ld)\n", e.what(), e.iteration(),
                 e.term().c_str(), e.voxel());
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitBadInput;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
  return 0;
}
