#include "svrecon/config.hpp"
#include "svrecon/error.hpp"
#include "svrecon/io.hpp"
#include "svrecon/synth.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace svr;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("svrecon_io_" + std::to_string(::getpid())) / name;
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Io, PngRoundTrip) {
  const fs::path d = scratch("png");
  RgbImage img;
  img.width = 5;
  img.height = 3;
  for (int i = 0; i < 15; ++i) img.pixels.push_back(Vec3(i / 14.0, 1.0 - i / 14.0, 0.5));
  write_png((d / "a.png").string(), img);
  const RgbImage back = read_png_rgb((d / "a.png").string());
  ASSERT_EQ(back.width, 5);
  ASSERT_EQ(back.height, 3);
  for (int i = 0; i < 15; ++i) EXPECT_LT((back.pixels[i] - img.pixels[i]).cwiseAbs().maxCoeff(), 0.5 / 255 + 1e-12);
  GrayImage m;
  m.width = 4;
  m.height = 2;
  m.pixels = {0, 255, 7, 0, 0, 0, 1, 255};
  write_png((d / "m.png").string(), m);
  const std::vector<std::uint8_t> binary{0, 1, 1, 0, 0, 0, 1, 1};
  EXPECT_EQ(read_png_gray((d / "m.png").string()).pixels, binary);
  EXPECT_THROW(read_png_rgb((d / "missing.png").string()), InputError);
}

TEST(Io, PfmRoundTrip) {
  const fs::path d = scratch("pfm");
  RgbImage img;
  img.width = 3;
  img.height = 2;
  for (int i = 0; i < 6; ++i) img.pixels.push_back(Vec3(0.25 * i, -1.5, 1e3));
  write_pfm((d / "a.pfm").string(), img);
  const RgbImage back = read_pfm((d / "a.pfm").string());
  EXPECT_EQ(back.pixels, img.pixels);
}

TEST(Io, PointMapRoundTripIsExact) {
  const fs::path d = scratch("ply");
  const CameraModel cam = look_at(Vec3(0, 0, -3.5), Vec3::Zero(), Vec3(0, -1, 0), 16, 12, 12.0);
  const ReferenceView v = render_reference(make_shape("sphere"), cam);
  PointMap pm = v.pointmap;
  for (Vec3& p : pm.points)
    for (int k = 0; k < 3; ++k) p[k] = double(float(p[k]));
  write_pointmap_ply((d / "p.ply").string(), pm);
  const PointMap back = read_pointmap_ply((d / "p.ply").string());
  EXPECT_EQ(back.width, 16);
  EXPECT_EQ(back.height, 12);
  EXPECT_EQ(back.points, pm.points);
  EXPECT_EQ(back.confidence, pm.confidence);
  std::ofstream((d / "bad.ply").string()) << "ply\nformat ascii 1.0\nend_header\n";
  EXPECT_THROW(read_pointmap_ply((d / "bad.ply").string()), InputError);
}

TEST(Io, CamerasRoundTrip) {
  const fs::path d = scratch("cams");
  CameraSet set;
  set.cameras = camera_ring(3, 3.5, Vec3::Zero(), 32, 24, 20.0);
  set.estimated.assign(set.cameras.size(), std::nullopt);
  Pose p;
  p.R = set.cameras[1].R;
  p.t = Vec3(1, 2, 3);
  set.estimated[1] = p;
  set.bounds = SceneBounds{Vec3::Constant(-2.0), 4.0};
  write_cameras_json((d / "c.json").string(), set);
  const CameraSet back = read_cameras_json((d / "c.json").string());
  ASSERT_EQ(back.cameras.size(), set.cameras.size());
  for (std::size_t i = 0; i < set.cameras.size(); ++i) {
    EXPECT_EQ(back.cameras[i].R, set.cameras[i].R);
    EXPECT_EQ(back.cameras[i].t, set.cameras[i].t);
    EXPECT_EQ(back.cameras[i].K, set.cameras[i].K);
    EXPECT_EQ(back.cameras[i].width, 32);
    EXPECT_EQ(back.estimated[i].has_value(), i == 1);
  }
  EXPECT_EQ(back.estimated[1]->t, p.t);
  ASSERT_TRUE(back.bounds.has_value());
  EXPECT_EQ(back.bounds->edge, 4.0);
  std::ofstream((d / "bad.json").string()) << "{\"views\": [{\"R\": [1, 2]}]}";
  EXPECT_THROW(read_cameras_json((d / "bad.json").string()), InputError);
}

TEST(Io, MeshRoundTrip) {
  const fs::path d = scratch("mesh");
  const Mesh m = analytic_mesh(make_shape("sphere"), SceneBounds{Vec3::Constant(-2.0), 4.0}, 4);
  ASSERT_FALSE(m.empty());
  write_obj((d / "m.obj").string(), m);
  write_mesh_ply((d / "m.ply").string(), m);
  const Mesh a = read_mesh((d / "m.obj").string());
  const Mesh b = read_mesh((d / "m.ply").string());
  EXPECT_EQ(a.faces, m.faces);
  EXPECT_EQ(b.faces, m.faces);
  ASSERT_EQ(b.vertices.size(), m.vertices.size());
  for (std::size_t i = 0; i < m.vertices.size(); ++i) {
    EXPECT_LT((a.vertices[i] - m.vertices[i]).norm(), 1e-6);
    EXPECT_LT((b.vertices[i] - m.vertices[i]).norm(), 1e-6);
  }
  write_points_ply((d / "p.ply").string(), m.vertices);
  const Mesh pts = read_mesh((d / "p.ply").string());
  EXPECT_EQ(pts.vertices.size(), m.vertices.size());
  EXPECT_TRUE(pts.faces.empty());
}

TEST(Io, LoadSceneListsMissingFiles) {
  const fs::path d = scratch("scene");
  try {
    load_scene(d.string());
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("cameras.json"), std::string::npos);
  }
  EXPECT_EQ(view_name(7), "view_007");
}

TEST(Config, PrecedenceProfileThenFile) {
  const TrainConfig dtu = train_config_from_json("{}", Profile::dtu);
  EXPECT_EQ(dtu.iterations, 8000);
  EXPECT_EQ(dtu.weights.normal[0], 0.10);
  const TrainConfig from_doc = train_config_from_json(R"({"profile": "tnt"})");
  EXPECT_EQ(from_doc.profile, Profile::tnt);
  EXPECT_EQ(from_doc.iterations, 10000);
  // The argument profile wins over the document's.
  EXPECT_EQ(train_config_from_json(R"({"profile": "tnt"})", Profile::dtu).profile, Profile::dtu);
  const TrainConfig over = train_config_from_json(
      R"({"profile": "dtu", "iterations": 50, "level_schedule": [[0, 5], [20, 6]], "weights": {"mask": 0.25}})");
  EXPECT_EQ(over.iterations, 50);
  ASSERT_EQ(over.level_schedule.size(), 2u);
  EXPECT_EQ(over.level_schedule[1].iteration, 20);
  EXPECT_EQ(over.level_schedule[1].level, 6);
  EXPECT_EQ(over.weights.mask, 0.25);
  EXPECT_EQ(over.weights.normal[0], 0.10);
  EXPECT_EQ(train_config_from_json("{}").profile, Profile::synthetic);
}

TEST(Config, RejectsBadDocuments) {
  EXPECT_THROW(train_config_from_json(R"({"iteration": 5})"), InputError);
  EXPECT_THROW(train_config_from_json(R"({"iterations": "many"})"), InputError);
  EXPECT_THROW(train_config_from_json(R"({"weights": {"lambda": 1}})"), InputError);
  EXPECT_THROW(train_config_from_json("[1, 2]"), InputError);
  EXPECT_THROW(train_config_from_json("{"), InputError);
  EXPECT_THROW(load_train_config("/nonexistent/config.json"), InputError);
}

TEST(Config, JsonRoundTrip) {
  TrainConfig c = default_config(Profile::tnt);
  c.seed = 42;
  c.initial_log_s = 3.5;
  c.background = Vec3(0.1, 0.2, 0.3);
  c.weights.dmean = 0.5;
  const TrainConfig back = train_config_from_json(train_config_to_json(c));
  EXPECT_EQ(train_config_to_json(back), train_config_to_json(c));
  EXPECT_EQ(back.seed, 42u);
  EXPECT_EQ(back.initial_log_s, 3.5);
  EXPECT_EQ(back.level_schedule.size(), c.level_schedule.size());
}
