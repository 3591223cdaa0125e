#include "svrecon/synth.hpp"

#include <gtest/gtest.h>

using namespace svr;

TEST(Synth, AnalyticSdf) {
  const Shape sphere = make_shape("sphere");
  EXPECT_EQ(analytic_sdf(sphere, Vec3(2, 0, 0)), 1.0);
  EXPECT_EQ(analytic_sdf(sphere, Vec3::Zero()), -1.0);
  const Shape torus = make_shape("torus");
  EXPECT_NEAR(analytic_sdf(torus, Vec3(1, 0, 0.25)), 0.0, 1e-15);
  EXPECT_NEAR(analytic_sdf(torus, Vec3(1, 0, 0)), -0.25, 1e-15);
  EXPECT_NEAR(analytic_sdf(torus, Vec3(0, 0, 0)), 0.75, 1e-15);
  const Shape box = make_shape("box");
  EXPECT_NEAR(analytic_sdf(box, Vec3(1.75, 0, 0)), 1.0, 1e-15);
  EXPECT_NEAR(analytic_sdf(box, Vec3(0, 0, 0)), -0.75, 1e-15);
  EXPECT_NEAR(analytic_sdf(box, Vec3(1.75, 1.75, 0)), std::sqrt(2.0), 1e-15);
  EXPECT_THROW(make_shape("cone"), std::invalid_argument);
  EXPECT_NEAR(analytic_normal(sphere, Vec3(0, 3, 0)).y(), 1.0, 1e-9);
}

TEST(Synth, CameraRing) {
  const auto cams = camera_ring(4, 3.0, Vec3(0.1, 0.2, 0.3));
  ASSERT_EQ(cams.size(), 6u);
  for (const CameraModel& c : cams) {
    c.validate();
    EXPECT_NEAR((c.center() - Vec3(0.1, 0.2, 0.3)).norm(), 3.0, 1e-12);
    const Vec2 px = c.project_camera(c.to_camera(Vec3(0.1, 0.2, 0.3)));
    EXPECT_NEAR(px.x(), c.K(0, 2), 1e-9);
    EXPECT_NEAR(px.y(), c.K(1, 2), 1e-9);
  }
  for (int i = 0; i < 4; ++i) {
    const Vec3 a = cams[i].center() - Vec3(0.1, 0.2, 0.3);
    const Vec3 b = cams[(i + 1) % 4].center() - Vec3(0.1, 0.2, 0.3);
    EXPECT_NEAR(std::acos(a.normalized().dot(b.normalized())), M_PI / 2, 1e-12);
  }
  EXPECT_THROW(camera_ring(1, 3.0, Vec3::Zero()), std::invalid_argument);
}

TEST(Synth, ReferenceRenderSphere) {
  const Shape sphere = make_shape("sphere");
  ShadingConfig shading;
  shading.background = Vec3(0.1, 0.2, 0.3);
  const CameraModel cam = look_at(Vec3(0, 0, -3.5), Vec3::Zero(), Vec3(0, -1, 0), 64, 64, 48.0);
  const ReferenceView v = render_reference(sphere, cam, shading);
  // Pixel (32, 32) has its center on the optical axis offset by half a pixel.
  const std::size_t center = 32 * 64 + 32;
  ASSERT_EQ(v.mask[center], 1);
  const Ray r = cam.pixel_ray(32, 32);
  const double b = r.dir.dot(r.origin), c = r.origin.squaredNorm() - 1.0;
  const double t = -b - std::sqrt(b * b - c);
  EXPECT_NEAR(v.depth[center], t * (cam.R * r.dir).z(), 1e-5);
  EXPECT_EQ(v.mask[0], 0);
  EXPECT_EQ(v.rgb[0], shading.background);
  EXPECT_EQ(v.depth[0], 0.0);
  EXPECT_EQ(v.pointmap.confidence[0], 0.0);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const std::size_t i = std::size_t(y) * 64 + x;
      if (!v.mask[i]) continue;
      const Vec3& p = v.pointmap.points[i];
      EXPECT_LT(std::abs(analytic_sdf(sphere, p)), 1e-5);
      EXPECT_EQ(v.pointmap.confidence[i], 1.0);
      EXPECT_NEAR(v.normals[i].norm(), 1.0, 1e-12);
      const Ray pr = cam.pixel_ray(x, y);
      const Vec3 unproj = pr.origin + pr.dir * (v.depth[i] / (cam.R * pr.dir).z());
      EXPECT_LT((unproj - p).norm(), 1e-6);
      for (int k = 0; k < 3; ++k) {
        EXPECT_GE(v.rgb[i][k], 0.0);
        EXPECT_LE(v.rgb[i][k], 1.0);
      }
    }
}

TEST(Synth, SceneAndPerturbation) {
  SynthConfig cfg;
  cfg.views = 6;
  cfg.width = 32;
  cfg.height = 32;
  cfg.focal = 24.0;
  const SyntheticScene s = make_scene(cfg);
  EXPECT_EQ(s.cameras.size(), 6u);
  EXPECT_EQ(s.views.size(), 6u);
  EXPECT_FALSE(s.world_to_estimated.has_value());
  for (const auto& e : s.pointmaps.estimated) EXPECT_FALSE(e.has_value());

  cfg.perturb_poses = true;
  const SyntheticScene p = make_scene(cfg);
  ASSERT_TRUE(p.world_to_estimated.has_value());
  const Similarity7& sim = *p.world_to_estimated;
  for (std::size_t v = 0; v < p.cameras.size(); ++v) {
    ASSERT_TRUE(p.pointmaps.estimated[v].has_value());
    const Pose& est = *p.pointmaps.estimated[v];
    EXPECT_LT((camera_center(est.R, est.t) - sim.apply(p.cameras[v].center())).norm(), 1e-9);
    for (std::size_t i = 0; i < p.views[v].mask.size(); ++i) {
      if (!p.views[v].mask[i]) continue;
      EXPECT_LT((p.pointmaps.views[v].points[i] - sim.apply(p.views[v].pointmap.points[i])).norm(), 1e-9);
    }
  }
}

TEST(Synth, SurfaceSamplesAndMesh) {
  const Shape torus = make_shape("torus");
  const SceneBounds b{Vec3::Constant(-2.0), 4.0};
  const auto pts = surface_samples(torus, b, 3000, 5);
  ASSERT_EQ(pts.size(), 3000u);
  EXPECT_EQ(pts, surface_samples(torus, b, 3000, 5));
  for (const Vec3& p : pts) EXPECT_LT(std::abs(analytic_sdf(torus, p)), 1e-6);
  const Mesh m = analytic_mesh(torus, b, 6);
  EXPECT_NEAR(m.area(), 4.0 * M_PI * M_PI * 1.0 * 0.25, 0.2);
}
