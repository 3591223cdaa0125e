#include "svrecon/field.hpp"
#include "svrecon/kdtree.hpp"
#include "svrecon/meshx.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace svr;

namespace {

std::vector<Vec3> cloud(std::mt19937_64& rng, std::size_t n, const Vec3& shift = Vec3::Zero()) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec3> p(n);
  for (Vec3& x : p) x = Vec3(u(rng), u(rng), u(rng)) + shift;
  return p;
}

double brute_chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  auto one_way = [](const std::vector<Vec3>& x, const std::vector<Vec3>& y) {
    double sum = 0.0;
    for (const Vec3& p : x) {
      double best = 1e300;
      for (const Vec3& q : y) best = std::min(best, (p - q).norm());
      sum += best;
    }
    return sum / double(x.size());
  };
  return 0.5 * (one_way(a, b) + one_way(b, a));
}

double triangle_area(const Mesh& m, std::size_t f) {
  const Vec3& a = m.vertices[m.faces[f][0]];
  const Vec3& b = m.vertices[m.faces[f][1]];
  const Vec3& c = m.vertices[m.faces[f][2]];
  return 0.5 * (b - a).cross(c - a).norm();
}

}  // namespace

TEST(MarchingCubes, SphereOnDenseGrid) {
  const double h = 4.0 / 32;
  const ScalarGrid g = ScalarGrid::sample(Vec3::Constant(-2.0), h, 33, [](const Vec3& p) { return p.norm() - 1.0; });
  const Mesh m = marching_cubes_grid(g);
  ASSERT_FALSE(m.empty());
  for (const Vec3& v : m.vertices) EXPECT_LT(std::abs(v.norm() - 1.0), h);
  for (std::size_t f = 0; f < m.faces.size(); ++f) {
    EXPECT_GT(triangle_area(m, f), 1e-12);
    // Normals point toward increasing values: outward for an SDF.
    const Vec3& a = m.vertices[m.faces[f][0]];
    const Vec3 n = (m.vertices[m.faces[f][1]] - a).cross(m.vertices[m.faces[f][2]] - a);
    const Vec3 c = (a + m.vertices[m.faces[f][1]] + m.vertices[m.faces[f][2]]) / 3.0;
    EXPECT_GT(n.dot(c), 0.0);
  }
  EXPECT_NEAR(m.area(), 4.0 * M_PI, 0.1);
}

TEST(MarchingCubes, AllPositiveIsEmpty) {
  const ScalarGrid g = ScalarGrid::sample(Vec3::Zero(), 0.1, 8, [](const Vec3&) { return 1.0; });
  EXPECT_TRUE(marching_cubes_grid(g).empty());
}

TEST(MarchingCubes, PlaneIsExact) {
  const double c = 0.3141;
  const ScalarGrid g = ScalarGrid::sample(Vec3::Zero(), 0.1, 9, [c](const Vec3& p) { return p.z() - c; });
  const Mesh m = marching_cubes_grid(g);
  ASSERT_FALSE(m.empty());
  for (const Vec3& v : m.vertices) EXPECT_NEAR(v.z(), c, 1e-9);
  EXPECT_NEAR(m.area(), 0.8 * 0.8, 1e-9);
}

TEST(MarchingCubes, VerticesLieOnCellEdges) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ScalarGrid g = ScalarGrid::sample(Vec3::Zero(), 1.0, 6, [&](const Vec3&) { return u(rng); });
  const Mesh m = marching_cubes_grid(g);
  for (const Vec3& v : m.vertices) {
    int on_lattice = 0;
    for (int a = 0; a < 3; ++a) on_lattice += std::abs(v[a] - std::round(v[a])) < 1e-9;
    EXPECT_GE(on_lattice, 2);
  }
}

TEST(MarchingCubes, OctreeSurfaceConsistency) {
  const SceneBounds b{Vec3::Constant(-2.0), 4.0};
  const OctreeState oct = test::sampled_octree(b, 5, [](const Vec3& p) { return p.norm() - 1.0; });
  ExtractReport rep;
  const Mesh m = marching_cubes(oct, 5, 1.0, &rep);
  ASSERT_FALSE(m.empty());
  EXPECT_FALSE(rep.empty);
  const double h = b.cell_size(5);
  const auto idx = AssociationIndex::rebuild(oct, 5);
  for (const Vec3& v : m.vertices) {
    EXPECT_LT(std::abs(v.norm() - 1.0), h);
    const auto s = sdf_at(oct, idx, v);
    ASSERT_TRUE(s.has_value());
    EXPECT_LT(std::abs(s->value), h);
  }
  const Mesh again = marching_cubes(oct, 5, 1.0);
  EXPECT_EQ(again.vertices, m.vertices);
  EXPECT_EQ(again.faces, m.faces);
  EXPECT_THROW(marching_cubes(oct, 7, 1.0), std::domain_error);
}

TEST(MarchingCubes, OnlyOccupiedCellsArePolygonized) {
  const SceneBounds b{Vec3::Zero(), 1.0};
  Voxel v;
  v.level = 2;
  v.anchor = {1, 1, 1};
  v.geo.fill(-0.1);
  const OctreeState oct(b, {v});
  // Unoccupied neighbors are not marched, so an isolated negative voxel has no surface.
  EXPECT_TRUE(marching_cubes(oct, 2, 0.1).empty());
  EXPECT_TRUE(marching_cubes(oct, 2, -0.1).empty());
  v.geo[7] = 0.1;
  const OctreeState crossing(b, {v});
  const Mesh a = marching_cubes(crossing, 2, 0.1), c = marching_cubes(crossing, 2, -5.0);
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a.vertices, c.vertices);
  EXPECT_EQ(a.faces, c.faces);
}

TEST(Weld, MergesAndDropsDegenerates) {
  Mesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(1e-9, 0, 0), Vec3(5, 5, 5)};
  m.faces = {{0, 1, 2}, {3, 2, 1}, {0, 3, 1}};
  weld(m, 1e-7);
  EXPECT_EQ(m.vertices.size(), 3u);
  EXPECT_EQ(m.faces.size(), 2u);
}

TEST(SampleSurface, PointsOnSurfaceAndDeterministic) {
  const ScalarGrid g = ScalarGrid::sample(Vec3::Constant(-2.0), 0.125, 33, [](const Vec3& p) { return p.norm() - 1.0; });
  const Mesh m = marching_cubes_grid(g);
  const auto a = sample_surface(m, 2000, 3);
  EXPECT_EQ(a, sample_surface(m, 2000, 3));
  ASSERT_EQ(a.size(), 2000u);
  for (const Vec3& p : a) EXPECT_LT(std::abs(p.norm() - 1.0), 0.125);
  EXPECT_THROW(sample_surface(Mesh{}, 10, 1), std::invalid_argument);
}

TEST(KdTree, MatchesLinearScan) {
  std::mt19937_64 rng(4);
  const auto pts = cloud(rng, 500);
  const KdTree tree(pts);
  for (const Vec3& q : cloud(rng, 300, Vec3(0.2, 0, 0))) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pts.size(); ++i)
      if ((pts[i] - q).squaredNorm() < (pts[best] - q).squaredNorm()) best = i;
    const auto hit = tree.nearest(q);
    EXPECT_EQ(hit.index, best);
    EXPECT_EQ(hit.distance_sq, (pts[best] - q).squaredNorm());
  }
}

TEST(Metrics, ChamferValues) {
  std::mt19937_64 rng(5);
  const auto a = cloud(rng, 50);
  EXPECT_EQ(chamfer(a, a), 0.0);
  const std::vector<Vec3> p{Vec3(0, 0, 0)}, q{Vec3(0.3, 0.4, 0)};
  EXPECT_NEAR(chamfer(p, q), 0.5, 1e-15);
  for (int t = 0; t < 20; ++t) {
    const auto x = cloud(rng, 1 + rng() % 200), y = cloud(rng, 1 + rng() % 200, Vec3(0.1, 0, 0));
    EXPECT_NEAR(chamfer(x, y), brute_chamfer(x, y), 1e-12);
    EXPECT_EQ(chamfer(x, y), chamfer(y, x));
  }
  EXPECT_THROW(chamfer(std::vector<Vec3>{}, a), std::invalid_argument);
}

TEST(Metrics, F1Values) {
  std::mt19937_64 rng(6);
  const auto a = cloud(rng, 80);
  const F1Score same = f1_score(a, a, 0.01);
  EXPECT_EQ(same.precision, 1.0);
  EXPECT_EQ(same.recall, 1.0);
  EXPECT_EQ(same.f1, 1.0);
  const auto far = cloud(rng, 80, Vec3(10, 0, 0));
  const F1Score none = f1_score(a, far, 0.5);
  EXPECT_EQ(none.precision, 0.0);
  EXPECT_EQ(none.recall, 0.0);
  EXPECT_EQ(none.f1, 0.0);
  const auto b = cloud(rng, 120, Vec3(0.3, 0, 0));
  const F1Score ab = f1_score(a, b, 0.2), ba = f1_score(b, a, 0.2);
  EXPECT_EQ(ab.precision, ba.recall);
  EXPECT_EQ(ab.recall, ba.precision);
  EXPECT_THROW(f1_score(a, b, 0.0), std::invalid_argument);
  EXPECT_THROW(f1_score(std::vector<Vec3>{}, b, 0.1), std::invalid_argument);
}
