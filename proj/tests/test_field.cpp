#include "svrecon/field.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace svr;

namespace {

double expand(const CornerValues& g, const Vec3& q) {
  const double x = q.x(), y = q.y(), z = q.z();
  return g[0] * (1 - x) * (1 - y) * (1 - z) + g[1] * (1 - x) * (1 - y) * z + g[2] * (1 - x) * y * (1 - z) +
         g[3] * (1 - x) * y * z + g[4] * x * (1 - y) * (1 - z) + g[5] * x * (1 - y) * z + g[6] * x * y * (1 - z) +
         g[7] * x * y * z;
}

struct Fixture {
  OctreeState oct;
  AssociationIndex idx;
};

Fixture random_fixture(std::uint64_t seed, int L) {
  std::mt19937_64 rng(seed);
  SceneBounds b{Vec3(-1.0, 0.5, 2.0), 3.0};
  Fixture f{OctreeState(b, test::random_leaves(rng, L, 0.5, 1.0)), {}};
  f.idx = AssociationIndex::rebuild(f.oct, L);
  return f;
}

}  // namespace

TEST(Field, CornersAndCenter) {
  const Fixture f = random_fixture(1, 4);
  const SceneBounds& b = f.oct.bounds();
  for (const Voxel& v : f.oct.voxels()) {
    double mean = 0.0;
    for (int c = 0; c < 8; ++c) {
      mean += v.geo[c] / 8.0;
      // Corners on the upper faces belong to a neighbor cell; probe from inside.
      const Vec3 q(corner_offset(c)[0], corner_offset(c)[1], corner_offset(c)[2]);
      const FieldSample s = sample_voxel(v, b, v.corner_position(c, b));
      EXPECT_EQ(s.value, v.geo[c]);
      EXPECT_EQ(s.local, q);
    }
    const auto s = sdf_at(f.oct, f.idx, v.center(b));
    ASSERT_TRUE(s.has_value());
    EXPECT_EQ(s->voxel, v.id);
    EXPECT_NEAR(s->value, mean, 1e-14);
    const auto lo = sdf_at(f.oct, f.idx, v.min_corner(b));
    ASSERT_TRUE(lo.has_value());
    EXPECT_EQ(lo->value, v.geo[0]);
  }
}

TEST(Field, RandomPointsMatchExpansion) {
  const Fixture f = random_fixture(2, 5);
  const SceneBounds& b = f.oct.bounds();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int hits = 0;
  for (int n = 0; n < 2000; ++n) {
    const Vec3 p = b.x_min + b.edge * Vec3(u(rng), u(rng), u(rng));
    const auto s = sdf_at(f.oct, f.idx, p);
    const DenseCoord cell{std::uint32_t((p.x() - b.x_min.x()) / b.cell_size(5)),
                          std::uint32_t((p.y() - b.x_min.y()) / b.cell_size(5)),
                          std::uint32_t((p.z() - b.x_min.z()) / b.cell_size(5))};
    const auto owner = test::brute_cover(f.oct.voxels(), 5, cell);
    ASSERT_EQ(s.has_value(), owner.has_value());
    if (!s) continue;
    ++hits;
    const Voxel& v = f.oct[*owner];
    const Vec3 q = (p - v.min_corner(b)) / v.size(b);
    EXPECT_NEAR(s->value, expand(v.geo, q), 1e-12);
    double sum = 0.0, dot = 0.0;
    for (int c = 0; c < 8; ++c) {
      EXPECT_GE(s->weights[c], 0.0);
      sum += s->weights[c];
      dot += s->weights[c] * v.geo[c];
    }
    EXPECT_NEAR(sum, 1.0, 1e-14);
    EXPECT_EQ(dot, s->value);
  }
  EXPECT_GT(hits, 500);
}

TEST(Field, OutOfBoundsAndUnoccupied) {
  SceneBounds b{Vec3::Zero(), 1.0};
  Voxel v;
  v.level = 2;
  OctreeState oct(b, {v});
  const auto idx = AssociationIndex::rebuild(oct, 2);
  EXPECT_THROW(sdf_at(oct, idx, Vec3(1.5, 0.5, 0.5)), std::domain_error);
  EXPECT_FALSE(sdf_at(oct, idx, Vec3(0.9, 0.9, 0.9)).has_value());
  EXPECT_TRUE(sdf_at(oct, idx, Vec3(0.1, 0.1, 0.1)).has_value());
  // Shared faces belong to the larger-index cell: x = 0.25 is outside voxel 0.
  EXPECT_FALSE(sdf_at(oct, idx, Vec3(0.25, 0.1, 0.1)).has_value());
}

TEST(Field, WeightsAreValueDerivatives) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  CornerValues g;
  for (double& x : g) x = u(rng) - 0.5;
  for (int n = 0; n < 20; ++n) {
    const Vec3 q(u(rng), u(rng), u(rng));
    const CornerWeights w = trilinear_weights(q);
    for (int c = 0; c < 8; ++c) {
      const double fd = test::central_fd([&] { return trilinear(g, q); }, g[c], 1e-6);
      EXPECT_NEAR(fd, w[c], 1e-9);
    }
  }
}

TEST(Field, AxisLinesAreAffine) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  CornerValues g;
  for (double& x : g) x = u(rng);
  for (int axis = 0; axis < 3; ++axis) {
    Vec3 a(u(rng), u(rng), u(rng));
    Vec3 bq = a, m = a;
    a[axis] = 0.1;
    bq[axis] = 0.9;
    m[axis] = 0.3;
    const double expect = trilinear(g, a) + (0.3 - 0.1) / 0.8 * (trilinear(g, bq) - trilinear(g, a));
    EXPECT_NEAR(trilinear(g, m), expect, 1e-14);
  }
}

TEST(Field, GradCenter) {
  SceneBounds b{Vec3(1.0, -2.0, 0.0), 2.0};
  Voxel v;
  v.level = 3;
  v.anchor = {2, 5, 1};
  for (int c = 0; c < 8; ++c) v.geo[c] = v.corner_position(c, b).x();
  const Vec3 gx = grad_center(v, b);
  EXPECT_NEAR(gx.x(), 1.0, 1e-12);
  EXPECT_NEAR(gx.y(), 0.0, 1e-12);
  EXPECT_NEAR(gx.z(), 0.0, 1e-12);
  v.geo.fill(3.0);
  EXPECT_EQ(grad_center(v, b), Vec3::Zero());
  EXPECT_FALSE(normal_at_center(v, b).has_value());

  for (int c = 0; c < 8; ++c) v.geo[c] = 2.0 * v.corner_position(c, b).x();
  EXPECT_LT((*normal_at_center(v, b) - Vec3::UnitX()).norm(), 1e-12);
  for (int c = 0; c < 8; ++c) v.geo[c] = -v.corner_position(c, b).z();
  EXPECT_LT((*normal_at_center(v, b) - Vec3(0, 0, -1)).norm(), 1e-12);
}

TEST(Field, GradCenterMatchesFiniteDifference) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SceneBounds b{Vec3::Zero(), 1.0};
  for (int trial = 0; trial < 20; ++trial) {
    Voxel v;
    v.level = 2;  // h = 0.25
    v.anchor = {1, 2, 0};
    for (double& x : v.geo) x = u(rng);
    OctreeState oct(b, {v});
    const auto idx = AssociationIndex::rebuild(oct, 2);
    const Vec3 c = oct[0].center(b);
    const Vec3 g = grad_center(oct[0], b);
    for (int a = 0; a < 3; ++a) {
      Vec3 p = c;
      const double fd = test::central_fd([&] { return sdf_at(oct, idx, p)->value; }, p[a], 1e-5);
      EXPECT_LT(test::rel_err(fd, g[a], 1e-3), 1e-6);
    }
    const auto n = normal_at_center(oct[0], b);
    ASSERT_TRUE(n.has_value());
    EXPECT_NEAR(n->norm(), 1.0, 1e-12);
  }
}

TEST(Field, AffineFieldGradientAtAnyLevel) {
  std::mt19937_64 rng(6);
  const Vec3 grad(0.3, -1.2, 0.7);
  SceneBounds b{Vec3(-1, -1, -1), 2.0};
  auto voxels = test::random_leaves(rng, 5);
  for (Voxel& v : voxels)
    for (int c = 0; c < 8; ++c) v.geo[c] = grad.dot(v.corner_position(c, b)) + 0.5;
  for (const Voxel& v : voxels) EXPECT_LT((grad_center(v, b) - grad).norm(), 1e-12);
}

TEST(Field, GradJacobianMatchesDefinition) {
  const double h = 0.125;
  const auto jac = grad_center_jacobian(h);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  CornerValues g;
  for (double& x : g) x = u(rng);
  Vec3 lin = Vec3::Zero();
  for (int c = 0; c < 8; ++c) lin += g[c] * jac[c];
  EXPECT_LT((lin - grad_center(g, h)).norm(), 1e-12);
}
