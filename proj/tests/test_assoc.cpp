#include "svrecon/assoc.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <bit>

using namespace svr;

TEST(Assoc, EmptyIndex) {
  const auto idx = AssociationIndex::rebuild(std::span<const Voxel>{}, 4);
  EXPECT_EQ(idx.occupied_count(), 0u);
  for (std::uint64_t w : idx.bitmask()) EXPECT_EQ(w, 0u);
  for (CellIndex c = 0; c < 4096; c += 37) EXPECT_FALSE(nvs_lookup(idx, c).has_value());
}

TEST(Assoc, SingleVoxel) {
  Voxel v;
  v.level = 3;
  v.anchor = {1, 6, 2};
  OctreeState oct(SceneBounds{}, {v});
  const auto idx = AssociationIndex::rebuild(oct, 3);
  ASSERT_EQ(idx.occupied_count(), 1u);
  const CellIndex cell = 1 * 64 + 6 * 8 + 2;
  EXPECT_EQ(idx.cells()[0], cell);
  EXPECT_EQ(nvs_lookup(idx, cell), std::optional<VoxelId>(0));
  EXPECT_FALSE(nvs_lookup(idx, cell + 1).has_value());
}

TEST(Assoc, LookupOutOfRange) {
  const auto idx = AssociationIndex::rebuild(std::span<const Voxel>{}, 2);
  EXPECT_THROW(idx.lookup(64), std::domain_error);
}

TEST(Assoc, RejectsFinerVoxelAndOverlap) {
  Voxel v;
  v.level = 4;
  EXPECT_THROW(AssociationIndex::rebuild(std::span<const Voxel>(&v, 1), 3), std::domain_error);
  Voxel a;
  a.level = 1;
  Voxel b;
  b.level = 2;
  const std::vector<Voxel> overlap{a, b};
  EXPECT_THROW(AssociationIndex::rebuild(overlap, 3), std::domain_error);
}

TEST(Assoc, MatchesBruteForceScan) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    const auto voxels = test::random_leaves(rng, 5);
    const int L = 5;
    const std::uint64_t g = 32;
    const auto idx = AssociationIndex::rebuild(voxels, L);
    std::vector<CellIndex> cells;
    std::vector<VoxelId> ids;
    for (CellIndex c = 0; c < g * g * g; ++c) {
      const auto hit = test::brute_cover(voxels, L, inverse_index(c, g));
      ASSERT_EQ(idx.occupied(c), hit.has_value());
      if (hit) {
        cells.push_back(c);
        ids.push_back(*hit);
      }
    }
    EXPECT_EQ(std::vector<CellIndex>(idx.cells().begin(), idx.cells().end()), cells);
    EXPECT_EQ(std::vector<VoxelId>(idx.voxel_map().begin(), idx.voxel_map().end()), ids);
    std::size_t pop = 0;
    for (std::uint64_t w : idx.bitmask()) pop += std::popcount(w);
    EXPECT_EQ(pop, idx.occupied_count());
    EXPECT_EQ(idx.table_bytes(), idx.occupied_count() * (sizeof(CellIndex) + sizeof(VoxelId)));
  }
}

TEST(Assoc, RandomLookupsMatchScan) {
  std::mt19937_64 rng(23);
  const auto voxels = test::random_leaves(rng, 6);
  const auto idx = AssociationIndex::rebuild(voxels, 6);
  std::uniform_int_distribution<CellIndex> cell(0, 64 * 64 * 64 - 1);
  for (int q = 0; q < 1000; ++q) {
    const CellIndex c = cell(rng);
    EXPECT_EQ(nvs_lookup(idx, c), test::brute_cover(voxels, 6, inverse_index(c, 64)));
  }
}

TEST(Assoc, RebuildDeterministicAndIdempotent) {
  std::mt19937_64 rng(29);
  const auto voxels = test::random_leaves(rng, 6);
  const auto a = AssociationIndex::rebuild(voxels, 6, 1);
  const auto b = AssociationIndex::rebuild(voxels, 6, 1);
  const auto c = AssociationIndex::rebuild(voxels, 6, 4);
  EXPECT_TRUE(a == b);
  EXPECT_TRUE(a == c);
}

TEST(Assoc, LeavesOnlyOverload) {
  SceneBounds bounds;
  std::vector<Voxel> voxels;
  Voxel parent;
  parent.level = 1;
  voxels.push_back(parent);
  for (int c = 0; c < 8; ++c) {
    Voxel ch;
    ch.level = 2;
    const auto o = corner_offset(c);
    ch.anchor = {std::uint32_t(o[0]), std::uint32_t(o[1]), std::uint32_t(o[2])};
    voxels.push_back(ch);
  }
  OctreeState oct(bounds, voxels);
  const auto idx = AssociationIndex::rebuild(oct, 2);
  EXPECT_EQ(idx.occupied_count(), 8u);
  for (CellIndex c : idx.cells()) EXPECT_NE(*idx.lookup(c), 0u);
  const std::vector<VoxelId> just_parent{0};
  const auto pidx = AssociationIndex::rebuild(oct, just_parent, 2);
  EXPECT_EQ(pidx.occupied_count(), 8u);
  for (CellIndex c : pidx.cells()) EXPECT_EQ(*pidx.lookup(c), 0u);
}

TEST(Assoc, FaceNeighbors) {
  const std::uint64_t g = 8;
  EXPECT_EQ(face_neighbors({3, 3, 3}, g).count, 6);
  EXPECT_EQ(face_neighbors({0, 0, 0}, g).count, 3);

  const DenseCoord c{0, 2, 7};
  std::vector<CellIndex> expected;
  const int d[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};
  for (const auto& o : d) {
    const long i = long(c.i) + o[0], j = long(c.j) + o[1], k = long(c.k) + o[2];
    if (i < 0 || j < 0 || k < 0 || i >= long(g) || j >= long(g) || k >= long(g)) continue;
    expected.push_back(CellIndex(i) * g * g + CellIndex(j) * g + CellIndex(k));
  }
  const auto n = face_neighbors(c, g);
  ASSERT_EQ(n.count, 4);
  EXPECT_EQ(std::vector<CellIndex>(n.begin(), n.end()), expected);
}
