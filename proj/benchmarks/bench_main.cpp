#include "svrecon/assoc.hpp"
#include "svrecon/meshx.hpp"
#include "svrecon/render.hpp"
#include "svrecon/synth.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace {

svr::OctreeState sphere_octree(int level) {
  const svr::SceneBounds bounds{svr::Vec3::Constant(-2.0), 4.0};
  svr::CornerGrid grid = svr::spherical_init(bounds, level);
  const std::uint32_t n = grid.nodes_per_axis();
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = 0; j < n; ++j)
      for (std::uint32_t k = 0; k < n; ++k) grid.values[grid.index(i, j, k)] = grid.position(i, j, k).norm() - 1.0;
  return svr::octree_from_corner_grid(grid);
}

void BM_NvsLookup(benchmark::State& state) {
  const int level = static_cast<int>(state.range(0));
  const svr::OctreeState octree = sphere_octree(5);
  const auto index = svr::AssociationIndex::rebuild(octree, level);
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<svr::CellIndex> pick(0, index.grid() * index.grid() * index.grid() - 1);
  std::vector<svr::CellIndex> cells(4096);
  for (auto& c : cells) c = pick(rng);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(index.lookup(cells[i++ & 4095]));
  }
}
BENCHMARK(BM_NvsLookup)->Arg(6)->Arg(8);

void BM_Rebuild(benchmark::State& state) {
  const svr::OctreeState octree = sphere_octree(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(svr::AssociationIndex::rebuild(octree, static_cast<int>(state.range(0))));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(octree.size()));
}
BENCHMARK(BM_Rebuild)->Arg(5)->Arg(6)->Unit(benchmark::kMillisecond);

void BM_Traverse(benchmark::State& state) {
  const svr::OctreeState octree = sphere_octree(6);
  const svr::VoxelTree tree(octree);
  const auto cams = svr::camera_ring(8, 3.5, svr::Vec3::Zero());
  std::vector<svr::RaySegment> segments;
  int u = 0;
  for (auto _ : state) {
    const svr::Ray ray = cams[u % 8].pixel_ray(u % 128, (u / 128) % 128);
    segments.clear();
    tree.traverse(ray, 0.0, std::numeric_limits<double>::infinity(), segments);
    benchmark::DoNotOptimize(segments.data());
    ++u;
  }
}
BENCHMARK(BM_Traverse);

void BM_MarchingCubes(benchmark::State& state) {
  const svr::OctreeState octree = sphere_octree(5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(svr::marching_cubes(octree, static_cast<int>(state.range(0)), 0.1));
  }
}
BENCHMARK(BM_MarchingCubes)->Arg(5)->Arg(6)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
