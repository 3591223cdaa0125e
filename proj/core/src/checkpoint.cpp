#include "svrecon/error.hpp"
#include "svrecon/lattice.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace svr {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'S', 'V', 'R', 'X'};

template <typename T>
void put(std::ostream& out, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.write(bytes, sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  char bytes[sizeof(T)];
  if (!in.read(bytes, sizeof(T))) throw InputError("checkpoint: truncated stream");
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

void write_checkpoint(std::ostream& out, const OctreeState& octree) {
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  const SceneBounds& b = octree.bounds();
  put<double>(out, b.x_min.x());
  put<double>(out, b.x_min.y());
  put<double>(out, b.x_min.z());
  put<double>(out, b.edge);
  put<std::uint64_t>(out, octree.size());
  for (const Voxel& v : octree.voxels()) {
    put<std::uint8_t>(out, static_cast<std::uint8_t>(v.level));
    put<std::uint32_t>(out, v.anchor.i);
    put<std::uint32_t>(out, v.anchor.j);
    put<std::uint32_t>(out, v.anchor.k);
    for (double f : v.geo) put<float>(out, static_cast<float>(f));
    for (double c : v.color) put<float>(out, static_cast<float>(c));
  }
  if (!out) throw InputError("checkpoint: write failed");
}

void write_checkpoint(const std::string& path, const OctreeState& octree) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("checkpoint: cannot open " + path + " for writing");
  write_checkpoint(out, octree);
}

OctreeState read_checkpoint(std::istream& in, int max_level) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw InputError("checkpoint: bad magic");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw InputError("checkpoint: unsupported version " + std::to_string(version));
  }
  SceneBounds b;
  b.x_min.x() = get<double>(in);
  b.x_min.y() = get<double>(in);
  b.x_min.z() = get<double>(in);
  b.edge = get<double>(in);
  const auto count = get<std::uint64_t>(in);
  std::vector<Voxel> voxels;
  voxels.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 26)));
  for (std::uint64_t n = 0; n < count; ++n) {
    Voxel v;
    v.level = get<std::uint8_t>(in);
    v.anchor.i = get<std::uint32_t>(in);
    v.anchor.j = get<std::uint32_t>(in);
    v.anchor.k = get<std::uint32_t>(in);
    for (double& f : v.geo) f = get<float>(in);
    for (double& c : v.color) c = get<float>(in);
    voxels.push_back(v);
  }
  try {
    return OctreeState(b, std::move(voxels), max_level);
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("checkpoint: ") + e.what());
  }
}

OctreeState read_checkpoint(const std::string& path, int max_level) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("checkpoint: cannot open " + path);
  return read_checkpoint(in, max_level);
}

}  // namespace svr
