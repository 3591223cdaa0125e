#pragma once

#include "svrecon/geoinit.hpp"
#include "svrecon/lattice.hpp"
#include "svrecon/meshx.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace svr {

// All readers throw svr::InputError naming the path on malformed or missing files.

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<Vec3> pixels;  // row-major, values in [0,1]
};

/// Binary mask: any nonzero pixel is written as 255, read back as 1.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

void write_png(const std::string& path, const RgbImage& image);
void write_png(const std::string& path, const GrayImage& image);
RgbImage read_png_rgb(const std::string& path);
GrayImage read_png_gray(const std::string& path);

/// Color PFM (little-endian, bottom-to-top rows as per the format).
void write_pfm(const std::string& path, const RgbImage& image);
RgbImage read_pfm(const std::string& path);

/// Binary little-endian PLY with float x, y, z, confidence per pixel; the
/// grid size is stored in "comment width N" / "comment height N" lines.
void write_pointmap_ply(const std::string& path, const PointMap& map);
PointMap read_pointmap_ply(const std::string& path);

struct CameraSet {
  std::vector<CameraModel> cameras;
  std::vector<std::optional<Pose>> estimated;  // aligned with cameras
  std::optional<SceneBounds> bounds;
};

/// {views: [{R: [9], t: [3], K: [9], width, height, R_est?: [9], t_est?: [3]}], bounds?: {x_min: [3], edge}}
void write_cameras_json(const std::string& path, const CameraSet& set);
CameraSet read_cameras_json(const std::string& path);

void write_obj(const std::string& path, const Mesh& mesh);
/// Binary little-endian PLY: float vertices, uchar-count int32 faces.
void write_mesh_ply(const std::string& path, const Mesh& mesh);
/// OBJ or PLY (ascii or binary little-endian) by extension. Faces are optional.
Mesh read_mesh(const std::string& path);
void write_points_ply(const std::string& path, const std::vector<Vec3>& points);

/// A scene directory as written by the synth command.
struct SceneData {
  CameraSet cameras;
  std::vector<PointMap> pointmaps;
  std::vector<RgbImage> images;
  std::vector<GrayImage> masks;  // empty when the scene has no masks
};

std::string view_name(std::size_t index);  // "view_000"

/// Reads cameras.json, pointmaps/, images/ and, when present, masks/.
/// Missing files are listed together in one InputError.
SceneData load_scene(const std::string& dir, bool need_images = true);

}  // namespace svr
