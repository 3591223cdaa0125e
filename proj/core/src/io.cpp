#include "svrecon/io.hpp"

#include "svrecon/error.hpp"

#include <json.hpp>
#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace svr {

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ofstream open_out(const std::string& path, bool binary = true) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw InputError("cannot open for writing: " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open: " + path);
  return in;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in, const std::string& path) {
  T v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw InputError("truncated file: " + path);
  return v;
}

struct PlyHeader {
  bool binary = true;
  std::size_t vertices = 0;
  std::size_t faces = 0;
  std::vector<std::string> vertex_props;
  int width = -1, height = -1;
};

PlyHeader read_ply_header(std::istream& in, const std::string& path) {
  PlyHeader h;
  std::string line;
  if (!std::getline(in, line) || line != "ply") throw InputError("not a PLY file: " + path);
  std::string element;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "format") {
      std::string fmt;
      ss >> fmt;
      if (fmt == "ascii") {
        h.binary = false;
      } else if (fmt != "binary_little_endian") {
        throw InputError("unsupported PLY format '" + fmt + "': " + path);
      }
    } else if (key == "comment") {
      std::string name;
      int value = 0;
      if (ss >> name >> value) {
        if (name == "width") h.width = value;
        if (name == "height") h.height = value;
      }
    } else if (key == "element") {
      std::size_t count = 0;
      ss >> element >> count;
      if (element == "vertex") h.vertices = count;
      if (element == "face") h.faces = count;
    } else if (key == "property") {
      std::string type, name;
      ss >> type;
      if (type == "list") {
        std::string a, b;
        ss >> a >> b >> name;
      } else {
        ss >> name;
        if (element == "vertex") {
          if (type != "float" && type != "float32") throw InputError("PLY vertex properties must be float: " + path);
          h.vertex_props.push_back(name);
        }
      }
    } else if (key == "end_header") {
      return h;
    }
  }
  throw InputError("PLY header has no end_header: " + path);
}

}  // namespace

void write_png(const std::string& path, const RgbImage& image) {
  std::vector<std::uint8_t> buf(image.pixels.size() * 3);
  for (std::size_t i = 0; i < image.pixels.size(); ++i)
    for (int c = 0; c < 3; ++c) buf[3 * i + c] = to_byte(image.pixels[i][c]);
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw InputError("cannot write PNG: " + path + " (" + img.message + ")");
  }
}

void write_png(const std::string& path, const GrayImage& image) {
  std::vector<std::uint8_t> buf(image.pixels.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = image.pixels[i] ? 255 : 0;
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw InputError("cannot write PNG: " + path + " (" + img.message + ")");
  }
}

namespace {

std::vector<std::uint8_t> read_png_raw(const std::string& path, png_uint_32 format, int& w, int& h) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw InputError("cannot read PNG: " + path + " (" + img.message + ")");
  }
  img.format = format;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw InputError("cannot decode PNG: " + path + " (" + img.message + ")");
  }
  w = static_cast<int>(img.width);
  h = static_cast<int>(img.height);
  return buf;
}

}  // namespace

RgbImage read_png_rgb(const std::string& path) {
  RgbImage out;
  const auto buf = read_png_raw(path, PNG_FORMAT_RGB, out.width, out.height);
  out.pixels.resize(static_cast<std::size_t>(out.width) * out.height);
  for (std::size_t i = 0; i < out.pixels.size(); ++i)
    out.pixels[i] = Vec3(buf[3 * i], buf[3 * i + 1], buf[3 * i + 2]) / 255.0;
  return out;
}

GrayImage read_png_gray(const std::string& path) {
  GrayImage out;
  const auto buf = read_png_raw(path, PNG_FORMAT_GRAY, out.width, out.height);
  out.pixels.resize(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i) out.pixels[i] = buf[i] >= 128 ? 1 : 0;
  return out;
}

void write_pfm(const std::string& path, const RgbImage& image) {
  auto out = open_out(path);
  out << "PF\n" << image.width << " " << image.height << "\n-1.0\n";
  for (int v = image.height - 1; v >= 0; --v) {
    for (int u = 0; u < image.width; ++u) {
      const Vec3& p = image.pixels[static_cast<std::size_t>(v) * image.width + u];
      for (int c = 0; c < 3; ++c) put<float>(out, static_cast<float>(p[c]));
    }
  }
  if (!out) throw InputError("write failed: " + path);
}

RgbImage read_pfm(const std::string& path) {
  auto in = open_in(path);
  std::string magic;
  RgbImage img;
  double scale = 0.0;
  in >> magic >> img.width >> img.height >> scale;
  in.get();
  if (magic != "PF" || img.width <= 0 || img.height <= 0) throw InputError("not a color PFM: " + path);
  if (scale > 0.0) throw InputError("big-endian PFM not supported: " + path);
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
  for (int v = img.height - 1; v >= 0; --v) {
    for (int u = 0; u < img.width; ++u) {
      Vec3& p = img.pixels[static_cast<std::size_t>(v) * img.width + u];
      for (int c = 0; c < 3; ++c) p[c] = get<float>(in, path);
    }
  }
  return img;
}

void write_pointmap_ply(const std::string& path, const PointMap& map) {
  auto out = open_out(path);
  out << "ply\nformat binary_little_endian 1.0\n"
      << "comment width " << map.width << "\ncomment height " << map.height << "\n"
      << "element vertex " << map.points.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\nproperty float confidence\nend_header\n";
  for (std::size_t i = 0; i < map.points.size(); ++i) {
    for (int a = 0; a < 3; ++a) put<float>(out, static_cast<float>(map.points[i][a]));
    put<float>(out, static_cast<float>(map.confidence[i]));
  }
  if (!out) throw InputError("write failed: " + path);
}

PointMap read_pointmap_ply(const std::string& path) {
  auto in = open_in(path);
  const PlyHeader h = read_ply_header(in, path);
  const std::vector<std::string> expected{"x", "y", "z", "confidence"};
  if (!h.binary || h.vertex_props != expected) {
    throw InputError("point map PLY must be binary with float x,y,z,confidence: " + path);
  }
  if (h.width <= 0 || h.height <= 0 || static_cast<std::size_t>(h.width) * h.height != h.vertices) {
    throw InputError("point map PLY width/height comments missing or inconsistent: " + path);
  }
  PointMap map;
  map.width = h.width;
  map.height = h.height;
  map.points.resize(h.vertices);
  map.confidence.resize(h.vertices);
  for (std::size_t i = 0; i < h.vertices; ++i) {
    for (int a = 0; a < 3; ++a) map.points[i][a] = get<float>(in, path);
    map.confidence[i] = get<float>(in, path);
    if (!std::isfinite(map.confidence[i])) throw InputError("non-finite confidence in " + path);
  }
  return map;
}

namespace {

json mat_json(const Mat3& m) {
  json a = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) a.push_back(m(r, c));
  return a;
}

Mat3 json_mat(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 9) throw InputError("expected a 9-element matrix in " + path);
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = j[static_cast<std::size_t>(3 * r + c)].get<double>();
  return m;
}

Vec3 json_vec(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) throw InputError("expected a 3-element vector in " + path);
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

void write_cameras_json(const std::string& path, const CameraSet& set) {
  json doc;
  doc["views"] = json::array();
  for (std::size_t i = 0; i < set.cameras.size(); ++i) {
    const CameraModel& c = set.cameras[i];
    json v;
    v["R"] = mat_json(c.R);
    v["t"] = {c.t.x(), c.t.y(), c.t.z()};
    v["K"] = mat_json(c.K);
    v["width"] = c.width;
    v["height"] = c.height;
    if (i < set.estimated.size() && set.estimated[i]) {
      v["R_est"] = mat_json(set.estimated[i]->R);
      v["t_est"] = {set.estimated[i]->t.x(), set.estimated[i]->t.y(), set.estimated[i]->t.z()};
    }
    doc["views"].push_back(v);
  }
  if (set.bounds) {
    doc["bounds"] = {{"x_min", {set.bounds->x_min.x(), set.bounds->x_min.y(), set.bounds->x_min.z()}},
                     {"edge", set.bounds->edge}};
  }
  auto out = open_out(path, false);
  out << doc.dump(2) << "\n";
}

CameraSet read_cameras_json(const std::string& path) {
  auto in = open_in(path);
  CameraSet set;
  try {
    const json doc = json::parse(in);
    for (const json& v : doc.at("views")) {
      CameraModel c;
      c.R = json_mat(v.at("R"), path);
      c.t = json_vec(v.at("t"), path);
      c.K = json_mat(v.at("K"), path);
      c.width = v.at("width").get<int>();
      c.height = v.at("height").get<int>();
      try {
        c.validate();
      } catch (const std::invalid_argument& e) {
        throw InputError(std::string(e.what()) + " in " + path);
      }
      set.cameras.push_back(c);
      if (v.contains("R_est") && v.contains("t_est")) {
        set.estimated.push_back(Pose{json_mat(v["R_est"], path), json_vec(v["t_est"], path)});
      } else {
        set.estimated.push_back(std::nullopt);
      }
    }
    if (doc.contains("bounds")) {
      SceneBounds b;
      b.x_min = json_vec(doc["bounds"].at("x_min"), path);
      b.edge = doc["bounds"].at("edge").get<double>();
      set.bounds = b;
    }
  } catch (const json::exception& e) {
    throw InputError("malformed cameras file " + path + ": " + e.what());
  }
  return set;
}

void write_obj(const std::string& path, const Mesh& mesh) {
  auto out = open_out(path, false);
  char buf[128];
  for (const Vec3& v : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "v %.9g %.9g %.9g\n", v.x(), v.y(), v.z());
    out << buf;
  }
  for (const auto& f : mesh.faces) out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
  if (!out) throw InputError("write failed: " + path);
}

void write_mesh_ply(const std::string& path, const Mesh& mesh) {
  auto out = open_out(path);
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << mesh.vertices.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "element face " << mesh.faces.size() << "\n"
      << "property list uchar int vertex_indices\nend_header\n";
  for (const Vec3& v : mesh.vertices)
    for (int a = 0; a < 3; ++a) put<float>(out, static_cast<float>(v[a]));
  for (const auto& f : mesh.faces) {
    put<std::uint8_t>(out, 3);
    for (auto i : f) put<std::int32_t>(out, static_cast<std::int32_t>(i));
  }
  if (!out) throw InputError("write failed: " + path);
}

void write_points_ply(const std::string& path, const std::vector<Vec3>& points) {
  write_mesh_ply(path, Mesh{points, {}});
}

namespace {

Mesh read_obj(const std::string& path) {
  auto in = open_in(path);
  Mesh mesh;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "v") {
      Vec3 p;
      if (!(ss >> p.x() >> p.y() >> p.z())) throw InputError("bad vertex line in " + path);
      mesh.vertices.push_back(p);
    } else if (key == "f") {
      std::vector<std::uint32_t> idx;
      std::string tok;
      while (ss >> tok) {
        const long i = std::stol(tok.substr(0, tok.find('/')));
        if (i < 1 || static_cast<std::size_t>(i) > mesh.vertices.size()) throw InputError("bad face index in " + path);
        idx.push_back(static_cast<std::uint32_t>(i - 1));
      }
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.faces.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  return mesh;
}

Mesh read_ply_mesh(const std::string& path) {
  auto in = open_in(path);
  const PlyHeader h = read_ply_header(in, path);
  const auto find = [&](const char* name) {
    const auto it = std::find(h.vertex_props.begin(), h.vertex_props.end(), name);
    if (it == h.vertex_props.end()) throw InputError(std::string("PLY lacks vertex property ") + name + ": " + path);
    return static_cast<std::size_t>(it - h.vertex_props.begin());
  };
  const std::size_t ix = find("x"), iy = find("y"), iz = find("z");
  Mesh mesh;
  mesh.vertices.resize(h.vertices);
  std::vector<double> row(h.vertex_props.size());
  for (std::size_t v = 0; v < h.vertices; ++v) {
    for (auto& x : row) {
      if (h.binary) {
        x = get<float>(in, path);
      } else if (!(in >> x)) {
        throw InputError("truncated PLY: " + path);
      }
    }
    mesh.vertices[v] = Vec3(row[ix], row[iy], row[iz]);
  }
  for (std::size_t f = 0; f < h.faces; ++f) {
    std::vector<std::uint32_t> idx;
    if (h.binary) {
      const auto n = get<std::uint8_t>(in, path);
      for (int k = 0; k < n; ++k) idx.push_back(static_cast<std::uint32_t>(get<std::int32_t>(in, path)));
    } else {
      int n = 0;
      in >> n;
      for (int k = 0; k < n; ++k) {
        long i = 0;
        in >> i;
        idx.push_back(static_cast<std::uint32_t>(i));
      }
      if (!in) throw InputError("truncated PLY: " + path);
    }
    for (auto i : idx)
      if (i >= h.vertices) throw InputError("bad face index in " + path);
    for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.faces.push_back({idx[0], idx[k], idx[k + 1]});
  }
  return mesh;
}

}  // namespace

Mesh read_mesh(const std::string& path) {
  const std::string ext = fs::path(path).extension().string();
  if (ext == ".obj" || ext == ".OBJ") return read_obj(path);
  if (ext == ".ply" || ext == ".PLY") return read_ply_mesh(path);
  throw InputError("unsupported mesh extension: " + path);
}

std::string view_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "view_%03zu", index);
  return buf;
}

SceneData load_scene(const std::string& dir, bool need_images) {
  const fs::path root(dir);
  std::vector<std::string> missing;
  const fs::path cams = root / "cameras.json";
  if (!fs::exists(cams)) throw InputError("missing input files: " + cams.string());
  SceneData scene;
  scene.cameras = read_cameras_json(cams.string());
  const std::size_t n = scene.cameras.cameras.size();
  if (n == 0) throw InputError("no views in " + cams.string());
  const bool have_masks = fs::exists(root / "masks");
  for (std::size_t i = 0; i < n; ++i) {
    const std::string name = view_name(i);
    const fs::path pm = root / "pointmaps" / (name + ".ply");
    if (!fs::exists(pm)) missing.push_back(pm.string());
    if (need_images) {
      const fs::path im = root / "images" / (name + ".png");
      if (!fs::exists(im)) missing.push_back(im.string());
      const fs::path mk = root / "masks" / (name + ".png");
      if (have_masks && !fs::exists(mk)) missing.push_back(mk.string());
    }
  }
  if (!missing.empty()) {
    std::string msg = "missing input files:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw InputError(msg);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::string name = view_name(i);
    scene.pointmaps.push_back(read_pointmap_ply((root / "pointmaps" / (name + ".ply")).string()));
    if (!need_images) continue;
    scene.images.push_back(read_png_rgb((root / "images" / (name + ".png")).string()));
    if (have_masks) scene.masks.push_back(read_png_gray((root / "masks" / (name + ".png")).string()));
    const auto& cam = scene.cameras.cameras[i];
    if (scene.images.back().width != cam.width || scene.images.back().height != cam.height) {
      throw InputError("image size does not match camera for " + name);
    }
  }
  return scene;
}

}  // namespace svr
