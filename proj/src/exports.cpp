#include "sfr/exports.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace sfr {

namespace {

template <class T>
void put(std::string& buf, T v) {
  char tmp[sizeof(T)];
  std::memcpy(tmp, &v, sizeof(T));
  buf.append(tmp, sizeof(T));
}

struct PlyProperty {
  std::string type, name;
};

struct PlyHeader {
  int vertex_count = 0;
  int face_count = 0;
  std::vector<PlyProperty> vertex_props;
  size_t data_offset = 0;
};

PlyHeader parse_ply_header(std::ifstream& in, const std::string& path) {
  PlyHeader h;
  std::string line;
  if (!std::getline(in, line) || line != "ply") throw IoError("ply: bad magic in " + path);
  std::string element;
  while (std::getline(in, line)) {
    std::istringstream is(line);
    std::string tok;
    is >> tok;
    if (tok == "format") {
      std::string fmt;
      is >> fmt;
      if (fmt != "binary_little_endian")
        throw IoError("ply: only binary_little_endian is supported: " + path);
    } else if (tok == "element") {
      std::string name;
      int count;
      is >> name >> count;
      element = name;
      if (name == "vertex") h.vertex_count = count;
      if (name == "face") h.face_count = count;
    } else if (tok == "property") {
      if (element == "vertex") {
        PlyProperty p;
        is >> p.type >> p.name;
        h.vertex_props.push_back(p);
      }
    } else if (tok == "end_header") {
      break;
    }
  }
  return h;
}

}  // namespace

void export_surfels_ply(const SurfelMap& map, const std::string& path, double tau_conf) {
  std::vector<int> keep;
  for (int i = 0; i < map.size(); ++i)
    if (map[i].confidence() >= tau_conf) keep.push_back(i);

  std::ostringstream header;
  header << "ply\nformat binary_little_endian 1.0\n"
         << "element vertex " << keep.size() << "\n"
         << "property float x\nproperty float y\nproperty float z\n"
         << "property float nx\nproperty float ny\nproperty float nz\n"
         << "property float s0\nproperty float s1\n"
         << "property float opacity\n"
         << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
         << "property float confidence\n"
         << "end_header\n";

  std::string body;
  body.reserve(keep.size() * 41);
  for (int id : keep) {
    const Surfel& s = map[id];
    const Vec3 n = s.normal();
    for (int i = 0; i < 3; ++i) put<float>(body, float(s.p[i]));
    for (int i = 0; i < 3; ++i) put<float>(body, float(n[i]));
    put<float>(body, float(s.s.x()));
    put<float>(body, float(s.s.y()));
    put<float>(body, float(s.o));
    const Vec3 rgb = sh_eval(s.c, n, 0).cwiseMax(0.0).cwiseMin(1.0);
    for (int i = 0; i < 3; ++i)
      put<std::uint8_t>(body, std::uint8_t(std::lround(rgb[i] * 255.0)));
    put<float>(body, float(s.confidence()));
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("ply: cannot write " + path);
  out << header.str();
  out.write(body.data(), std::streamsize(body.size()));
}

SurfelMap load_surfels_ply(const std::string& path, double cell_size) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("ply: cannot open " + path);
  const PlyHeader h = parse_ply_header(in, path);
  if (h.vertex_props.size() != 13)
    throw IoError("ply: unexpected surfel layout in " + path);

  SurfelMap map(cell_size);
  for (int i = 0; i < h.vertex_count; ++i) {
    float f[9];
    std::uint8_t rgb[3];
    float conf;
    in.read(reinterpret_cast<char*>(f), sizeof(f));
    in.read(reinterpret_cast<char*>(rgb), sizeof(rgb));
    in.read(reinterpret_cast<char*>(&conf), sizeof(conf));
    if (!in) throw IoError("ply: truncated surfel data in " + path);
    Surfel s;
    s.p = Vec3(f[0], f[1], f[2]);
    const Vec3 n = Vec3(f[3], f[4], f[5]).normalized();
    s.r = rotation_from_normal(n);
    s.s = Vec2(f[6], f[7]);
    s.o = f[8];
    s.c = sh_from_rgb(Vec3(rgb[0] / 255.0, rgb[1] / 255.0, rgb[2] / 255.0));
    s.lambda = Vec6::Constant(conf / 6.0);
    Vec6 state;
    state << s.p, n;
    s.eta = s.lambda.cwiseProduct(state);
    map.add(s);
  }
  return map;
}

void export_mesh_ply(const TriangleMesh& mesh, const std::string& path) {
  std::ostringstream header;
  header << "ply\nformat binary_little_endian 1.0\n"
         << "element vertex " << mesh.vertices.size() << "\n"
         << "property float x\nproperty float y\nproperty float z\n"
         << "element face " << mesh.faces.size() << "\n"
         << "property list uchar int vertex_indices\n"
         << "end_header\n";
  std::string body;
  body.reserve(mesh.vertices.size() * 12 + mesh.faces.size() * 13);
  for (const Vec3& v : mesh.vertices)
    for (int i = 0; i < 3; ++i) put<float>(body, float(v[i]));
  for (const auto& f : mesh.faces) {
    put<std::uint8_t>(body, 3);
    for (int i = 0; i < 3; ++i) put<std::int32_t>(body, f[i]);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("ply: cannot write " + path);
  out << header.str();
  out.write(body.data(), std::streamsize(body.size()));
}

void export_mesh_obj(const TriangleMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("obj: cannot write " + path);
  out << std::setprecision(9);
  for (const Vec3& v : mesh.vertices)
    out << "v " << v.x() << " " << v.y() << " " << v.z() << "\n";
  for (const auto& f : mesh.faces)
    out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
}

TriangleMesh load_mesh_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("ply: cannot open " + path);
  const PlyHeader h = parse_ply_header(in, path);
  TriangleMesh mesh;
  mesh.vertices.resize(h.vertex_count);
  for (int i = 0; i < h.vertex_count; ++i) {
    float f[3];
    in.read(reinterpret_cast<char*>(f), sizeof(f));
    mesh.vertices[i] = Vec3(f[0], f[1], f[2]);
  }
  mesh.faces.resize(h.face_count);
  for (int i = 0; i < h.face_count; ++i) {
    std::uint8_t n;
    in.read(reinterpret_cast<char*>(&n), 1);
    if (n != 3) throw IoError("ply: non-triangle face in " + path);
    std::int32_t idx[3];
    in.read(reinterpret_cast<char*>(idx), sizeof(idx));
    mesh.faces[i] = {idx[0], idx[1], idx[2]};
  }
  if (!in) throw IoError("ply: truncated mesh data in " + path);
  return mesh;
}

ImageRgb8 render_to_rgb8(const RenderOutput& render) {
  ImageRgb8 out(render.width, render.height);
  for (size_t i = 0; i < out.size(); ++i) {
    const Vec3 c = render.color[i].cwiseMax(0.0).cwiseMin(1.0);
    out[i] = {std::uint8_t(std::lround(c.x() * 255)), std::uint8_t(std::lround(c.y() * 255)),
              std::uint8_t(std::lround(c.z() * 255))};
  }
  return out;
}

}  // namespace sfr
