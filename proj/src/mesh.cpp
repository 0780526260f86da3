#include "shapeprior/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace shapeprior {

Eigen::Vector3d TriangleMesh::centroid() const {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (const auto& v : vertices) c += v;
  return c / static_cast<double>(vertices.size());
}

void TriangleMesh::validate() const {
  if (vertex_count() < 3)
    throw ValidationError("mesh needs at least 3 vertices, got " +
                          std::to_string(vertex_count()));
  for (const auto& v : vertices)
    if (!v.allFinite()) throw ValidationError("mesh has NaN/Inf coordinates");
  for (const auto& t : triangles)
    for (int idx : t)
      if (idx < 0 || idx >= vertex_count())
        throw ValidationError("triangle index " + std::to_string(idx) +
                              " out of range for " +
                              std::to_string(vertex_count()) + " vertices");
}

DomainMask DomainMask::full(int n) {
  DomainMask m;
  m.indices.resize(n);
  for (int i = 0; i < n; ++i) m.indices[i] = i;
  return m;
}

void DomainMask::validate(int n) const {
  if (indices.empty()) throw ValidationError("empty domain mask");
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= n)
      throw ValidationError("mask index " + std::to_string(indices[i]) +
                            " out of range for " + std::to_string(n) +
                            " vertices");
    if (i > 0 && indices[i] <= indices[i - 1])
      throw ValidationError("mask indices must be sorted and unique");
  }
}

namespace {

std::vector<std::string> tokenize(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

TriangleMesh parse_ply(std::istream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line) || line != "ply")
    throw ParseError(path + ": missing ply magic");

  long n_vertices = -1, n_faces = 0;
  bool format_ok = false;
  std::vector<std::string> vertex_props;
  std::string current_element;
  while (std::getline(in, line)) {
    auto tok = tokenize(line);
    if (tok.empty() || tok[0] == "comment") continue;
    if (tok[0] == "format") {
      if (tok.size() < 2 || tok[1] != "ascii")
        throw ParseError(path + ": only ascii PLY is supported");
      format_ok = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3) throw ParseError(path + ": bad element line");
      current_element = tok[1];
      long count = std::stol(tok[2]);
      if (tok[1] == "vertex")
        n_vertices = count;
      else if (tok[1] == "face")
        n_faces = count;
      else
        throw ParseError(path + ": unsupported element " + tok[1]);
    } else if (tok[0] == "property") {
      if (current_element == "vertex" && tok.size() == 3) {
        if (tok[1] != "double")
          throw ParseError(path + ": vertex property " + tok[2] +
                           " must be double (float64)");
        vertex_props.push_back(tok[2]);
      }
    } else if (tok[0] == "end_header") {
      break;
    } else {
      throw ParseError(path + ": unexpected header line: " + line);
    }
  }
  if (!format_ok || n_vertices < 0)
    throw ParseError(path + ": incomplete header");
  if (vertex_props.size() < 3 || vertex_props[0] != "x" ||
      vertex_props[1] != "y" || vertex_props[2] != "z")
    throw ParseError(path + ": vertex element must start with x y z");

  TriangleMesh mesh;
  mesh.vertices.reserve(n_vertices);
  for (long i = 0; i < n_vertices; ++i) {
    if (!std::getline(in, line))
      throw ParseError(path + ": truncated vertex list");
    auto tok = tokenize(line);
    if (tok.size() < 3) throw ParseError(path + ": short vertex line");
    mesh.vertices.emplace_back(std::stod(tok[0]), std::stod(tok[1]),
                               std::stod(tok[2]));
  }
  for (long i = 0; i < n_faces; ++i) {
    if (!std::getline(in, line))
      throw ParseError(path + ": truncated face list");
    auto tok = tokenize(line);
    if (tok.empty()) throw ParseError(path + ": empty face line");
    long count = std::stol(tok[0]);
    if (count != 3 || tok.size() < 4)
      throw ParseError(path + ": only triangle faces are supported");
    mesh.triangles.push_back({static_cast<int>(std::stol(tok[1])),
                              static_cast<int>(std::stol(tok[2])),
                              static_cast<int>(std::stol(tok[3]))});
  }
  mesh.validate();
  return mesh;
}

}  // namespace

TriangleMesh load_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return parse_ply(in, path);
}

TriangleMesh mesh_from_ply_string(const std::string& data,
                                  const std::string& name) {
  std::istringstream in(data);
  return parse_ply(in, name);
}

std::string mesh_to_ply_string(const TriangleMesh& mesh) {
  mesh.validate();
  std::string out;
  char buf[256];
  out += "ply\nformat ascii 1.0\nelement vertex " +
         std::to_string(mesh.vertices.size()) +
         "\nproperty double x\nproperty double y\nproperty double z\n"
         "element face " +
         std::to_string(mesh.triangles.size()) +
         "\nproperty list uchar int vertex_indices\nend_header\n";
  for (const auto& v : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", v.x(), v.y(),
                  v.z());
    out += buf;
  }
  for (const auto& t : mesh.triangles) {
    std::snprintf(buf, sizeof(buf), "3 %d %d %d\n", t[0], t[1], t[2]);
    out += buf;
  }
  return out;
}

void save_mesh(const TriangleMesh& mesh, const std::string& path) {
  const std::string data = mesh_to_ply_string(mesh);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed for " + path);
}

DomainMask load_mask(const std::string& path, int vertex_count) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  DomainMask mask;
  std::string line;
  while (std::getline(in, line)) {
    auto tok = tokenize(line);
    if (tok.empty()) continue;
    if (tok.size() != 1)
      throw ParseError(path + ": expected one index per line");
    mask.indices.push_back(static_cast<int>(std::stol(tok[0])));
  }
  if (mask.indices.empty()) throw ValidationError(path + ": empty mask file");
  std::vector<int> sorted = mask.indices;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i] == sorted[i - 1])
      throw ValidationError(path + ": duplicate mask index " +
                            std::to_string(sorted[i]));
  mask.indices = std::move(sorted);
  mask.validate(vertex_count);
  return mask;
}

void save_mask(const DomainMask& mask, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (int idx : mask.indices) out << idx << "\n";
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace shapeprior
