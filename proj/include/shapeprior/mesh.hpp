#pragma once

#include <Eigen/Core>
#include <array>
#include <stdexcept>
#include <string>
#include <vector>

namespace shapeprior {

// Invalid input data or file contents (CLI exit code 2).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed file contents; a flavor of validation failure.
struct ParseError : ValidationError {
  using ValidationError::ValidationError;
};

// Filesystem / stream failures (CLI exit code 1).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Runtime inference diagnostics, e.g. a stuck Markov chain (CLI exit code 3).
struct DiagnosticsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Registered point sets share vertex count and ordering; correspondence is
// by vertex index.
struct TriangleMesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 3>> triangles;

  int vertex_count() const { return static_cast<int>(vertices.size()); }
  Eigen::Vector3d centroid() const;

  // Throws ValidationError on out-of-range indices, NaN/Inf coordinates or
  // fewer than 3 vertices.
  void validate() const;
};

// Per-vertex displacements, flattened to length 3N as [x0,y0,z0,x1,...].
using DeformationField = Eigen::VectorXd;

inline Eigen::Vector3d field_at(const DeformationField& u, int vertex) {
  return u.segment<3>(3 * vertex);
}

// Subset X of the reference domain as sorted unique vertex indices.
struct DomainMask {
  std::vector<int> indices;

  int size() const { return static_cast<int>(indices.size()); }
  bool is_full(int n) const { return size() == n; }
  static DomainMask full(int n);
  void validate(int n) const;
};

// ASCII PLY with float64 vertex properties. Throws ParseError on malformed
// files, ValidationError on invalid geometry, IoError when unreadable.
TriangleMesh load_mesh(const std::string& path);

// Coordinates are written with 17 significant digits so that
// load_mesh(save_mesh(m)) is bit exact.
void save_mesh(const TriangleMesh& mesh, const std::string& path);

// One decimal vertex index per line. Throws on duplicates, out-of-range
// entries or an empty file.
DomainMask load_mask(const std::string& path, int vertex_count);

void save_mask(const DomainMask& mask, const std::string& path);

// In-memory ASCII PLY serialization, same format as save_mesh/load_mesh.
std::string mesh_to_ply_string(const TriangleMesh& mesh);
TriangleMesh mesh_from_ply_string(const std::string& data,
                                  const std::string& name = "<ply-blob>");

}  // namespace shapeprior
