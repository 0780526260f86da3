#pragma once

#include <Eigen/Core>
#include <vector>

#include "shapeprior/mesh.hpp"

namespace shapeprior {

// Proper rigid motion p -> R(p - center) + center + translation.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Eigen::Vector3d center = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return rotation * (p - center) + center + translation;
  }
  // Rotation angle in radians, from the trace.
  double angle() const;
};

// Average displacement over the masked vertices (discrete translation
// operator).
Eigen::Vector3d translation_average(const DeformationField& field,
                                    const DomainMask& mask);

// Least-squares rigid transform mapping source onto target; pivot is the
// source centroid and reflections are excluded. Throws ValidationError for
// degenerate (collinear) configurations where the rotation is not unique.
RigidTransform kabsch(const std::vector<Eigen::Vector3d>& source,
                      const std::vector<Eigen::Vector3d>& target);

// Removes the average displacement on the mask, and optionally rotates the
// shape to the Kabsch alignment with the masked reference points. The
// returned field always has zero translation average on the mask.
DeformationField align_field(const DeformationField& field,
                             const DomainMask& mask,
                             const TriangleMesh& reference, bool rotations);

struct GpaResult {
  std::vector<DeformationField> fields;
  int iterations = 0;
  bool converged = false;
};

// Generalized Procrustes analysis: iteratively aligns every field to the
// running mean shape on the mask until the mean moves less than tol
// (max vertex displacement, mm).
GpaResult gpa(const std::vector<DeformationField>& fields,
              const DomainMask& mask, const TriangleMesh& reference,
              bool rotations, int max_iter = 100, double tol = 1e-6);

}  // namespace shapeprior
