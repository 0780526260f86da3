#include "shapeprior/align.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace shapeprior {

double RigidTransform::angle() const {
  double c = (rotation.trace() - 1.0) / 2.0;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

Eigen::Vector3d translation_average(const DeformationField& field,
                                    const DomainMask& mask) {
  mask.validate(static_cast<int>(field.size()) / 3);
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  for (int idx : mask.indices) sum += field_at(field, idx);
  return sum / static_cast<double>(mask.size());
}

RigidTransform kabsch(const std::vector<Eigen::Vector3d>& source,
                      const std::vector<Eigen::Vector3d>& target) {
  if (source.size() != target.size() || source.size() < 3)
    throw ValidationError("kabsch needs equal point lists of size >= 3");
  const auto n = static_cast<double>(source.size());
  Eigen::Vector3d cs = Eigen::Vector3d::Zero(), ct = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) {
    cs += source[i];
    ct += target[i];
  }
  cs /= n;
  ct /= n;
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < source.size(); ++i)
    h += (source[i] - cs) * (target[i] - ct).transpose();

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  // Rank < 2 means the rotation is not unique (collinear configuration).
  if (s(1) <= 1e-9 * std::max(s(0), 1e-300))
    throw ValidationError("degenerate point configuration in kabsch");

  Eigen::Matrix3d u = svd.matrixU();
  Eigen::Matrix3d v = svd.matrixV();
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (v * u.transpose()).determinant() < 0 ? -1.0 : 1.0;

  RigidTransform tf;
  tf.rotation = v * d * u.transpose();
  tf.center = cs;
  tf.translation = ct - cs;
  return tf;
}

namespace {

// Rigidly aligns the deformed shape so its masked points match the given
// target positions in the least-squares sense.
DeformationField align_field_to(const DeformationField& field,
                                const DomainMask& mask,
                                const TriangleMesh& reference,
                                const std::vector<Eigen::Vector3d>& target,
                                bool rotations) {
  const int n = reference.vertex_count();
  if (static_cast<int>(field.size()) != 3 * n)
    throw ValidationError("field length does not match reference");
  mask.validate(n);
  if (rotations && mask.size() < 3)
    throw ValidationError("rotational alignment needs >= 3 masked points");

  Eigen::Vector3d src_avg = Eigen::Vector3d::Zero();
  Eigen::Vector3d tgt_avg = Eigen::Vector3d::Zero();
  for (int k = 0; k < mask.size(); ++k) {
    int idx = mask.indices[k];
    src_avg += reference.vertices[idx] + field_at(field, idx);
    tgt_avg += target[k];
  }
  src_avg /= mask.size();
  tgt_avg /= mask.size();
  const Eigen::Vector3d shift = tgt_avg - src_avg;

  DeformationField out = field;
  for (int i = 0; i < n; ++i) out.segment<3>(3 * i) += shift;

  if (rotations) {
    std::vector<Eigen::Vector3d> masked(mask.size());
    for (int k = 0; k < mask.size(); ++k) {
      int idx = mask.indices[k];
      masked[k] = reference.vertices[idx] + field_at(out, idx);
    }
    RigidTransform tf = kabsch(masked, target);
    for (int i = 0; i < n; ++i) {
      Eigen::Vector3d p = reference.vertices[i] + field_at(out, i);
      out.segment<3>(3 * i) = tf.apply(p) - reference.vertices[i];
    }
  }
  return out;
}

}  // namespace

DeformationField align_field(const DeformationField& field,
                             const DomainMask& mask,
                             const TriangleMesh& reference, bool rotations) {
  std::vector<Eigen::Vector3d> target(mask.size());
  for (int k = 0; k < mask.size(); ++k)
    target[k] = reference.vertices[mask.indices[k]];
  return align_field_to(field, mask, reference, target, rotations);
}

GpaResult gpa(const std::vector<DeformationField>& fields,
              const DomainMask& mask, const TriangleMesh& reference,
              bool rotations, int max_iter, double tol) {
  if (fields.size() < 2) throw ValidationError("gpa needs at least 2 fields");
  const int n = reference.vertex_count();
  for (const auto& f : fields)
    if (static_cast<int>(f.size()) != 3 * n)
      throw ValidationError("gpa: field length mismatch");

  GpaResult result;
  result.fields = fields;
  const auto n_fields = static_cast<double>(fields.size());

  DeformationField mean = DeformationField::Zero(3 * n);
  for (const auto& f : result.fields) mean += f;
  mean /= n_fields;

  for (int iter = 0; iter < max_iter; ++iter) {
    std::vector<Eigen::Vector3d> target(mask.size());
    for (int k = 0; k < mask.size(); ++k) {
      int idx = mask.indices[k];
      target[k] = reference.vertices[idx] + field_at(mean, idx);
    }
    for (auto& f : result.fields)
      f = align_field_to(f, mask, reference, target, rotations);

    DeformationField new_mean = DeformationField::Zero(3 * n);
    for (const auto& f : result.fields) new_mean += f;
    new_mean /= n_fields;

    double move = 0.0;
    for (int i = 0; i < n; ++i)
      move = std::max(move,
                      (field_at(new_mean, i) - field_at(mean, i)).norm());
    mean = new_mean;
    result.iterations = iter + 1;
    if (move < tol) {
      result.converged = true;
      break;
    }
  }

  // Shift everything together so each field has zero average on the mask.
  Eigen::Vector3d offset = translation_average(mean, mask);
  for (auto& f : result.fields)
    for (int i = 0; i < n; ++i) f.segment<3>(3 * i) -= offset;
  return result;
}

}  // namespace shapeprior
