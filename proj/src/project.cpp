#include "shapeprior/project.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "shapeprior/align.hpp"

namespace shapeprior {

NullSpaceBasis build_nullspace(const TriangleMesh& reference,
                               const DomainMask& mask, bool rotations) {
  const int n = reference.vertex_count();
  mask.validate(n);

  NullSpaceBasis ns;
  ns.columns = Eigen::MatrixXd::Zero(3 * n, rotations ? 6 : 3);
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
  for (int i = 0; i < n; ++i)
    for (int axis = 0; axis < 3; ++axis)
      ns.columns(3 * i + axis, axis) = inv_sqrt_n;

  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  for (int idx : mask.indices) center += reference.vertices[idx];
  center /= mask.size();
  ns.center = center;

  if (rotations) {
    // Non-collinear masked points are required for the rotation modes.
    Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
    for (int idx : mask.indices) {
      Eigen::Vector3d d = reference.vertices[idx] - center;
      scatter += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(scatter);
    if (es.eigenvalues()(1) <= 1e-9 * std::max(es.eigenvalues()(2), 1e-300))
      throw ValidationError(
          "masked points are collinear; rotation modes undetermined");

    for (int axis = 0; axis < 3; ++axis) {
      Eigen::Vector3d e = Eigen::Vector3d::Unit(axis);
      Eigen::VectorXd col(3 * n);
      for (int i = 0; i < n; ++i)
        col.segment<3>(3 * i) = e.cross(reference.vertices[i] - center);
      double norm = col.norm();
      if (norm <= 0.0)
        throw ValidationError("degenerate rotation derivative column");
      ns.columns.col(3 + axis) = col / norm;
    }
  }
  return ns;
}

namespace {

// Least-squares fit against the masked rows of the null-space basis:
// returns a solver for coefficients y with M_X y ~= v_X.
struct MaskedSolver {
  Eigen::MatrixXd masked;  // 3|X| x k
  Eigen::LLT<Eigen::MatrixXd> llt;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
  bool use_qr = false;

  explicit MaskedSolver(const Eigen::MatrixXd& columns,
                        const DomainMask& mask) {
    const int k = static_cast<int>(columns.cols());
    masked.resize(3 * mask.size(), k);
    for (int j = 0; j < mask.size(); ++j)
      masked.middleRows(3 * j, 3) = columns.middleRows(3 * mask.indices[j], 3);

    Eigen::MatrixXd gram = masked.transpose() * masked;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    const double emin = es.eigenvalues()(0);
    const double emax = es.eigenvalues()(k - 1);
    if (emin <= 1e-14 * std::max(emax, 1e-300))
      throw ValidationError(
          "mask too degenerate to determine pose (singular M_X^T M_X)");
    if (emin * 1e12 < emax) {
      use_qr = true;
      qr.compute(masked);
      if (qr.rank() < k)
        throw ValidationError(
            "mask too degenerate to determine pose (rank-deficient M_X)");
    } else {
      llt.compute(gram);
    }
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& full_column,
                        const DomainMask& mask) const {
    Eigen::VectorXd restricted(3 * mask.size());
    for (int j = 0; j < mask.size(); ++j)
      restricted.segment<3>(3 * j) = full_column.segment<3>(3 * mask.indices[j]);
    if (use_qr) return qr.solve(restricted);
    return llt.solve(masked.transpose() * restricted);
  }
};

}  // namespace

LowRankGP project_model(const LowRankGP& input, const DomainMask& mask,
                        bool rotations, bool project_mean) {
  input.validate();
  mask.validate(input.vertex_count());

  NullSpaceBasis ns = build_nullspace(input.reference, mask, rotations);
  MaskedSolver solver(ns.columns, mask);

  Eigen::MatrixXd scaled = input.scaled_basis();
  for (int c = 0; c < scaled.cols(); ++c)
    scaled.col(c) -= ns.columns * solver.solve(scaled.col(c), mask);

  LowRankGP out;
  out.reference = input.reference;
  out.mean = input.mean;
  if (project_mean)
    out.mean -= ns.columns * solver.solve(input.mean, mask);
  diagonalize_scaled_basis(scaled, &out.basis, &out.eigenvalues);
  return out;
}

PoseErrorStats residual_pose_error(const LowRankGP& model,
                                   const DomainMask& mask, int n_samples,
                                   std::uint64_t seed) {
  model.validate();
  mask.validate(model.vertex_count());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<Eigen::Vector3d> target(mask.size());
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  for (int j = 0; j < mask.size(); ++j) {
    target[j] = model.reference.vertices[mask.indices[j]];
    center += target[j];
  }
  center /= mask.size();
  double radius = 0.0;
  for (const auto& p : target) radius += (p - center).squaredNorm();
  radius = std::sqrt(radius / mask.size());

  PoseErrorStats stats;
  const bool rotations = mask.size() >= 3;
  for (int s = 0; s < n_samples; ++s) {
    ShapeCoefficients alpha(model.rank());
    for (int i = 0; i < alpha.size(); ++i) alpha(i) = normal(rng);
    DeformationField u = sample(model, alpha);

    double translation = translation_average(u, mask).norm();
    double angle = 0.0;
    if (rotations) {
      std::vector<Eigen::Vector3d> source(mask.size());
      for (int j = 0; j < mask.size(); ++j)
        source[j] = target[j] + field_at(u, mask.indices[j]);
      try {
        angle = kabsch(source, target).angle();
      } catch (const ValidationError&) {
        angle = 0.0;  // degenerate sample, count translation only
      }
    }
    double combined = translation + angle * radius;
    stats.mean_translation += translation;
    stats.mean_rotation += angle;
    stats.mean_combined += combined;
    stats.max_translation = std::max(stats.max_translation, translation);
    stats.max_rotation = std::max(stats.max_rotation, angle);
    stats.max_combined = std::max(stats.max_combined, combined);
  }
  stats.mean_translation /= n_samples;
  stats.mean_rotation /= n_samples;
  stats.mean_combined /= n_samples;
  return stats;
}

}  // namespace shapeprior
