#pragma once

#include <Eigen/Core>

#include "shapeprior/model.hpp"

namespace shapeprior {

// Basis of the pose modes removed by the realignment projection: normalized
// per-axis translation patterns, plus (optionally) normalized discretized
// rotation derivatives about the world axes through the masked centroid.
struct NullSpaceBasis {
  Eigen::MatrixXd columns;  // 3N x k, k in {3, 6}
  Eigen::Vector3d center = Eigen::Vector3d::Zero();

  int dimension() const { return static_cast<int>(columns.cols()); }
};

NullSpaceBasis build_nullspace(const TriangleMesh& reference,
                               const DomainMask& mask, bool rotations);

// Realigns an existing low-rank model to the target-specific alignment on
// the mask without access to training data. Each sqrt(lambda)-scaled basis
// column is projected against the null-space basis restricted to the masked
// rows, then the result is re-orthogonalized via SVD of its Gram matrix.
// The mean is only projected when project_mean is set.
LowRankGP project_model(const LowRankGP& input, const DomainMask& mask,
                        bool rotations, bool project_mean = false);

struct PoseErrorStats {
  double mean_translation = 0.0;  // mm
  double max_translation = 0.0;
  double mean_rotation = 0.0;  // rad
  double max_rotation = 0.0;
  double mean_combined = 0.0;  // translation + angle * masked rms radius, mm
  double max_combined = 0.0;
};

// Samples the model and measures the residual rigid misalignment of the
// masked part against the masked reference points.
PoseErrorStats residual_pose_error(const LowRankGP& model,
                                   const DomainMask& mask, int n_samples,
                                   std::uint64_t seed);

}  // namespace shapeprior
