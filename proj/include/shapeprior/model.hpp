#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "shapeprior/mesh.hpp"

namespace shapeprior {

using ShapeCoefficients = Eigen::VectorXd;

// Low-rank Gaussian process over deformation fields in Karhunen-Loeve form:
// u[alpha] = mean + basis * diag(sqrt(eigenvalues)) * alpha.
struct LowRankGP {
  Eigen::VectorXd mean;         // 3N
  Eigen::VectorXd eigenvalues;  // r, descending, positive (mm^2)
  Eigen::MatrixXd basis;        // 3N x r, orthonormal columns
  TriangleMesh reference;

  int rank() const { return static_cast<int>(eigenvalues.size()); }
  int vertex_count() const { return reference.vertex_count(); }

  // basis * diag(sqrt(eigenvalues))
  Eigen::MatrixXd scaled_basis() const;

  // Checks orthonormality, positivity and ordering of the spectrum.
  void validate() const;

  // Keeps the leading min(rank, r) modes.
  LowRankGP truncated(int rank) const;
};

// Sample mean plus eigenpairs of the sample covariance via thin SVD of the
// centered data matrix / sqrt(n-1). Eigenvalues below 1e-10 * lambda_1 are
// dropped; an optional rank clamps the spectrum further.
LowRankGP build_empirical(const std::vector<DeformationField>& fields,
                          const TriangleMesh& reference, int rank = -1);

DeformationField sample(const LowRankGP& model, const ShapeCoefficients& alpha);

struct CoefficientResult {
  ShapeCoefficients alpha;
  double residual_norm = 0.0;  // norm of the orthogonal-complement part
};

CoefficientResult coefficients(const LowRankGP& model,
                               const DeformationField& field);

// Standard-normal log density of the shape coefficients.
double log_density(const LowRankGP& model, const ShapeCoefficients& alpha);

// Mixture of the empirical covariance (sigma = infinity entries) and
// isotropic Gaussian kernels acting per coordinate.
struct KernelMixtureConfig {
  std::vector<double> weights;
  std::vector<double> sigmas;  // mm; std::numeric_limits<double>::infinity()
                               // marks the empirical term

  void validate() const;
};

// Low-rank approximation of the mixed covariance via pivoted Cholesky,
// stopped at `rank` columns or relative trace residual < 1e-6, then
// re-diagonalized to an orthonormal basis.
LowRankGP build_localized(const LowRankGP& base, const KernelMixtureConfig& mix,
                          int rank);

// Re-diagonalizes a sqrt(lambda)-scaled basis into orthonormal columns and
// eigenvalues via thin SVD; eigenvalues below 1e-10 * lambda_1 are dropped.
// Throws when nothing remains.
void diagonalize_scaled_basis(const Eigen::MatrixXd& scaled,
                              Eigen::MatrixXd* basis,
                              Eigen::VectorXd* eigenvalues);

// Binary model file: "GPMM" magic, u32 version, u64 N and r, little-endian
// float64 arrays (mean, eigenvalues, column-major basis), then the reference
// mesh as a u64-length-prefixed ASCII PLY blob.
void save_model(const LowRankGP& model, const std::string& path);
LowRankGP load_model(const std::string& path);

}  // namespace shapeprior
