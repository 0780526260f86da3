#include "shapeprior/posterior.hpp"

#include <Eigen/Dense>

namespace shapeprior {

CoefficientPosterior regress(const LowRankGP& model,
                             const std::vector<Observation>& observations) {
  const int r = model.rank();
  CoefficientPosterior post;
  if (observations.empty()) {
    post.mean_alpha = Eigen::VectorXd::Zero(r);
    post.covariance_alpha = Eigen::MatrixXd::Identity(r, r);
    return post;
  }

  const Eigen::MatrixXd scaled = model.scaled_basis();
  const int m = static_cast<int>(observations.size());
  Eigen::MatrixXd a(3 * m, r);
  Eigen::VectorXd y(3 * m);
  Eigen::VectorXd inv_var(3 * m);
  for (int i = 0; i < m; ++i) {
    const Observation& obs = observations[i];
    if (obs.index < 0 || obs.index >= model.vertex_count())
      throw ValidationError("observation index out of range");
    if (!(obs.noise_sigma > 0.0))
      throw ValidationError("observation noise must be positive");
    a.middleRows(3 * i, 3) = scaled.middleRows(3 * obs.index, 3);
    const Eigen::Vector3d mean_point =
        model.reference.vertices[obs.index] + field_at(model.mean, obs.index);
    y.segment<3>(3 * i) = obs.position - mean_point;
    inv_var.segment<3>(3 * i).setConstant(1.0 /
                                          (obs.noise_sigma * obs.noise_sigma));
  }

  // (A^T S^-1 A + I)^-1 in coefficient space; r << 3N at desk scale.
  Eigen::MatrixXd info = a.transpose() * inv_var.asDiagonal() * a +
                         Eigen::MatrixXd::Identity(r, r);
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  post.covariance_alpha = llt.solve(Eigen::MatrixXd::Identity(r, r));
  // Symmetrize against round-off.
  post.covariance_alpha =
      0.5 * (post.covariance_alpha + post.covariance_alpha.transpose());
  post.mean_alpha = llt.solve(a.transpose() * inv_var.cwiseProduct(y));
  return post;
}

Predictive predictive(const LowRankGP& model,
                      const CoefficientPosterior& post) {
  if (post.mean_alpha.size() != model.rank())
    throw ValidationError("posterior dimension mismatch");
  const Eigen::MatrixXd scaled = model.scaled_basis();
  Predictive pred;
  pred.mean = model.mean + scaled * post.mean_alpha;
  const int n = model.vertex_count();
  pred.variance.resize(n);
  for (int i = 0; i < n; ++i) {
    const auto rows = scaled.middleRows(3 * i, 3);
    pred.variance(i) = (rows * post.covariance_alpha * rows.transpose()).trace();
  }
  return pred;
}

}  // namespace shapeprior
