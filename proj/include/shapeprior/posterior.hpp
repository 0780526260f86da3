#pragma once

#include <Eigen/Core>
#include <vector>

#include "shapeprior/model.hpp"

namespace shapeprior {

// A noisy point observation of one model vertex in the model frame.
struct Observation {
  int index = 0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double noise_sigma = 1.0;  // mm
};

// Gaussian posterior over shape coefficients at fixed pose and
// correspondence.
struct CoefficientPosterior {
  Eigen::VectorXd mean_alpha;
  Eigen::MatrixXd covariance_alpha;
};

// Gaussian process regression in coefficient space. With no observations the
// prior N(0, I) is returned.
CoefficientPosterior regress(const LowRankGP& model,
                             const std::vector<Observation>& observations);

struct Predictive {
  DeformationField mean;         // 3N
  Eigen::VectorXd variance;      // per vertex, mm^2 (trace of 3x3 block)
};

Predictive predictive(const LowRankGP& model,
                      const CoefficientPosterior& post);

}  // namespace shapeprior
