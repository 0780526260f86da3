#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "shapeprior/align.hpp"
#include "shapeprior/model.hpp"
#include "shapeprior/posterior.hpp"

namespace shapeprior {

// theta = (alpha, euler angles, translation). Rotation convention is
// Rz(euler.z) * Ry(euler.y) * Rx(euler.x) about a given pivot.
struct PoseShapeParams {
  ShapeCoefficients alpha;
  Eigen::Vector3d euler = Eigen::Vector3d::Zero();  // radians, [0, 2pi)
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static PoseShapeParams identity(int rank);
  void wrap_angles();
};

Eigen::Matrix3d euler_to_rotation(const Eigen::Vector3d& euler);
Eigen::Vector3d rotation_to_euler(const Eigen::Matrix3d& rotation);

struct LikelihoodConfig {
  double sigma = 1.0;              // mm, per-coordinate observation noise
  double translation_bound = 1000.0;  // mm, uniform prior half-width
};

struct ClosestPointResult {
  Eigen::Vector3d point;
  double squared_distance = 0.0;
};

// AABB tree over target triangles for exact closest-point queries.
class ClosestPointIndex {
 public:
  explicit ClosestPointIndex(const TriangleMesh& target);

  ClosestPointResult query(const Eigen::Vector3d& x) const;

 private:
  struct Node {
    Eigen::Vector3d box_min, box_max;
    int left = -1, right = -1;   // children, or
    int first = 0, count = 0;    // leaf triangle range
  };

  double box_distance2(const Node& node, const Eigen::Vector3d& x) const;
  int build(int first, int count);

  std::vector<Node> nodes_;
  std::vector<int> order_;  // triangle permutation
  std::vector<std::array<Eigen::Vector3d, 3>> triangles_;
  std::vector<Eigen::Vector3d> centroids_;
};

// Exact closest point on a single triangle.
Eigen::Vector3d closest_point_on_triangle(const Eigen::Vector3d& p,
                                          const Eigen::Vector3d& a,
                                          const Eigen::Vector3d& b,
                                          const Eigen::Vector3d& c);

// Gamma[theta]: deformation, then rotation about `center`, then translation.
TriangleMesh shape_at(const LowRankGP& model, const PoseShapeParams& params,
                      const Eigen::Vector3d& center);
TriangleMesh shape_at(const LowRankGP& model, const PoseShapeParams& params);

// Unnormalized log posterior: closest-point Gaussian likelihood over the
// masked vertices plus the standard-normal shape prior; -inf outside the
// translation bounds.
double log_posterior(const LowRankGP& model, const PoseShapeParams& params,
                     const ClosestPointIndex& target, const DomainMask& mask,
                     const LikelihoodConfig& cfg);

struct NicpResult {
  PoseShapeParams params;
  std::vector<double> log_posterior_trace;  // one entry per iteration
};

// EM-like alternation: fix correspondence by closest point, solve shape by
// GP regression at fixed pose, then solve pose by Kabsch. With update_pose
// off, the pose stays at `init` (shape-only registration).
NicpResult nicp(const LowRankGP& model, const TriangleMesh& target,
                const DomainMask& mask, const PoseShapeParams& init, int iters,
                const LikelihoodConfig& cfg, bool update_pose = true);

struct MhProposalConfig {
  double alpha_coarse_std = 0.2;
  double alpha_fine_std = 0.05;
  double rotation_std = 0.01;     // rad
  double translation_std = 0.5;   // mm
  double regression_std = 0.1;    // std around the midpoint regression mean
  double regression_weight = 0.2;  // mixture weight of the regression proposal
};

struct ChainSummary {
  PoseShapeParams map_params;
  double map_log_posterior = 0.0;
  std::int64_t samples_retained = 0;
  Eigen::VectorXd mean_points;      // 3N, posterior mean of Gamma[theta]
  Eigen::VectorXd vertex_variance;  // N, mm^2 (sum over coordinates)
  std::vector<Eigen::VectorXd> alpha_trace;  // retained shape coefficients
  std::map<std::string, double> acceptance_rates;
};

// Random-walk Metropolis-Hastings over theta with block proposals on shape,
// rotation and translation plus a symmetric regression-informed shape
// proposal. Bit-reproducible for a fixed seed. Throws DiagnosticsError after
// 1000 consecutive rejections.
ChainSummary metropolis_hastings(const LowRankGP& model,
                                 const TriangleMesh& target,
                                 const DomainMask& mask,
                                 const PoseShapeParams& init,
                                 std::int64_t n_samples, std::int64_t burn_in,
                                 std::uint64_t seed,
                                 const LikelihoodConfig& cfg,
                                 const MhProposalConfig& prop = {});

// Heuristic observed-domain estimate: model vertices whose fitted shape is
// within `radius` of the target surface.
// The optional center overrides the rotation pivot (defaults to the
// reference centroid).
DomainMask estimate_mask(const LowRankGP& model, const TriangleMesh& target,
                         const PoseShapeParams& params, double radius,
                         const Eigen::Vector3d* center = nullptr);

struct ReconstructOptions {
  std::string method = "nicp";  // nicp | mh | analytic
  LikelihoodConfig likelihood;
  MhProposalConfig proposals;
  int iters = 150;              // nicp
  std::int64_t samples = 15000;  // mh
  std::int64_t burn_in = 1000;
  std::uint64_t seed = 42;
  double mask_radius = 5.0;      // mm, observed-domain heuristic
  int update_every = 25;         // nicp iterations between mask updates
  std::int64_t mh_update_every = 5000;
  bool rotations = true;         // rotation-extended projection
  bool has_mask = false;         // fixed mask instead of the estimate loop
  DomainMask mask;
};

struct ReconstructResult {
  ChainSummary summary;
  DomainMask mask;       // final observed-domain estimate
  LowRankGP model;       // final projected model
};

// Best-practices loop: rough rigid init, estimate the observed domain,
// project the model and run the chosen inference, periodically refreshing
// the domain estimate.
ReconstructResult reconstruct(const LowRankGP& model,
                              const TriangleMesh& target,
                              const ReconstructOptions& opts);

}  // namespace shapeprior
