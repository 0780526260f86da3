#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "shapeprior/inference.hpp"
#include "shapeprior/model.hpp"

namespace shapeprior {

// Two-arm parametric shape with a Gaussian joint angle; probes the
// rotation-linearization error of the realignment projection.
struct HingeConfig {
  double arm_length = 10.0;       // mm
  double angle_mean = 3.14159265358979323846;
  double angle_std = 0.3;         // radians
  int points_per_arm = 10;
  int n_shapes = 200;
  std::uint64_t seed = 1;

  void validate() const;
};

struct HingeData {
  std::vector<DeformationField> fields;
  TriangleMesh reference;
  std::vector<double> angles;   // drawn beta per shape
  DomainMask moving_arm;        // domain X (the arm that moves with beta)
  DomainMask fixed_arm;
  int hinge_vertex = 0;
  int moving_tip = 0;           // vertex index of the moving arm tip
  int fixed_tip = 0;
};

// Polyline arms lifted to thin triangle strips; deformation fields are
// relative to the beta = pi reference.
HingeData generate_hinge(const HingeConfig& cfg);

struct HingeRow {
  double phi = 0.0;
  std::string variant;            // agnostic | specific | projected
  double rel_error_observed = 0.0;  // observed-arm length, relative
  double rel_error_predicted = 0.0;
  double angle_mean = 0.0;
  double angle_std = 0.0;
};

// Compares target-specific and projected model variants against the
// parametric ground truth for a list of angle spreads.
std::vector<HingeRow> hinge_experiment(const HingeConfig& cfg,
                                       const std::vector<double>& phis);

// Smooth synthetic shape family standing in for real bone datasets.
struct SyntheticFamilyConfig {
  std::string base_shape = "tube";  // tube | ellipsoid
  int n_shapes = 12;
  int rings = 16;        // tube discretization
  int segments = 10;
  double length = 100.0;  // mm
  double radius = 12.0;   // mm
  double deform_scale = 40.0;      // smooth-deformation kernel scale, mm
  double deform_amplitude = 3.0;   // mm
  double rigid_translation_std = 4.0;  // mm
  double rigid_rotation_std = 0.08;    // rad
  std::uint64_t seed = 7;

  void validate() const;
};

struct FamilyData {
  std::vector<DeformationField> fields;  // unaligned, rigid noise included
  TriangleMesh reference;
};

FamilyData generate_family(const SyntheticFamilyConfig& cfg);

struct ReportRow {
  int trial = 0;
  double ratio = 0.0;
  std::string method;
  std::string variant;
  std::string region;  // X | Z | Omega
  double mse = 0.0;      // mm^2, true-correspondence
  double mean_var = 0.0;  // mm^2 predicted variance, 0 when unavailable
};

struct ExperimentReport {
  std::vector<ReportRow> rows;
};

// Symmetric KL divergence of the aggregated posterior coefficient samples
// to the standard-normal prior, reported at checkpoints of the target count.
struct ConsistencyPoint {
  int n_targets = 0;
  double symmetric_kl = 0.0;
};

std::vector<ConsistencyPoint> self_consistency(
    const LowRankGP& prior, const std::string& variant, int rank,
    int n_targets, const DomainMask& mask, std::uint64_t seed,
    double noise_sigma = 1.0);

// Plane cut orthogonal to the first principal axis keeping roughly the given
// fraction of the surface area.
TriangleMesh cut_by_plane(const TriangleMesh& mesh, double observed_ratio,
                          DomainMask* observed_vertices = nullptr);

// Leave-one-out partial-shape reconstruction over the synthetic family.
ExperimentReport leave_one_out(const SyntheticFamilyConfig& family,
                               const std::vector<double>& observed_ratios,
                               const std::vector<std::string>& methods,
                               const std::vector<std::string>& variants,
                               int n_trials, std::uint64_t seed,
                               int threads = 1);

// CSV with header trial,ratio,method,variant,region,mse,mean_var.
void export_report(const ExperimentReport& report, const std::string& path);
ExperimentReport parse_report(const std::string& path);

}  // namespace shapeprior
