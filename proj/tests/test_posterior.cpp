#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "shapeprior/model.hpp"
#include "shapeprior/posterior.hpp"

using namespace shapeprior;

namespace {

LowRankGP random_model(int n, int n_fields, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-10.0, 10.0);
  TriangleMesh ref;
  for (int i = 0; i < n; ++i)
    ref.vertices.emplace_back(uni(rng), uni(rng), uni(rng));
  for (int i = 0; i + 2 < n; ++i) ref.triangles.push_back({i, i + 1, i + 2});
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<DeformationField> fields;
  for (int s = 0; s < n_fields; ++s) {
    DeformationField u(3 * n);
    for (int i = 0; i < 3 * n; ++i) u(i) = normal(rng);
    fields.push_back(u);
  }
  return build_empirical(fields, ref);
}

}  // namespace

TEST_CASE("no observations return the prior") {
  const LowRankGP model = random_model(8, 5, 1);
  const CoefficientPosterior post = regress(model, {});
  CHECK(post.mean_alpha.norm() == 0.0);
  CHECK((post.covariance_alpha -
         Eigen::MatrixXd::Identity(model.rank(), model.rank()))
            .norm() == 0.0);
}

TEST_CASE("regression matches dense joint-Gaussian conditioning") {
  // Toy with 3N <= 60: condition the full-rank joint Gaussian directly.
  const LowRankGP model = random_model(14, 9, 2);
  const int n = model.vertex_count();
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<Observation> obs;
  std::vector<int> observed = {1, 4, 6, 9, 12};
  const double sigma = 0.7;
  for (int idx : observed) {
    const Eigen::Vector3d pos = model.reference.vertices[idx] +
                                field_at(model.mean, idx) +
                                Eigen::Vector3d(normal(rng), normal(rng),
                                                normal(rng));
    obs.push_back({idx, pos, sigma});
  }

  const CoefficientPosterior post = regress(model, obs);
  const Predictive pred = predictive(model, post);

  // Dense oracle over [u; y]: u ~ N(mean, C), y = H u + noise.
  const Eigen::MatrixXd scaled = model.scaled_basis();
  const Eigen::MatrixXd c = scaled * scaled.transpose();
  const int m = static_cast<int>(obs.size());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(3 * m, 3 * n);
  Eigen::VectorXd y(3 * m);
  for (int i = 0; i < m; ++i) {
    h.block(3 * i, 3 * obs[i].index, 3, 3).setIdentity();
    const Eigen::Vector3d mean_point =
        model.reference.vertices[obs[i].index] +
        field_at(model.mean, obs[i].index);
    y.segment<3>(3 * i) = obs[i].position - mean_point;
  }
  const Eigen::MatrixXd s_yy =
      h * c * h.transpose() +
      sigma * sigma * Eigen::MatrixXd::Identity(3 * m, 3 * m);
  const Eigen::MatrixXd gain = c * h.transpose() * s_yy.inverse();
  const Eigen::VectorXd dense_mean = model.mean + gain * y;
  const Eigen::MatrixXd dense_cov = c - gain * h * c;

  CHECK((pred.mean - dense_mean).cwiseAbs().maxCoeff() < 1e-8);
  const Eigen::MatrixXd low_cov =
      scaled * post.covariance_alpha * scaled.transpose();
  CHECK((low_cov - dense_cov).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("small noise interpolates observations inside the span") {
  const LowRankGP model = random_model(10, 7, 4);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal(0.0, 1.0);
  ShapeCoefficients alpha(model.rank());
  for (int i = 0; i < alpha.size(); ++i) alpha(i) = normal(rng);
  const DeformationField truth = sample(model, alpha);

  std::vector<Observation> obs;
  for (int idx = 0; idx < model.vertex_count(); ++idx)
    obs.push_back({idx,
                   model.reference.vertices[idx] + field_at(truth, idx),
                   1e-6});
  const CoefficientPosterior post = regress(model, obs);
  CHECK((post.mean_alpha - alpha).norm() < 1e-4);
  const Predictive pred = predictive(model, post);
  CHECK((pred.mean - truth).cwiseAbs().maxCoeff() < 1e-4);
  CHECK(pred.variance.maxCoeff() < 1e-6);
}

TEST_CASE("observations shrink the predictive variance") {
  const LowRankGP model = random_model(9, 6, 6);
  const Predictive prior_pred =
      predictive(model, regress(model, {}));
  std::vector<Observation> obs = {
      {0, model.reference.vertices[0] + field_at(model.mean, 0), 0.5}};
  const Predictive post_pred = predictive(model, regress(model, obs));
  for (int i = 0; i < model.vertex_count(); ++i)
    CHECK(post_pred.variance(i) <= prior_pred.variance(i) + 1e-12);
  CHECK(post_pred.variance(0) < prior_pred.variance(0));
  CHECK(post_pred.variance.minCoeff() >= 0.0);
}

TEST_CASE("invalid observations are rejected") {
  const LowRankGP model = random_model(8, 5, 7);
  CHECK_THROWS_AS(regress(model, {{99, Eigen::Vector3d::Zero(), 1.0}}),
                  ValidationError);
  CHECK_THROWS_AS(regress(model, {{0, Eigen::Vector3d::Zero(), 0.0}}),
                  ValidationError);
}
