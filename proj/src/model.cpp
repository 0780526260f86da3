#include "shapeprior/model.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iostream>
#include <limits>
#include <numbers>

namespace shapeprior {

namespace {

constexpr double kSpectrumCutoff = 1e-10;  // relative to lambda_1

}  // namespace

void diagonalize_scaled_basis(const Eigen::MatrixXd& scaled,
                              Eigen::MatrixXd* basis,
                              Eigen::VectorXd* eigenvalues) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(scaled,
                                     Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  if (s.size() == 0 || s(0) <= 0.0)
    throw ValidationError("model has no variance (rank 0)");
  const double cutoff = kSpectrumCutoff * s(0) * s(0);
  int keep = 0;
  while (keep < s.size() && s(keep) * s(keep) > cutoff) ++keep;
  if (keep == 0) throw ValidationError("model has no variance (rank 0)");
  *basis = svd.matrixU().leftCols(keep);
  *eigenvalues = s.head(keep).array().square();
}

Eigen::MatrixXd LowRankGP::scaled_basis() const {
  return basis * eigenvalues.cwiseSqrt().asDiagonal();
}

void LowRankGP::validate() const {
  reference.validate();
  const int n3 = 3 * vertex_count();
  const int r = rank();
  if (mean.size() != n3 || basis.rows() != n3 || basis.cols() != r)
    throw ValidationError("model dimensions inconsistent");
  if (r < 1 || r > n3) throw ValidationError("model rank out of range");
  for (int i = 0; i < r; ++i) {
    if (!(eigenvalues(i) > 0.0))
      throw ValidationError("eigenvalues must be positive");
    if (i > 0 && eigenvalues(i) > eigenvalues(i - 1))
      throw ValidationError("eigenvalues must be descending");
  }
  Eigen::MatrixXd gram = basis.transpose() * basis;
  if ((gram - Eigen::MatrixXd::Identity(r, r)).cwiseAbs().maxCoeff() > 1e-8)
    throw ValidationError("basis columns are not orthonormal");
}

LowRankGP LowRankGP::truncated(int r) const {
  if (r >= rank()) return *this;
  LowRankGP out;
  out.mean = mean;
  out.eigenvalues = eigenvalues.head(r);
  out.basis = basis.leftCols(r);
  out.reference = reference;
  return out;
}

LowRankGP build_empirical(const std::vector<DeformationField>& fields,
                          const TriangleMesh& reference, int rank) {
  if (fields.size() < 2)
    throw ValidationError("need at least 2 fields to build a model");
  const int n3 = 3 * reference.vertex_count();
  const auto n = static_cast<int>(fields.size());
  for (const auto& f : fields)
    if (f.size() != n3)
      throw ValidationError("field length does not match reference");

  LowRankGP model;
  model.reference = reference;
  model.mean = Eigen::VectorXd::Zero(n3);
  for (const auto& f : fields) model.mean += f;
  model.mean /= n;

  Eigen::MatrixXd data(n3, n);
  for (int i = 0; i < n; ++i) data.col(i) = fields[i] - model.mean;
  data /= std::sqrt(static_cast<double>(n - 1));

  diagonalize_scaled_basis(data, &model.basis, &model.eigenvalues);

  if (rank >= 0 && rank < model.rank()) {
    model = model.truncated(rank);
  } else if (rank > model.rank()) {
    std::cerr << "warning: requested rank " << rank << " > available "
              << model.rank() << ", clamping\n";
  }
  return model;
}

DeformationField sample(const LowRankGP& model,
                        const ShapeCoefficients& alpha) {
  if (alpha.size() != model.rank())
    throw ValidationError("coefficient dimension mismatch");
  return model.mean +
         model.basis * (model.eigenvalues.cwiseSqrt().cwiseProduct(alpha));
}

CoefficientResult coefficients(const LowRankGP& model,
                               const DeformationField& field) {
  if (field.size() != model.mean.size())
    throw ValidationError("field length does not match model");
  Eigen::VectorXd centered = field - model.mean;
  Eigen::VectorXd proj = model.basis.transpose() * centered;
  CoefficientResult result;
  result.alpha = proj.cwiseQuotient(model.eigenvalues.cwiseSqrt());
  result.residual_norm = (centered - model.basis * proj).norm();
  return result;
}

double log_density(const LowRankGP& model, const ShapeCoefficients& alpha) {
  if (alpha.size() != model.rank())
    throw ValidationError("coefficient dimension mismatch");
  return -0.5 * alpha.squaredNorm() -
         0.5 * model.rank() * std::log(2.0 * std::numbers::pi);
}

void KernelMixtureConfig::validate() const {
  if (weights.size() != sigmas.size())
    throw ValidationError("kernel mixture weights/sigmas length mismatch");
  if (weights.empty()) throw ValidationError("empty kernel mixture");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] < 0.0)
      throw ValidationError("kernel weights must be non-negative");
    if (!(sigmas[i] > 0.0))
      throw ValidationError("kernel sigmas must be positive");
  }
}

LowRankGP build_localized(const LowRankGP& base, const KernelMixtureConfig& mix,
                          int rank) {
  base.validate();
  mix.validate();
  const int n3 = 3 * base.vertex_count();
  if (rank < 1 || rank > n3)
    throw ValidationError("localized rank out of range");

  double w_emp = 0.0;
  std::vector<std::pair<double, double>> gaussians;  // (weight, sigma)
  for (std::size_t i = 0; i < mix.weights.size(); ++i) {
    if (std::isinf(mix.sigmas[i]))
      w_emp += mix.weights[i];
    else if (mix.weights[i] > 0.0)
      gaussians.emplace_back(mix.weights[i], mix.sigmas[i]);
  }

  const Eigen::MatrixXd scaled = base.scaled_basis();
  const auto& verts = base.reference.vertices;

  // Covariance entry of the mixture; Gaussian terms act per coordinate.
  auto cov = [&](int a, int b) {
    double v = 0.0;
    if (w_emp > 0.0) v += w_emp * scaled.row(a).dot(scaled.row(b));
    if (a % 3 == b % 3) {
      double d2 = (verts[a / 3] - verts[b / 3]).squaredNorm();
      for (const auto& [w, sigma] : gaussians)
        v += w * std::exp(-d2 / (sigma * sigma));
    }
    return v;
  };

  // Pivoted Cholesky with monotone trace-residual stopping.
  Eigen::VectorXd diag(n3);
  for (int i = 0; i < n3; ++i) diag(i) = cov(i, i);
  const double trace0 = diag.sum();
  if (!(trace0 > 0.0)) throw ValidationError("mixture covariance is zero");

  Eigen::MatrixXd chol(n3, rank);
  int m = 0;
  for (; m < rank; ++m) {
    int pivot;
    double dmax = diag.maxCoeff(&pivot);
    if (diag.sum() < 1e-6 * trace0 || dmax <= 0.0) break;
    Eigen::VectorXd col(n3);
    for (int i = 0; i < n3; ++i) col(i) = cov(i, pivot);
    if (m > 0)
      col -= chol.leftCols(m) * chol.row(pivot).head(m).transpose();
    col /= std::sqrt(col(pivot));
    chol.col(m) = col;
    diag -= col.cwiseAbs2();
    diag = diag.cwiseMax(0.0);
  }

  LowRankGP out;
  out.reference = base.reference;
  out.mean = base.mean;
  diagonalize_scaled_basis(chol.leftCols(m), &out.basis, &out.eigenvalues);
  return out;
}

namespace {

template <typename T>
void write_raw(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in, const std::string& path) {
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw ParseError(path + ": truncated model file");
  return value;
}

void write_array(std::ostream& out, const double* data, std::size_t count) {
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(count * sizeof(double)));
}

void read_array(std::istream& in, double* data, std::size_t count,
                const std::string& path) {
  in.read(reinterpret_cast<char*>(data),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw ParseError(path + ": truncated model file");
}

constexpr char kMagic[4] = {'G', 'P', 'M', 'M'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_model(const LowRankGP& model, const std::string& path) {
  model.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(kMagic, 4);
  write_raw(out, kVersion);
  write_raw(out, static_cast<std::uint64_t>(model.vertex_count()));
  write_raw(out, static_cast<std::uint64_t>(model.rank()));
  write_array(out, model.mean.data(), model.mean.size());
  write_array(out, model.eigenvalues.data(), model.eigenvalues.size());
  write_array(out, model.basis.data(), model.basis.size());  // column-major
  const std::string ply = mesh_to_ply_string(model.reference);
  write_raw(out, static_cast<std::uint64_t>(ply.size()));
  out.write(ply.data(), static_cast<std::streamsize>(ply.size()));
  if (!out) throw IoError("write failed for " + path);
}

LowRankGP load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError(path + ": not a GPMM model file");
  const auto version = read_raw<std::uint32_t>(in, path);
  if (version != kVersion)
    throw ParseError(path + ": unsupported model version " +
                     std::to_string(version));
  const auto n = read_raw<std::uint64_t>(in, path);
  const auto r = read_raw<std::uint64_t>(in, path);
  if (n == 0 || r == 0 || r > 3 * n)
    throw ParseError(path + ": implausible model dimensions");

  LowRankGP model;
  model.mean.resize(3 * n);
  model.eigenvalues.resize(r);
  model.basis.resize(3 * n, r);
  read_array(in, model.mean.data(), model.mean.size(), path);
  read_array(in, model.eigenvalues.data(), model.eigenvalues.size(), path);
  read_array(in, model.basis.data(), model.basis.size(), path);
  const auto ply_size = read_raw<std::uint64_t>(in, path);
  std::string ply(ply_size, '\0');
  in.read(ply.data(), static_cast<std::streamsize>(ply_size));
  if (!in) throw ParseError(path + ": truncated model file");
  model.reference = mesh_from_ply_string(ply, path);
  if (model.reference.vertex_count() != static_cast<int>(n))
    throw ValidationError(path + ": embedded mesh size mismatch");
  model.validate();
  return model;
}

}  // namespace shapeprior
