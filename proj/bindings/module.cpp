// Python bindings for the main pipeline operations.
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "shapeprior/align.hpp"
#include "shapeprior/bench.hpp"
#include "shapeprior/inference.hpp"
#include "shapeprior/model.hpp"
#include "shapeprior/posterior.hpp"
#include "shapeprior/project.hpp"

namespace py = pybind11;
using namespace shapeprior;

namespace {

Eigen::MatrixXd vertices_matrix(const TriangleMesh& mesh) {
  Eigen::MatrixXd v(mesh.vertex_count(), 3);
  for (int i = 0; i < mesh.vertex_count(); ++i)
    v.row(i) = mesh.vertices[i].transpose();
  return v;
}

Eigen::MatrixXi triangles_matrix(const TriangleMesh& mesh) {
  Eigen::MatrixXi t(static_cast<int>(mesh.triangles.size()), 3);
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i)
    for (int c = 0; c < 3; ++c) t(static_cast<int>(i), c) =
        mesh.triangles[i][c];
  return t;
}

TriangleMesh make_mesh(const Eigen::MatrixXd& vertices,
                       const Eigen::MatrixXi& triangles) {
  TriangleMesh mesh;
  for (Eigen::Index i = 0; i < vertices.rows(); ++i)
    mesh.vertices.emplace_back(vertices.row(i).transpose());
  for (Eigen::Index i = 0; i < triangles.rows(); ++i)
    mesh.triangles.push_back(
        {triangles(i, 0), triangles(i, 1), triangles(i, 2)});
  mesh.validate();
  return mesh;
}

}  // namespace

PYBIND11_MODULE(_shapeprior, m) {
  m.doc() = "Low-rank statistical shape models with target-specific "
            "realignment";

  py::register_exception<ValidationError>(m, "ValidationError",
                                          PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_IOError);
  py::register_exception<DiagnosticsError>(m, "DiagnosticsError",
                                           PyExc_RuntimeError);

  py::class_<TriangleMesh>(m, "TriangleMesh")
      .def(py::init(&make_mesh), py::arg("vertices"), py::arg("triangles"))
      .def_property_readonly("vertices", &vertices_matrix)
      .def_property_readonly("triangles", &triangles_matrix)
      .def("vertex_count", &TriangleMesh::vertex_count)
      .def("centroid", &TriangleMesh::centroid);

  py::class_<DomainMask>(m, "DomainMask")
      .def(py::init([](const std::vector<int>& indices) {
             DomainMask mask;
             mask.indices = indices;
             std::sort(mask.indices.begin(), mask.indices.end());
             return mask;
           }),
           py::arg("indices"))
      .def_static("full", &DomainMask::full, py::arg("n"))
      .def_readonly("indices", &DomainMask::indices)
      .def("size", &DomainMask::size);

  py::class_<LowRankGP>(m, "LowRankGP")
      .def_readonly("mean", &LowRankGP::mean)
      .def_readonly("eigenvalues", &LowRankGP::eigenvalues)
      .def_readonly("basis", &LowRankGP::basis)
      .def_readonly("reference", &LowRankGP::reference)
      .def("rank", &LowRankGP::rank)
      .def("vertex_count", &LowRankGP::vertex_count)
      .def("truncated", &LowRankGP::truncated, py::arg("rank"));

  m.def("load_mesh", &load_mesh, py::arg("path"));
  m.def("save_mesh", &save_mesh, py::arg("mesh"), py::arg("path"));
  m.def("load_mask", &load_mask, py::arg("path"), py::arg("vertex_count"));
  m.def("save_mask", &save_mask, py::arg("mask"), py::arg("path"));
  m.def("load_model", &load_model, py::arg("path"));
  m.def("save_model", &save_model, py::arg("model"), py::arg("path"));

  m.def(
      "gpa",
      [](const std::vector<Eigen::VectorXd>& fields, const DomainMask& mask,
         const TriangleMesh& reference, bool rotations) {
        return gpa(fields, mask, reference, rotations).fields;
      },
      py::arg("fields"), py::arg("mask"), py::arg("reference"),
      py::arg("rotations") = true);

  m.def("build_empirical", &build_empirical, py::arg("fields"),
        py::arg("reference"), py::arg("rank") = -1);
  m.def("sample", &shapeprior::sample, py::arg("model"), py::arg("alpha"));
  m.def(
      "coefficients",
      [](const LowRankGP& model, const DeformationField& field) {
        const CoefficientResult r = coefficients(model, field);
        return py::make_tuple(r.alpha, r.residual_norm);
      },
      py::arg("model"), py::arg("field"));
  m.def("log_density", &log_density, py::arg("model"), py::arg("alpha"));

  m.def("project_model", &project_model, py::arg("model"), py::arg("mask"),
        py::arg("rotations"), py::arg("project_mean") = false);

  m.def(
      "regress",
      [](const LowRankGP& model, const Eigen::MatrixXd& positions,
         const std::vector<int>& indices, double noise_sigma) {
        if (positions.rows() != static_cast<Eigen::Index>(indices.size()) ||
            positions.cols() != 3)
          throw ValidationError("positions must be len(indices) x 3");
        std::vector<Observation> obs;
        for (std::size_t i = 0; i < indices.size(); ++i)
          obs.push_back({indices[i],
                         positions.row(static_cast<Eigen::Index>(i))
                             .transpose(),
                         noise_sigma});
        const CoefficientPosterior post = regress(model, obs);
        const Predictive pred = predictive(model, post);
        py::dict out;
        out["mean_alpha"] = post.mean_alpha;
        out["covariance_alpha"] = post.covariance_alpha;
        out["mean_field"] = pred.mean;
        out["vertex_variance"] = pred.variance;
        return out;
      },
      py::arg("model"), py::arg("positions"), py::arg("indices"),
      py::arg("noise_sigma") = 1.0);

  m.def(
      "reconstruct",
      [](const LowRankGP& model, const TriangleMesh& target,
         const std::string& method, std::uint64_t seed, int iters,
         std::int64_t samples, std::int64_t burn_in, double sigma,
         bool rotations) {
        ReconstructOptions opts;
        opts.method = method;
        opts.seed = seed;
        opts.iters = iters;
        opts.samples = samples;
        opts.burn_in = burn_in;
        opts.likelihood.sigma = sigma;
        opts.rotations = rotations;
        const ReconstructResult result = reconstruct(model, target, opts);
        py::dict out;
        out["mean_points"] = result.summary.mean_points;
        out["vertex_variance"] = result.summary.vertex_variance;
        out["map_log_posterior"] = result.summary.map_log_posterior;
        out["mask"] = result.mask.indices;
        return out;
      },
      py::arg("model"), py::arg("target"), py::arg("method") = "nicp",
      py::arg("seed") = 42, py::arg("iters") = 150,
      py::arg("samples") = 15000, py::arg("burn_in") = 1000,
      py::arg("sigma") = 1.0, py::arg("rotations") = true);
}
