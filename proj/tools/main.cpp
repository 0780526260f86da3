// Command-line driver: build / project / reconstruct / bench.
#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "shapeprior/align.hpp"
#include "shapeprior/bench.hpp"
#include "shapeprior/inference.hpp"
#include "shapeprior/model.hpp"
#include "shapeprior/project.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace shapeprior;

namespace {

struct GlobalOpts {
  std::uint64_t seed = 42;
  int threads = 0;  // 0 = unset, fall back to SHAPEPRIOR_THREADS, then 1
  bool verbose = false;

  int resolved_threads() const {
    if (threads > 0) return threads;
    if (const char* env = std::getenv("SHAPEPRIOR_THREADS")) {
      const int t = std::atoi(env);
      if (t > 0) return t;
    }
    return 1;
  }
};

void vlog(const GlobalOpts& g, const std::string& msg) {
  if (g.verbose) std::cerr << "[shapeprior] " << msg << "\n";
}

// Flat key=value config files; '#' starts a comment line.
std::map<std::string, std::string> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::map<std::string, std::string> cfg;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ParseError(path + ": empty key in config line '" + line + "'");
    cfg[key] = value;
  }
  return cfg;
}

double cfg_num(const std::map<std::string, std::string>& cfg,
               const std::string& key, double fallback) {
  auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw ParseError("config value for '" + key + "' is not a number: " +
                     it->second);
  }
}

std::string cfg_str(const std::map<std::string, std::string>& cfg,
                    const std::string& key, const std::string& fallback) {
  auto it = cfg.find(key);
  return it == cfg.end() ? fallback : it->second;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<double> split_numbers(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) out.push_back(std::stod(item));
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed for " + path);
}

int cmd_build(const GlobalOpts& g, const std::string& mesh_dir,
              const std::string& mask_path, bool rotations,
              const std::string& out_path) {
  std::vector<fs::path> files;
  {
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(mesh_dir, ec))
      if (entry.path().extension() == ".ply") files.push_back(entry.path());
    if (ec) throw IoError("cannot list " + mesh_dir + ": " + ec.message());
  }
  std::sort(files.begin(), files.end());
  if (files.size() < 2)
    throw ValidationError("need at least 2 PLY meshes in " + mesh_dir);

  std::vector<TriangleMesh> meshes;
  for (const auto& f : files) {
    meshes.push_back(load_mesh(f.string()));
    if (meshes.back().vertex_count() != meshes.front().vertex_count())
      throw ValidationError("vertex count mismatch: " + f.string());
  }
  const TriangleMesh& reference = meshes.front();
  const int n = reference.vertex_count();
  const DomainMask mask =
      mask_path.empty() ? DomainMask::full(n) : load_mask(mask_path, n);

  std::vector<DeformationField> fields;
  for (const auto& m : meshes) {
    DeformationField u(3 * n);
    for (int i = 0; i < n; ++i)
      u.segment<3>(3 * i) = m.vertices[i] - reference.vertices[i];
    fields.push_back(std::move(u));
  }
  vlog(g, "running GPA on " + std::to_string(fields.size()) + " shapes");
  const GpaResult aligned = gpa(fields, mask, reference, rotations);
  const LowRankGP model = build_empirical(aligned.fields, reference);
  save_model(model, out_path);

  std::printf("built model: N=%d rank=%d\n", n, model.rank());
  std::printf("spectrum (mm^2):");
  for (int i = 0; i < std::min(model.rank(), 8); ++i)
    std::printf(" %.6g", model.eigenvalues(i));
  if (model.rank() > 8) std::printf(" ...");
  std::printf("\n");
  return 0;
}

int cmd_project(const GlobalOpts& g, const std::string& model_path,
                const std::string& mask_path, bool rotations,
                bool project_mean, const std::string& out_path) {
  const LowRankGP input = load_model(model_path);
  const DomainMask mask = load_mask(mask_path, input.vertex_count());
  vlog(g, "projecting rank-" + std::to_string(input.rank()) + " model");
  const LowRankGP output = project_model(input, mask, rotations, project_mean);
  save_model(output, out_path);

  const double in_mass = input.eigenvalues.sum();
  const double out_mass = output.eigenvalues.sum();
  std::printf("projected model: rank %d -> %d\n", input.rank(), output.rank());
  std::printf("variance mass: %.6g -> %.6g mm^2 (dropped %.6g)\n", in_mass,
              out_mass, in_mass - out_mass);
  return 0;
}

int cmd_reconstruct(const GlobalOpts& g, const std::string& model_path,
                    const std::string& target_path, const std::string& method,
                    const std::string& mask_path, int iters,
                    std::int64_t samples, std::int64_t burn_in, double sigma,
                    bool rotations, const std::string& out_prefix) {
  const LowRankGP model = load_model(model_path);
  const TriangleMesh target = load_mesh(target_path);

  ReconstructOptions opts;
  opts.method = method;
  opts.likelihood.sigma = sigma;
  opts.iters = iters;
  opts.samples = samples;
  opts.burn_in = burn_in;
  opts.seed = g.seed;
  opts.rotations = rotations;
  if (!mask_path.empty()) {
    opts.has_mask = true;
    opts.mask = load_mask(mask_path, model.vertex_count());
  }

  vlog(g, "reconstructing with method " + method);
  const ReconstructResult result = reconstruct(model, target, opts);

  TriangleMesh fit = result.model.reference;
  for (int i = 0; i < fit.vertex_count(); ++i)
    fit.vertices[i] =
        result.summary.mean_points.segment<3>(3 * i);
  save_mesh(fit, out_prefix + "_map.ply");

  std::string csv = "index,var_mm2\n";
  char buf[64];
  for (int i = 0; i < result.summary.vertex_variance.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%d,%.17g\n", i,
                  result.summary.vertex_variance(i));
    csv += buf;
  }
  write_text(out_prefix + "_variance.csv", csv);

  json summary;
  summary["method"] = method;
  summary["seed"] = g.seed;
  summary["model_rank"] = result.model.rank();
  summary["mask_size"] = result.mask.size();
  summary["map_log_posterior"] = result.summary.map_log_posterior;
  summary["samples_retained"] = result.summary.samples_retained;
  json rates = json::object();
  for (const auto& [name, rate] : result.summary.acceptance_rates)
    rates[name] = rate;
  summary["acceptance_rates"] = rates;
  write_text(out_prefix + "_summary.json", summary.dump(2) + "\n");

  std::printf("reconstruction done: mask=%d log_posterior=%.6g\n",
              result.mask.size(), result.summary.map_log_posterior);
  return 0;
}

SyntheticFamilyConfig family_from_config(
    const std::map<std::string, std::string>& cfg, std::uint64_t seed) {
  SyntheticFamilyConfig fam;
  fam.base_shape = cfg_str(cfg, "base_shape", fam.base_shape);
  fam.n_shapes = static_cast<int>(cfg_num(cfg, "n_shapes", fam.n_shapes));
  fam.rings = static_cast<int>(cfg_num(cfg, "rings", fam.rings));
  fam.segments = static_cast<int>(cfg_num(cfg, "segments", fam.segments));
  fam.length = cfg_num(cfg, "length", fam.length);
  fam.radius = cfg_num(cfg, "radius", fam.radius);
  fam.deform_scale = cfg_num(cfg, "deform_scale", fam.deform_scale);
  fam.deform_amplitude = cfg_num(cfg, "deform_amplitude",
                                 fam.deform_amplitude);
  fam.rigid_translation_std =
      cfg_num(cfg, "rigid_translation_std", fam.rigid_translation_std);
  fam.rigid_rotation_std =
      cfg_num(cfg, "rigid_rotation_std", fam.rigid_rotation_std);
  fam.seed = static_cast<std::uint64_t>(cfg_num(cfg, "seed",
                                                static_cast<double>(seed)));
  return fam;
}

int cmd_bench(const GlobalOpts& g, const std::string& experiment,
              const std::string& config_path, const std::string& out_path) {
  std::map<std::string, std::string> cfg;
  if (!config_path.empty()) cfg = read_config(config_path);

  if (experiment == "hinge") {
    HingeConfig hc;
    hc.arm_length = cfg_num(cfg, "arm_length", hc.arm_length);
    hc.angle_mean = cfg_num(cfg, "angle_mean", hc.angle_mean);
    hc.points_per_arm =
        static_cast<int>(cfg_num(cfg, "points_per_arm", hc.points_per_arm));
    hc.n_shapes = static_cast<int>(cfg_num(cfg, "n_shapes", hc.n_shapes));
    hc.seed = static_cast<std::uint64_t>(
        cfg_num(cfg, "seed", static_cast<double>(g.seed)));
    std::vector<double> phis = {0.1, 0.2, 0.3, 0.4, 0.5};
    if (cfg.count("phis")) phis = split_numbers(cfg.at("phis"));

    vlog(g, "running hinge study");
    const auto rows = hinge_experiment(hc, phis);
    std::string csv =
        "phi,variant,rel_error_observed,rel_error_predicted,angle_mean,"
        "angle_std\n";
    char buf[256];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%.17g,%s,%.17g,%.17g,%.17g,%.17g\n",
                    r.phi, r.variant.c_str(), r.rel_error_observed,
                    r.rel_error_predicted, r.angle_mean, r.angle_std);
      csv += buf;
    }
    write_text(out_path, csv);
  } else if (experiment == "consistency") {
    const SyntheticFamilyConfig fam = family_from_config(cfg, g.seed);
    const FamilyData data = generate_family(fam);
    const DomainMask full = DomainMask::full(data.reference.vertex_count());
    const GpaResult aligned = gpa(data.fields, full, data.reference, true);
    const LowRankGP prior = build_empirical(aligned.fields, data.reference);

    DomainMask mask;
    cut_by_plane(data.reference, cfg_num(cfg, "mask_ratio", 0.3), &mask);
    const int rank = static_cast<int>(
        cfg_num(cfg, "rank", std::min(3, prior.rank())));
    const int n_targets = static_cast<int>(cfg_num(cfg, "n_targets", 500));
    const double noise = cfg_num(cfg, "noise_sigma", 1.0);
    std::vector<std::string> variants = {"agnostic", "specific", "projected"};
    if (cfg.count("variants")) variants = split_list(cfg.at("variants"));

    std::string csv = "n_targets,variant,symmetric_kl\n";
    char buf[128];
    for (const auto& variant : variants) {
      vlog(g, "self-consistency for variant " + variant);
      const auto curve = self_consistency(prior, variant, rank, n_targets,
                                          mask, g.seed, noise);
      for (const auto& pt : curve) {
        std::snprintf(buf, sizeof buf, "%d,%s,%.17g\n", pt.n_targets,
                      variant.c_str(), pt.symmetric_kl);
        csv += buf;
      }
    }
    write_text(out_path, csv);
  } else if (experiment == "loo") {
    const SyntheticFamilyConfig fam = family_from_config(cfg, g.seed);
    std::vector<double> ratios = {0.2, 0.5, 0.8};
    if (cfg.count("ratios")) ratios = split_numbers(cfg.at("ratios"));
    std::vector<std::string> methods = {"nicp", "mh"};
    if (cfg.count("methods")) methods = split_list(cfg.at("methods"));
    std::vector<std::string> variants = {"agnostic", "specific", "projected"};
    if (cfg.count("variants")) variants = split_list(cfg.at("variants"));
    const int n_trials =
        static_cast<int>(cfg_num(cfg, "n_trials", fam.n_shapes));

    vlog(g, "running leave-one-out study");
    const ExperimentReport report =
        leave_one_out(fam, ratios, methods, variants, n_trials, g.seed,
                      g.resolved_threads());
    export_report(report, out_path);
  } else {
    throw ValidationError("unknown experiment: " + experiment);
  }
  std::printf("wrote %s\n", out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank statistical shape models with target-specific "
               "realignment"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may appear after the subcommand

  GlobalOpts g;
  app.add_option("--seed", g.seed, "RNG seed");
  app.add_option("--threads", g.threads,
                 "worker threads (fallback: SHAPEPRIOR_THREADS, then 1)");
  app.add_flag("--verbose", g.verbose, "log progress to stderr");

  std::string mesh_dir, mask_path, out_path, model_path, target_path;
  std::string method = "nicp", experiment, config_path, out_prefix;
  bool rotations = false, project_mean = false;
  int iters = 150;
  std::int64_t samples = 15000, burn_in = 1000;
  double sigma = 1.0;

  auto* build = app.add_subcommand("build", "GPA-align meshes, build a model");
  build->add_option("--meshes", mesh_dir, "directory of PLY meshes")
      ->required();
  build->add_option("--mask", mask_path, "alignment mask file (default full)");
  build->add_flag("--rotations", rotations, "align rotations, not only "
                                            "translations");
  build->add_option("--out", out_path, "output model file")->required();

  auto* project = app.add_subcommand("project",
                                     "realign a model to a mask");
  project->add_option("--model", model_path, "input model")->required();
  project->add_option("--mask", mask_path, "mask file")->required();
  project->add_flag("--rotations", rotations, "project rotations too");
  project->add_flag("--project-mean", project_mean, "also project the mean");
  project->add_option("--out", out_path, "output model file")->required();

  auto* reconstruct = app.add_subcommand("reconstruct",
                                         "fit a model to a target surface");
  reconstruct->add_option("--model", model_path, "model file")->required();
  reconstruct->add_option("--target", target_path, "target PLY")->required();
  reconstruct->add_option("--method", method, "nicp | mh | analytic");
  reconstruct->add_option("--mask", mask_path,
                          "fixed observed-domain mask (default: estimated)");
  reconstruct->add_option("--iters", iters, "nICP iterations");
  reconstruct->add_option("--samples", samples, "MH samples");
  reconstruct->add_option("--burn-in", burn_in, "MH burn-in");
  reconstruct->add_option("--sigma", sigma, "observation noise (mm)");
  reconstruct->add_flag("--rotations,!--no-rotations", rotations,
                        "rotation-extended projection (default on)");
  reconstruct->add_option("--out-prefix", out_prefix, "output path prefix")
      ->required();

  auto* bench = app.add_subcommand("bench", "run a validation experiment");
  bench->add_option("--experiment", experiment, "hinge | consistency | loo")
      ->required();
  bench->add_option("--config", config_path, "key=value config file");
  bench->add_option("--out", out_path, "output CSV")->required();

  reconstruct->parse_complete_callback([&] {
    if (reconstruct->count("--rotations") == 0 &&
        reconstruct->count("--no-rotations") == 0)
      rotations = true;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (build->parsed())
      return cmd_build(g, mesh_dir, mask_path, rotations, out_path);
    if (project->parsed())
      return cmd_project(g, model_path, mask_path, rotations, project_mean,
                         out_path);
    if (reconstruct->parsed())
      return cmd_reconstruct(g, model_path, target_path, method, mask_path,
                             iters, samples, burn_in, sigma, rotations,
                             out_prefix);
    if (bench->parsed())
      return cmd_bench(g, experiment, config_path, out_path);
  } catch (const ValidationError& e) {  // includes ParseError
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DiagnosticsError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
