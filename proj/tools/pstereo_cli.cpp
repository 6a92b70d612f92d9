// Command-line driver: render synthetic datasets, reconstruct surfaces from
// three-image captures, and score reconstructions against ground truth.
//
// Exit codes: 0 ok, 2 usage/config/IO, 3 data validity, 4 numerical failure.

#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pstereo/core.hpp"
#include "pstereo/dgmc.hpp"
#include "pstereo/geometry.hpp"
#include "pstereo/integrator.hpp"
#include "pstereo/io.hpp"
#include "pstereo/metrics.hpp"
#include "pstereo/renderer.hpp"
#include "pstereo/ron.hpp"
#include "pstereo/scene_config.hpp"

namespace {

namespace fs = std::filesystem;
using namespace pstereo;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

PixelMask mask_from_image(const ImageGrid& img) {
  PixelMask mask(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      mask.set(x, y, channel_mean(img, x, y) > 0.5);
  return mask;
}

struct CommonFlags {
  int threads = 1;
  std::optional<std::string> solver;
  std::optional<std::string> init;
  std::optional<double> spec_percentile;
  std::optional<int> curv_window;
  std::optional<double> integrator_tol;
  std::optional<int> integrator_maxiter;
  std::optional<double> fixed_ks;
  std::string lighting = "plps";
};

int cmd_render(const std::string& config_path, int threads) {
  SceneConfig cfg = parse_scene_config(read_text_file(config_path));
  if (cfg.lights.empty())
    throw ConfigError("config has no [light] sections; at least 3 are required");
  validate_light_set(cfg.lights);

  Scene scene;
  ImageGrid gt_normals;
  if (!cfg.surface.empty()) {
    CameraIntrinsics cam = cfg.camera_for(cfg.size, cfg.size);
    AnalyticSurface surf = analytic_surfaces(cfg.surface, cfg.size, cfg.surface_params, &cam);
    scene.depth = surf.depth;
    scene.camera = surf.camera;
    gt_normals = surf.normals;
  } else if (!cfg.depth_pfm.empty()) {
    scene.depth = read_pfm(cfg.depth_pfm);
    scene.camera = cfg.camera_for(scene.depth.width(), scene.depth.height());
    // Ground-truth normals for an externally supplied depth map come from
    // the same discrete gradients the renderer shades with.
    PixelMask full = PixelMask::full(scene.depth.width(), scene.depth.height());
    auto [gx, gy] = depth_gradients(scene.depth, full, scene.camera);
    gt_normals = ImageGrid(scene.depth.width(), scene.depth.height(), 3);
    for (int y = 0; y < scene.depth.height(); ++y)
      for (int x = 0; x < scene.depth.width(); ++x) {
        const Vec3 pt = pixel_to_image_coords(x, y, scene.camera);
        const Vec3 n = unit_normal_from_gradient(pt.x(), pt.y(), scene.depth.at(x, y),
                                                 gx.at(x, y), gy.at(x, y), scene.camera.f);
        gt_normals.at(x, y, 0) = n.x();
        gt_normals.at(x, y, 1) = n.y();
        gt_normals.at(x, y, 2) = n.z();
      }
  } else {
    throw ConfigError("config needs a [surface] block naming a surface or a depth_pfm");
  }
  scene.material = cfg.material;
  scene.lights = cfg.lights;
  scene.mask = PixelMask::full(scene.depth.width(), scene.depth.height());
  scene.channels = cfg.channels;
  scene.validate();

  fs::create_directories(cfg.output);
  const std::vector<ImageGrid> images = render_dataset(scene, threads);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string stem = cfg.output + "/I" + std::to_string(i + 1);
    write_pfm(stem + ".pfm", images[i]);
    write_png(stem + ".png", images[i], 16);
  }
  write_pfm(cfg.output + "/gt_normals.pfm", gt_normals);
  write_pfm(cfg.output + "/gt_depth.pfm", scene.depth);
  std::ofstream echo(cfg.output + "/scene.txt", std::ios::binary);
  echo << serialize_scene_config(cfg);

  std::cout << "rendered " << images.size() << " images to " << cfg.output << "\n";
  return kExitOk;
}

int cmd_reconstruct(const std::string& config_path, const CommonFlags& flags) {
  SceneConfig cfg = parse_scene_config(read_text_file(config_path));
  if (cfg.images.size() < 3)
    throw ConfigError("config lists " + std::to_string(cfg.images.size()) +
                      " images; reconstruction needs at least 3");
  if (flags.solver) cfg.solver = parse_solver_choice(*flags.solver);
  if (flags.init) cfg.init = parse_init_choice(*flags.init);
  if (flags.spec_percentile) cfg.spec_percentile = *flags.spec_percentile;
  if (flags.curv_window) cfg.curv_window = *flags.curv_window;
  if (flags.integrator_tol) cfg.integrator_tol = *flags.integrator_tol;
  if (flags.integrator_maxiter) cfg.integrator_maxiter = *flags.integrator_maxiter;
  if (flags.fixed_ks) cfg.fixed_ks = *flags.fixed_ks;

  std::vector<ImageGrid> images;
  images.reserve(cfg.images.size());
  for (const std::string& p : cfg.images) images.push_back(read_image_normalized(p));
  for (const auto& img : images)
    if (!img.same_shape(images.front())) throw DimensionError("input image shapes differ");

  LightSet lights = cfg.lights;
  if (lights.size() < images.size())
    throw ConfigError("config lists fewer [light] sections than images");
  lights.resize(images.size());
  validate_light_set(lights);
  if (flags.lighting == "dlps") {
    lights = approximate_directional(lights, cfg.initial_depth);
  } else if (flags.lighting != "plps") {
    throw ConfigError("--lighting must be plps or dlps");
  }

  const int W = images.front().width(), H = images.front().height();
  PixelMask mask = PixelMask::full(W, H);
  if (!cfg.mask.empty()) mask = mask_from_image(read_image_normalized(cfg.mask));

  RonConfig ron_cfg = cfg.ron_config();
  ron_cfg.threads = flags.threads;
  CameraIntrinsics camera = cfg.camera_for(W, H);

  RonState state = run_ron(images, lights, camera, ron_cfg, &mask);

  fs::create_directories(cfg.output);
  write_pfm(cfg.output + "/normals.pfm", state.normals);
  write_pfm(cfg.output + "/depth.pfm", state.depth);
  write_pfm(cfg.output + "/albedo.pfm", state.albedo);

  std::ofstream report(cfg.output + "/report.txt", std::ios::binary);
  report << "{\n";
  report << "  \"solver\": \"" << solver_choice_name(cfg.solver) << "\",\n";
  report << "  \"init\": \"" << init_choice_name(cfg.init) << "\",\n";
  report << "  \"lighting\": \"" << flags.lighting << "\",\n";
  report << "  \"sweeps\": " << state.iteration << ",\n";
  report << "  \"m\": " << state.m << ",\n";
  report << "  \"k_s\": " << state.k_s << ",\n";
  report << "  \"albedo_flagged\": " << state.albedo_flagged << ",\n";
  report << "  \"solve_failures\": " << state.solve_failures << ",\n";
  report << "  \"mean_psi_per_sweep\": [";
  for (std::size_t i = 0; i < state.objective_history.size(); ++i)
    report << (i ? ", " : "") << state.objective_history[i];
  report << "]\n}\n";

  std::cout << "reconstructed " << W << "x" << H << " in " << state.iteration
            << " sweep(s), m=" << state.m << ", outputs in " << cfg.output << "\n";
  return kExitOk;
}

std::string find_pfm(const std::string& dir, std::initializer_list<const char*> names) {
  for (const char* n : names) {
    const fs::path p = fs::path(dir) / n;
    if (fs::exists(p)) return p.string();
  }
  std::string tried;
  for (const char* n : names) tried += std::string(tried.empty() ? "" : ", ") + n;
  throw IoError("no PFM found in " + dir + " (tried: " + tried + ")");
}

// PFM stores 32-bit floats, so unit normals come back slightly off unit
// length. Restore it: the radial quantization would otherwise bias the
// angular metric by ~6e-3 degrees, far above its real angular content.
ImageGrid renormalized(ImageGrid field) {
  if (field.channels() != 3) return field;
  for (int y = 0; y < field.height(); ++y)
    for (int x = 0; x < field.width(); ++x) {
      const double nx = field.at(x, y, 0), ny = field.at(x, y, 1), nz = field.at(x, y, 2);
      const double len = std::sqrt(nx * nx + ny * ny + nz * nz);
      if (len < 1e-12) continue;
      field.at(x, y, 0) = nx / len;
      field.at(x, y, 1) = ny / len;
      field.at(x, y, 2) = nz / len;
    }
  return field;
}

int cmd_evaluate(const std::string& est_dir, const std::string& gt_dir,
                 const std::string& align, const std::string& mask_path) {
  const ImageGrid est_n =
      renormalized(read_pfm(find_pfm(est_dir, {"normals.pfm", "gt_normals.pfm"})));
  const ImageGrid gt_n =
      renormalized(read_pfm(find_pfm(gt_dir, {"gt_normals.pfm", "normals.pfm"})));
  const ImageGrid est_z = read_pfm(find_pfm(est_dir, {"depth.pfm", "gt_depth.pfm"}));
  const ImageGrid gt_z = read_pfm(find_pfm(gt_dir, {"gt_depth.pfm", "depth.pfm"}));

  PixelMask mask = PixelMask::full(est_n.width(), est_n.height());
  if (!mask_path.empty()) mask = mask_from_image(read_image_normalized(mask_path));

  DepthAlign da;
  if (align == "mean") da = DepthAlign::Mean;
  else if (align == "none") da = DepthAlign::None;
  else throw ConfigError("--msed-align must be mean or none");

  const double angle = maen(est_n, gt_n, mask);
  const double mse = msed(est_z, gt_z, mask, da);
  std::printf("MAEN_deg=%.10g MSED=%.10g\n", angle, mse);
  return kExitOk;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"photometric-stereo toolkit: render, reconstruct, evaluate"};
  app.require_subcommand(1);

  std::string config_path;
  CommonFlags flags;

  CLI::App* render = app.add_subcommand("render", "render a synthetic dataset from a scene config");
  render->add_option("config", config_path, "scene config file")->required();
  render->add_option("--threads", flags.threads, "worker threads");

  CLI::App* rec = app.add_subcommand("reconstruct", "reconstruct normals/depth/albedo/roughness");
  rec->add_option("config", config_path, "scene config file")->required();
  rec->add_option("--threads", flags.threads, "worker threads");
  std::string solver_opt, init_opt;
  double spec_pct = 0;
  int curv_win = 0;
  double integ_tol = 0;
  int integ_max = 0;
  double fixed_ks = 0;
  rec->add_option("--solver", solver_opt, "bfgs|lm|dogleg");
  rec->add_option("--init", init_opt, "dgmc|flat|lambertian");
  rec->add_option("--spec-percentile", spec_pct, "specular detector percentile");
  rec->add_option("--curv-window", curv_win, "curvature window (odd)");
  rec->add_option("--integrator-tol", integ_tol, "GMRES relative tolerance");
  rec->add_option("--integrator-maxiter", integ_max, "GMRES iteration cap");
  CLI::Option* fixed_ks_opt =
      rec->add_option("--fixed-ks", fixed_ks, "pin k_s (skip the 1 - mean(k_d) closure)");
  rec->add_option("--lighting", flags.lighting, "plps|dlps (point-light vs directional model)");

  CLI::App* eval = app.add_subcommand("evaluate", "compare reconstruction with ground truth");
  std::string est_dir, gt_dir, mask_path;
  std::string align = "mean";
  eval->add_option("est_dir", est_dir, "directory with normals.pfm/depth.pfm")->required();
  eval->add_option("gt_dir", gt_dir, "directory with gt_normals.pfm/gt_depth.pfm")->required();
  eval->add_option("--msed-align", align, "mean|none");
  eval->add_option("--mask", mask_path, "foreground mask image");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitConfig;
  }

  if (render->parsed()) return cmd_render(config_path, flags.threads);
  if (rec->parsed()) {
    if (!solver_opt.empty()) flags.solver = solver_opt;
    if (!init_opt.empty()) flags.init = init_opt;
    if (spec_pct > 0) flags.spec_percentile = spec_pct;
    if (curv_win > 0) flags.curv_window = curv_win;
    if (integ_tol > 0) flags.integrator_tol = integ_tol;
    if (integ_max > 0) flags.integrator_maxiter = integ_max;
    if (fixed_ks_opt->count() > 0) flags.fixed_ks = fixed_ks;
    return cmd_reconstruct(config_path, flags);
  }
  if (eval->parsed()) return cmd_evaluate(est_dir, gt_dir, align, mask_path);
  return kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
}
