// Command-line driver: scene generation, tracking, refinement, evaluation and checks.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "percap/checks.hpp"
#include "percap/metrics.hpp"
#include "percap/observations.hpp"
#include "percap/raster.hpp"
#include "percap/solver.hpp"
#include "percap/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace percap;

namespace {

constexpr const char* kVersion = "1.0.0";

enum ExitCode { kOk = 0, kFailure = 1, kInputError = 2, kCheckFailed = 3 };

class CheckFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Clock = std::chrono::steady_clock;

struct Manifest {
  std::string command;
  std::vector<std::string> arguments;  ///< everything except --out
  std::uint64_t seed = 0;
  json config = nullptr;
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;
  std::map<std::string, double> timings;

  void write(const fs::path& path) const {
    json j{{"command", command},
           {"arguments", arguments},
           {"seed", seed},
           {"config", config},
           {"inputs", inputs},
           {"outputs", outputs},
           {"versions",
            {{"percap", kVersion},
             {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                           std::to_string(EIGEN_MINOR_VERSION)}}},
           {"timings_seconds", timings}};
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(1) << '\n';
  }
};

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::vector<std::string> strip_out(const std::vector<std::string>& args) {
  std::vector<std::string> kept;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--out") {
      ++i;
      continue;
    }
    if (args[i].rfind("--out=", 0) == 0) continue;
    kept.push_back(args[i]);
  }
  return kept;
}

void require_file(const fs::path& p, const char* flag) {
  if (!fs::exists(p)) throw LoadError(std::string(flag) + ": " + p.string() + " does not exist");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw LoadError("cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A directory holding result.json directly or a scene with ground_truth/.
fs::path result_dir(const fs::path& p) {
  if (fs::exists(p / "result.json")) return p;
  if (fs::exists(p / "ground_truth" / "result.json")) return p / "ground_truth";
  throw LoadError(p.string() + ": no result.json found");
}

struct TrackInputs {
  std::string character, rig, obs, config, out, init;
  std::uint64_t seed = 0;
  bool smooth = false;
  int single_view = -1;
};

void add_track_options(CLI::App* cmd, TrackInputs& in) {
  cmd->add_option("--character", in.character, "character bundle directory")->required();
  cmd->add_option("--rig", in.rig, "camera rig JSON")->required();
  cmd->add_option("--obs", in.obs, "observation sequence directory")->required();
  cmd->add_option("--config", in.config, "solver config JSON");
  cmd->add_option("--out", in.out, "output directory")->required();
  cmd->add_option("--seed", in.seed, "recorded in the manifest");
  cmd->add_flag("--smooth,!--no-smooth", in.smooth, "temporal smoothing of the output meshes");
}

int cmd_track(const TrackInputs& in, const std::vector<std::string>& args, bool refine) {
  const auto start = Clock::now();
  require_file(in.character, "--character");
  require_file(in.rig, "--rig");
  require_file(in.obs, "--obs");
  const auto character = load_character(in.character);
  const auto cameras = load_rig(in.rig);
  const auto sequence = load_observation_sequence(in.obs);
  SolverConfig config = in.config.empty() ? SolverConfig{} : load_solver_config(in.config);
  config.temporal_smoothing = in.smooth;
  config.validate();
  Manifest m{refine ? "refine" : "track", strip_out(args), in.seed, json::parse(solver_config_to_json(config)), {}, {}, {}};
  m.inputs = {{"character", in.character}, {"rig", in.rig}, {"obs", in.obs}};
  if (!in.config.empty()) m.inputs["config"] = in.config;
  m.timings["load"] = seconds_since(start);

  const auto solve_start = Clock::now();
  TrackingResult result;
  if (!refine) {
    result = track_sequence(character, cameras, sequence, config);
  } else {
    if (in.single_view < 0 || in.single_view >= static_cast<int>(cameras.size()))
      throw InvalidInput("--single-view: camera " + std::to_string(in.single_view) + " out of range");
    std::optional<TrackingResult> init;
    if (!in.init.empty()) {
      init = load_tracking_result(result_dir(in.init));
      m.inputs["init"] = in.init;
      if (init->frames.size() != sequence.size()) throw InvalidInput("--init: frame count differs from --obs");
    }
    PoseParams pose = upright_rest_pose(character.skeleton, cameras[config.input_camera].rotation());
    GraphDeformation deformation = GraphDeformation::zero(character.graph.node_count());
    for (std::size_t f = 0; f < sequence.size(); ++f) {
      if (init) {
        pose = init->frames[f].pose;
        deformation = init->frames[f].deformation;
      }
      const auto r = monocular_refine(character, cameras, in.single_view, sequence[f], pose, deformation, config);
      FrameResult fr;
      fr.pose = r.pose;
      fr.deformation = r.deformation;
      fr.pose_trace = r.pose_stage.trace;
      fr.deform_trace = r.deform_stage.trace;
      fr.failed = r.pose_stage.failed;
      fr.message = r.pose_stage.message;
      fr.vertices = deform_mesh(character, fr.deformation, pose_node_transforms(character, fr.pose.theta, fr.pose.alpha),
                                cameras[config.input_camera].rotation(), fr.pose.translation)
                        .world;
      pose = fr.pose;
      deformation = fr.deformation;
      result.frames.push_back(std::move(fr));
    }
    if (config.temporal_smoothing && !result.frames.empty()) {
      std::vector<Points> seq;
      for (const auto& fr : result.frames) seq.push_back(fr.vertices);
      const auto smoothed = temporal_smooth(seq, config.smoothing_kernel, config.smoothing_sigma);
      for (std::size_t f = 0; f < smoothed.size(); ++f) result.frames[f].vertices = smoothed[f];
    }
  }
  m.timings["solve"] = seconds_since(solve_start);

  const fs::path out(in.out);
  save_tracking_result(result, character.mesh.triangles(), out);
  save_solver_config(config, out / "config.json");
  m.outputs = {{"result", (out / "result.json").string()}, {"config", (out / "config.json").string()}};
  int failed = 0;
  for (std::size_t f = 0; f < result.frames.size(); ++f) {
    const auto& fr = result.frames[f];
    failed += fr.failed;
    const double pose_loss = fr.pose_trace.empty() ? 0.0 : *std::min_element(fr.pose_trace.begin(), fr.pose_trace.end());
    const double deform_loss =
        fr.deform_trace.empty() ? 0.0 : *std::min_element(fr.deform_trace.begin(), fr.deform_trace.end());
    std::printf("frame %4zu  pose_loss %.6g  deform_loss %.6g%s\n", f, pose_loss, deform_loss, fr.failed ? "  FAILED" : "");
  }
  m.timings["total"] = seconds_since(start);
  m.write(out / "manifest.json");
  std::printf("%zu frames, %d failed -> %s\n", result.frames.size(), failed, in.out.c_str());
  return kOk;
}

int cmd_synth(const std::string& spec_path, std::optional<std::uint64_t> seed, std::optional<int> frames,
              const std::string& out, const std::vector<std::string>& args) {
  const auto start = Clock::now();
  SceneSpec spec = spec_path.empty() ? SceneSpec{} : scene_spec_from_json(slurp(spec_path));
  if (seed) spec.seed = *seed;
  if (frames) spec.frames = *frames;
  const auto scene = make_scene(spec);
  save_scene(scene, spec, out);
  Manifest m{"synth", strip_out(args), spec.seed, json::parse(scene_spec_to_json(spec)), {}, {}, {}};
  if (!spec_path.empty()) m.inputs["spec"] = spec_path;
  m.outputs = {{"scene", out}};
  m.timings["total"] = seconds_since(start);
  m.write(fs::path(out) / "manifest.json");
  std::printf("scene: %d vertices, %d nodes, %zu cameras, %d frames -> %s\n", scene.character.mesh.vertex_count(),
              scene.character.graph.node_count(), scene.cameras.size(), spec.frames, out.c_str());
  return kOk;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir, const std::string& out, bool gt_translation,
             std::optional<int> input_camera, const std::vector<std::string>& args) {
  const auto start = Clock::now();
  const fs::path gt(gt_dir);
  require_file(gt / "character", "--gt");
  const auto character = load_character(gt / "character");
  const auto cameras = load_rig(gt / "rig.json");
  const auto observations = load_observation_sequence(gt / "observations");
  const auto truth = load_tracking_result(result_dir(gt));
  const auto pred = load_tracking_result(result_dir(pred_dir));
  EvalOptions options;
  options.ground_truth_translation = gt_translation;
  if (input_camera) {
    options.input_camera = *input_camera;
  } else if (fs::exists(gt / "scene.json")) {
    options.input_camera = scene_spec_from_json(slurp(gt / "scene.json")).input_camera;
  }
  for (std::size_t f = 0; f < pred.frames.size(); ++f)
    if (f < truth.frames.size() && pred.frames[f].vertices.rows() != truth.frames[f].vertices.rows())
      throw InvalidInput("--pred: frame " + std::to_string(f) + " mesh topology differs from the ground truth");
  const auto report = evaluate_sequence(character, cameras, pred, truth, observations, options);
  fs::create_directories(out);
  std::ofstream(fs::path(out) / "metrics.json") << report.to_json() << '\n';
  std::ofstream(fs::path(out) / "metrics.txt") << report.to_table();
  Manifest m{"eval", strip_out(args), 0, nullptr, {{"pred", pred_dir}, {"gt", gt_dir}}, {}, {}};
  m.outputs = {{"metrics", (fs::path(out) / "metrics.json").string()}};
  m.timings["total"] = seconds_since(start);
  m.write(fs::path(out) / "manifest.json");
  std::cout << report.to_table();
  return kOk;
}

int cmd_gradcheck(std::uint64_t seed, double tolerance, int instances, const std::string& out,
                  const std::vector<std::string>& args) {
  const auto start = Clock::now();
  GradientSuiteOptions options;
  options.seed = seed;
  options.tolerance = tolerance;
  options.instances = instances;
  const auto checks = run_gradient_suite(options);
  const std::string table = format_gradient_table(checks);
  std::cout << table;
  bool ok = true;
  for (const auto& c : checks) ok = ok && c.passed();
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream(fs::path(out) / "gradcheck.txt") << table;
    Manifest m{"gradcheck", strip_out(args), seed, nullptr, {}, {{"table", (fs::path(out) / "gradcheck.txt").string()}}, {}};
    m.timings["total"] = seconds_since(start);
    m.write(fs::path(out) / "manifest.json");
  }
  if (!ok) throw CheckFailed("gradient check failed");
  return kOk;
}

int cmd_dt(const std::string& mask_path, const std::string& out, const std::vector<std::string>& args) {
  const auto start = Clock::now();
  require_file(mask_path, "--mask");
  const Mask mask = load_mask_pgm(mask_path);
  save_distance_image(distance_transform(mask), out);
  Manifest m{"dt", strip_out(args), 0, nullptr, {{"mask", mask_path}}, {{"distance", out}}, {}};
  m.timings["total"] = seconds_since(start);
  m.write(fs::path(out).string() + ".manifest.json");
  std::printf("%dx%d distance image -> %s\n", static_cast<int>(mask.cols()), static_cast<int>(mask.rows()), out.c_str());
  return kOk;
}

int run(const std::vector<std::string>& argv);

int cmd_replay(const std::string& manifest_path, const std::string& out) {
  require_file(manifest_path, "--manifest");
  json j;
  try {
    j = json::parse(slurp(manifest_path));
  } catch (const json::exception& e) {
    throw LoadError(manifest_path + ": " + e.what());
  }
  if (!j.contains("command") || !j.contains("arguments")) throw LoadError(manifest_path + ": missing command or arguments");
  std::vector<std::string> argv{j.at("command").get<std::string>()};
  for (const auto& a : j.at("arguments")) argv.push_back(a.get<std::string>());
  if (argv.front() == "replay") throw InvalidInput(manifest_path + ": cannot replay a replay");
  argv.push_back("--out");
  argv.push_back(out);
  return run(argv);
}

int run(const std::vector<std::string>& argv) {
  CLI::App app{"Multi-view performance capture toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  auto* synth = app.add_subcommand("synth", "generate a synthetic scene bundle");
  std::string spec_path, synth_out;
  std::optional<std::uint64_t> synth_seed;
  std::optional<int> synth_frames;
  synth->add_option("--spec", spec_path, "scene spec JSON");
  synth->add_option("--seed", synth_seed, "overrides the spec seed");
  synth->add_option("--frames", synth_frames, "overrides the spec frame count");
  synth->add_option("--out", synth_out, "output directory")->required();

  TrackInputs track_in, refine_in;
  auto* track = app.add_subcommand("track", "multi-view tracking of an observation sequence");
  add_track_options(track, track_in);
  auto* refine = app.add_subcommand("refine", "single-view refinement");
  add_track_options(refine, refine_in);
  refine->add_option("--single-view", refine_in.single_view, "camera index used for refinement")->required();
  refine->add_option("--init", refine_in.init, "tracking result used as initialization");

  auto* eval = app.add_subcommand("eval", "pose and silhouette metrics against ground truth");
  std::string pred_dir, gt_dir, eval_out;
  bool gt_translation = false;
  std::optional<int> eval_camera;
  eval->add_option("--pred", pred_dir, "tracking result directory")->required();
  eval->add_option("--gt", gt_dir, "scene directory")->required();
  eval->add_option("--out", eval_out, "report directory")->required();
  eval->add_flag("--gt-translation", gt_translation, "shift predictions to the ground-truth translation for IoU");
  eval->add_option("--input-camera", eval_camera, "input view index");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every analytical gradient");
  std::uint64_t grad_seed = 7;
  double grad_tol = 0.0;
  int grad_instances = 50;
  std::string grad_out;
  grad->add_option("--seed", grad_seed);
  grad->add_option("--tolerance", grad_tol, "overrides every per-check tolerance");
  grad->add_option("--instances", grad_instances)->check(CLI::PositiveNumber);
  grad->add_option("--out", grad_out, "optional report directory");

  auto* dt = app.add_subcommand("dt", "distance transform of a PGM mask");
  std::string mask_path, dt_out;
  dt->add_option("--mask", mask_path)->required();
  dt->add_option("--out", dt_out, "DTF output file")->required();

  auto* replay = app.add_subcommand("replay", "re-run the command recorded in a manifest");
  std::string manifest_path, replay_out;
  replay->add_option("--manifest", manifest_path)->required();
  replay->add_option("--out", replay_out)->required();

  std::vector<std::string> reversed(argv.rbegin(), argv.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInputError;
  }
  const std::vector<std::string> args(argv.begin() + 1, argv.end());
  if (*synth) return cmd_synth(spec_path, synth_seed, synth_frames, synth_out, args);
  if (*track) return cmd_track(track_in, args, false);
  if (*refine) return cmd_track(refine_in, args, true);
  if (*eval) return cmd_eval(pred_dir, gt_dir, eval_out, gt_translation, eval_camera, args);
  if (*grad) return cmd_gradcheck(grad_seed, grad_tol, grad_instances, grad_out, args);
  if (*dt) return cmd_dt(mask_path, dt_out, args);
  if (*replay) return cmd_replay(manifest_path, replay_out);
  return kInputError;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_pattern("[%l] %v");
  try {
    return run(std::vector<std::string>(argv + 1, argv + argc));
  } catch (const CheckFailed& e) {
    std::cerr << "check failed: " << e.what() << '\n';
    return kCheckFailed;
  } catch (const InvalidInput& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kInputError;
  } catch (const LoadError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
