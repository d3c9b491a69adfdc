#include "percap/solver.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "json_io.hpp"
#include "percap/alignment.hpp"
#include "percap/losses.hpp"
#include "percap/raster.hpp"
#include "percap/rotation.hpp"

namespace percap {

using detail::json;

void SolverConfig::validate() const {
  if (pose.iterations < 1 || deform.iterations < 1) throw InvalidInput("solver config: iterations must be >= 1");
  if (pose.step_size <= 0.0 || deform.step_size <= 0.0) throw InvalidInput("solver config: step sizes must be > 0");
  if (pose.final_step_fraction <= 0.0 || deform.final_step_fraction <= 0.0)
    throw InvalidInput("solver config: final_step_fraction must be > 0");
  for (double w : {pose.keypoint_weight, pose.lambda_torso, pose.lambda_elbow_knee, pose.lambda_other,
                   pose.lambda_late, deform.silhouette_weight, deform.keypoint_graph_weight, deform.arap_weight})
    if (w < 0.0) throw InvalidInput("solver config: weights must be >= 0");
  if (pose.limit_weights.size() != pose.limit_breaks.size() + 1)
    throw InvalidInput("solver config: pose.limit_weights needs one entry more than pose.limit_breaks");
  for (double w : pose.limit_weights)
    if (w < 0.0) throw InvalidInput("solver config: pose.limit_weights must be >= 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw InvalidInput("solver config: adam betas must lie in [0, 1)");
  if (smoothing_kernel < 1 || smoothing_kernel % 2 == 0) throw InvalidInput("solver config: smoothing_kernel must be odd");
  if (smoothing_sigma <= 0.0) throw InvalidInput("solver config: smoothing_sigma must be > 0");
  if (input_camera < 0) throw InvalidInput("solver config: input_camera must be >= 0");
}

namespace {

// Reads known keys into place and rejects leftovers so typos do not pass silently.
class ConfigReader {
 public:
  ConfigReader(json j, std::string where) : j_(std::move(j)), where_(std::move(where)) {
    if (!j_.is_object()) throw InvalidInput(where_ + ": expected an object");
  }

  template <typename T>
  void take(const char* key, T& value) {
    if (!j_.contains(key)) return;
    try {
      value = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw InvalidInput(where_ + "." + key + ": " + e.what());
    }
    j_.erase(key);
  }

  json child(const char* key) {
    if (!j_.contains(key)) return json::object();
    json c = j_.at(key);
    j_.erase(key);
    return c;
  }

  void finish() const {
    if (!j_.empty()) throw InvalidInput(where_ + "." + j_.begin().key() + ": unknown key");
  }

 private:
  json j_;
  std::string where_;
};

}  // namespace

SolverConfig solver_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("config: ") + e.what());
  }
  SolverConfig c;
  ConfigReader root(j, "config");
  {
    ConfigReader r(root.child("pose"), "config.pose");
    auto& p = c.pose;
    r.take("iterations", p.iterations);
    r.take("step_size", p.step_size);
    r.take("final_step_fraction", p.final_step_fraction);
    r.take("keypoint_weight", p.keypoint_weight);
    r.take("limit_weights", p.limit_weights);
    r.take("limit_breaks", p.limit_breaks);
    r.take("lambda_torso", p.lambda_torso);
    r.take("lambda_elbow_knee", p.lambda_elbow_knee);
    r.take("lambda_other", p.lambda_other);
    r.take("lambda_late", p.lambda_late);
    r.take("lambda_break", p.lambda_break);
    r.take("use_limits", p.use_limits);
    r.finish();
  }
  {
    ConfigReader r(root.child("deform"), "config.deform");
    auto& d = c.deform;
    r.take("iterations", d.iterations);
    r.take("step_size", d.step_size);
    r.take("final_step_fraction", d.final_step_fraction);
    r.take("silhouette_weight", d.silhouette_weight);
    r.take("keypoint_graph_weight", d.keypoint_graph_weight);
    r.take("arap_weight", d.arap_weight);
    r.finish();
  }
  {
    ConfigReader r(root.child("adam"), "config.adam");
    r.take("beta1", c.adam.beta1);
    r.take("beta2", c.adam.beta2);
    r.take("epsilon", c.adam.epsilon);
    r.finish();
  }
  root.take("convergence_tolerance", c.convergence_tolerance);
  root.take("patience", c.patience);
  root.take("input_camera", c.input_camera);
  root.take("run_deform", c.run_deform);
  root.take("temporal_smoothing", c.temporal_smoothing);
  root.take("smoothing_kernel", c.smoothing_kernel);
  root.take("smoothing_sigma", c.smoothing_sigma);
  root.finish();
  c.validate();
  return c;
}

std::string solver_config_to_json(const SolverConfig& c) {
  const auto& p = c.pose;
  const auto& d = c.deform;
  json j;
  j["pose"] = {{"iterations", p.iterations},
               {"step_size", p.step_size},
               {"final_step_fraction", p.final_step_fraction},
               {"keypoint_weight", p.keypoint_weight},
               {"limit_weights", p.limit_weights},
               {"limit_breaks", p.limit_breaks},
               {"lambda_torso", p.lambda_torso},
               {"lambda_elbow_knee", p.lambda_elbow_knee},
               {"lambda_other", p.lambda_other},
               {"lambda_late", p.lambda_late},
               {"lambda_break", p.lambda_break},
               {"use_limits", p.use_limits}};
  j["deform"] = {{"iterations", d.iterations},
                 {"step_size", d.step_size},
                 {"final_step_fraction", d.final_step_fraction},
                 {"silhouette_weight", d.silhouette_weight},
                 {"keypoint_graph_weight", d.keypoint_graph_weight},
                 {"arap_weight", d.arap_weight}};
  j["adam"] = {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}};
  j["convergence_tolerance"] = c.convergence_tolerance;
  j["patience"] = c.patience;
  j["input_camera"] = c.input_camera;
  j["run_deform"] = c.run_deform;
  j["temporal_smoothing"] = c.temporal_smoothing;
  j["smoothing_kernel"] = c.smoothing_kernel;
  j["smoothing_sigma"] = c.smoothing_sigma;
  return j.dump(1);
}

SolverConfig load_solver_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return solver_config_from_json(ss.str());
  } catch (const InvalidInput& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

void save_solver_config(const SolverConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << solver_config_to_json(config) << '\n';
}

SolverConfig monocular_config(SolverConfig base) {
  base.pose.use_limits = false;
  base.pose.keypoint_weight = 1e-6;
  return base;
}

namespace {

class Adam {
 public:
  Adam(Eigen::Index n, const AdamSettings& s) : s_(s), m_(VecX::Zero(n)), v_(VecX::Zero(n)) {}

  void step(VecX& x, const VecX& g, double lr) {
    ++t_;
    m_ = s_.beta1 * m_ + (1.0 - s_.beta1) * g;
    v_ = s_.beta2 * v_ + (1.0 - s_.beta2) * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(s_.beta1, t_);
    const double c2 = 1.0 - std::pow(s_.beta2, t_);
    x.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + s_.epsilon);
  }

 private:
  AdamSettings s_;
  VecX m_, v_;
  int t_ = 0;
};

double step_size_at(double base, double final_fraction, int iteration, int iterations) {
  if (iterations <= 1) return base;
  return base * std::pow(final_fraction, static_cast<double>(iteration) / (iterations - 1));
}

bool converged(const std::vector<double>& trace, double tolerance, int patience) {
  if (tolerance <= 0.0 || static_cast<int>(trace.size()) <= patience) return false;
  for (std::size_t i = trace.size() - patience; i < trace.size(); ++i) {
    const double prev = trace[i - 1];
    if (std::abs(trace[i] - prev) > tolerance * std::max(std::abs(prev), 1e-300)) return false;
  }
  return true;
}

std::vector<int> resolve_subset(const std::vector<int>& subset, int camera_count) {
  if (!subset.empty()) {
    for (int c : subset)
      if (c < 0 || c >= camera_count) throw InvalidInput("camera subset index " + std::to_string(c) + " out of range");
    return subset;
  }
  std::vector<int> all(camera_count);
  for (int c = 0; c < camera_count; ++c) all[c] = c;
  return all;
}

void check_inputs(const TemplateCharacter& character, const std::vector<Camera>& cameras, const ObservationSet& obs,
                  const SolverConfig& config) {
  config.validate();
  obs.validate(character.skeleton.landmark_count());
  if (obs.camera_count() != static_cast<int>(cameras.size()))
    throw InvalidInput("observations have " + std::to_string(obs.camera_count()) + " views for " +
                       std::to_string(cameras.size()) + " cameras");
  if (config.input_camera >= static_cast<int>(cameras.size()))
    throw InvalidInput("input_camera " + std::to_string(config.input_camera) + " out of range");
}

}  // namespace

PoseParams upright_rest_pose(const Skeleton& skeleton, const Mat3& input_rotation) {
  PoseParams p = PoseParams::rest(skeleton);
  p.alpha = rotation_to_euler(input_rotation);
  return p;
}

VecX landmark_lambda(const Skeleton& skeleton, const PoseStageConfig& config, bool late) {
  VecX lambda(skeleton.landmark_count());
  for (int m = 0; m < skeleton.landmark_count(); ++m) {
    if (late) {
      lambda(m) = config.lambda_late;
      continue;
    }
    switch (skeleton.landmarks[m].weight_class) {
      case LandmarkClass::torso: lambda(m) = config.lambda_torso; break;
      case LandmarkClass::elbow_knee: lambda(m) = config.lambda_elbow_knee; break;
      default: lambda(m) = config.lambda_other; break;
    }
  }
  return lambda;
}

double limit_weight_at(const PoseStageConfig& config, int iteration) {
  if (!config.use_limits) return 0.0;
  const double fraction = static_cast<double>(iteration) / config.iterations;
  for (std::size_t i = 0; i < config.limit_breaks.size(); ++i)
    if (fraction < config.limit_breaks[i]) return config.limit_weights[i];
  return config.limit_weights.back();
}

PoseStageResult solve_pose_frame(const TemplateCharacter& character, const std::vector<Camera>& cameras,
                                 const ObservationSet& obs, const PoseParams& init, const SolverConfig& config,
                                 const std::vector<int>& camera_subset) {
  check_inputs(character, cameras, obs, config);
  const Skeleton& skeleton = character.skeleton;
  const int dofs = skeleton.dof_count();
  if (init.theta.size() != dofs) throw InvalidInput("init pose has wrong DOF count");
  const auto subset = resolve_subset(camera_subset, static_cast<int>(cameras.size()));
  const Mat3 input_rotation = cameras[config.input_camera].rotation();
  const PoseStageConfig& pc = config.pose;

  PoseStageResult out;
  out.params = init;
  std::optional<GlobalAlignment> alignment;
  try {
    alignment.emplace(detection_rays(cameras, obs, subset), skeleton.landmark_count());
  } catch (const DegenerateGeometry& e) {
    out.failed = true;
    out.message = e.what();
    return out;
  }

  const VecX lambda_early = landmark_lambda(skeleton, pc, false);
  const VecX lambda_late = landmark_lambda(skeleton, pc, true);
  const double limit_final = limit_weight_at(pc, pc.iterations - 1);

  auto evaluate = [&](const VecX& x, const VecX& lambda, double w_limit, VecX* grad) {
    const VecX theta = x.head(dofs);
    const Vec3 alpha = x.tail<3>();
    const auto kp = pose_keypoint_loss(skeleton, cameras, obs, *alignment, input_rotation, lambda, theta, alpha, subset);
    double value = pc.keypoint_weight * kp.report.value;
    if (grad) {
      grad->resize(dofs + 3);
      grad->head(dofs) = pc.keypoint_weight * kp.report.gradients.at("theta");
      grad->tail<3>() = pc.keypoint_weight * kp.report.gradients.at("alpha");
    }
    if (w_limit > 0.0) {
      const auto lim = limit_loss(theta, skeleton.limits);
      value += w_limit * lim.value;
      if (grad) grad->head(dofs) += w_limit * lim.gradients.at("theta");
    }
    return value;
  };

  VecX x(dofs + 3);
  x << init.theta, init.alpha;
  VecX best = x;
  double best_value = std::numeric_limits<double>::infinity();
  auto record = [&](const VecX& at, double value) {
    out.trace.push_back(value);
    if (value < best_value) {
      best_value = value;
      best = at;
    }
  };

  Adam adam(x.size(), config.adam);
  VecX grad;
  for (int k = 0; k < pc.iterations; ++k) {
    const bool late = k >= pc.lambda_break * pc.iterations;
    const double w_limit = limit_weight_at(pc, k);
    const double value = evaluate(x, late ? lambda_late : lambda_early, w_limit, &grad);
    const bool reference = late && w_limit == limit_final;
    record(x, reference ? value : evaluate(x, lambda_late, limit_final, nullptr));
    if (!grad.allFinite()) {
      warn("pose stage: non-finite gradient, stopping early");
      break;
    }
    if (converged(out.trace, config.convergence_tolerance, config.patience)) break;
    adam.step(x, grad, step_size_at(pc.step_size, pc.final_step_fraction, k, pc.iterations));
  }
  record(x, evaluate(x, lambda_late, limit_final, nullptr));

  out.params.theta = best.head(dofs);
  out.params.alpha = best.tail<3>();
  const ForwardKinematics fk = forward_kinematics(skeleton, out.params.theta, out.params.alpha);
  out.params.translation = alignment->solve(fk.landmarks * input_rotation);
  return out;
}

DeformStageResult solve_deform_frame(const TemplateCharacter& character, const PoseParams& pose,
                                     const std::vector<Camera>& cameras, const ObservationSet& obs,
                                     const GraphDeformation& init, const SolverConfig& config,
                                     const std::vector<int>& camera_subset) {
  check_inputs(character, cameras, obs, config);
  const int node_count = character.graph.node_count();
  if (init.node_count() != node_count) throw InvalidInput("init deformation has wrong node count");
  const auto subset = resolve_subset(camera_subset, static_cast<int>(cameras.size()));
  const DeformStageConfig& dc = config.deform;

  PoseContext context;
  context.node_transforms = pose_node_transforms(character, pose.theta, pose.alpha);
  context.input_rotation = cameras[config.input_camera].rotation();
  context.translation = pose.translation;

  std::vector<DistanceImage> fields(cameras.size());
  for (int c : subset) fields[c] = silhouette_field(obs.views[c].mask);
  const auto& triangles = character.mesh.triangles();
  const EdgeTopology topology(triangles);

  bool any_terms = false;
  auto evaluate = [&](const VecX& x, VecX* grad) {
    GraphDeformation d{unflatten(x.head(3 * node_count)), unflatten(x.tail(3 * node_count))};
    const Points world = deform_mesh(character, d, context.node_transforms, context.input_rotation,
                                     context.translation)
                             .world;
    const auto terms = prepare_silhouette_terms(world, triangles, topology, cameras, fields, subset);
    any_terms = any_terms || !terms.empty();
    Points grad_v;
    const auto sil = silhouette_loss_points(world, cameras, fields, terms, grad ? &grad_v : nullptr);
    const auto kpg = keypoint_graph_loss(character, d, context, cameras, obs, subset);
    const auto arap = arap_loss(character.graph, d);
    if (grad) {
      Points g_rot = Points::Zero(node_count, 3);
      Points g_trans = Points::Zero(node_count, 3);
      deform_vjp(character, d, context.node_transforms, context.input_rotation, grad_v, g_rot, g_trans);
      grad->resize(6 * node_count);
      grad->head(3 * node_count) = dc.silhouette_weight * flatten(g_rot) +
                                   dc.keypoint_graph_weight * kpg.gradients.at("rotations") +
                                   dc.arap_weight * arap.gradients.at("rotations");
      grad->tail(3 * node_count) = dc.silhouette_weight * flatten(g_trans) +
                                   dc.keypoint_graph_weight * kpg.gradients.at("translations") +
                                   dc.arap_weight * arap.gradients.at("translations");
    }
    return dc.silhouette_weight * sil.value + dc.keypoint_graph_weight * kpg.value + dc.arap_weight * arap.value;
  };

  DeformStageResult out;
  out.deformation = init;
  VecX x(6 * node_count);
  x << flatten(init.rotations), flatten(init.translations);
  VecX best = x;
  double best_value = std::numeric_limits<double>::infinity();
  auto record = [&](const VecX& at, double value) {
    out.trace.push_back(value);
    if (value < best_value) {
      best_value = value;
      best = at;
    }
  };

  Adam adam(x.size(), config.adam);
  VecX grad;
  for (int k = 0; k < dc.iterations; ++k) {
    record(x, evaluate(x, &grad));
    if (!grad.allFinite()) {
      warn("deform stage: non-finite gradient, stopping early");
      break;
    }
    if (converged(out.trace, config.convergence_tolerance, config.patience)) break;
    adam.step(x, grad, step_size_at(dc.step_size, dc.final_step_fraction, k, dc.iterations));
  }
  record(x, evaluate(x, nullptr));

  if (!any_terms) {
    warn("deform stage: no boundary vertices in any camera, keeping the initial deformation");
    return out;
  }
  out.deformation.rotations = unflatten(best.head(3 * node_count));
  out.deformation.translations = unflatten(best.tail(3 * node_count));
  return out;
}

TrackingResult track_sequence(const TemplateCharacter& character, const std::vector<Camera>& cameras,
                              const std::vector<ObservationSet>& sequence, const SolverConfig& config,
                              const std::optional<PoseParams>& init) {
  config.validate();
  TrackingResult result;
  PoseParams pose = init ? *init : upright_rest_pose(character.skeleton, cameras.at(config.input_camera).rotation());
  GraphDeformation deformation = GraphDeformation::zero(character.graph.node_count());
  for (std::size_t f = 0; f < sequence.size(); ++f) {
    FrameResult frame;
    const auto ps = solve_pose_frame(character, cameras, sequence[f], pose, config);
    frame.pose = ps.params;
    frame.pose_trace = ps.trace;
    frame.failed = ps.failed;
    frame.message = ps.message;
    frame.deformation = deformation;
    if (ps.failed) {
      warn("frame " + std::to_string(f) + ": " + ps.message);
    } else if (config.run_deform) {
      const auto ds = solve_deform_frame(character, frame.pose, cameras, sequence[f], deformation, config);
      frame.deformation = ds.deformation;
      frame.deform_trace = ds.trace;
    }
    frame.vertices = deform_mesh(character, frame.deformation,
                                 pose_node_transforms(character, frame.pose.theta, frame.pose.alpha),
                                 cameras[config.input_camera].rotation(), frame.pose.translation)
                         .world;
    pose = frame.pose;
    deformation = frame.deformation;
    result.frames.push_back(std::move(frame));
  }
  if (config.temporal_smoothing && !result.frames.empty()) {
    std::vector<Points> seq;
    for (const auto& fr : result.frames) seq.push_back(fr.vertices);
    const auto smoothed = temporal_smooth(seq, config.smoothing_kernel, config.smoothing_sigma);
    for (std::size_t f = 0; f < smoothed.size(); ++f) result.frames[f].vertices = smoothed[f];
  }
  return result;
}

RefineResult monocular_refine(const TemplateCharacter& character, const std::vector<Camera>& cameras, int camera,
                              const ObservationSet& obs, const PoseParams& init_pose,
                              const GraphDeformation& init_deformation, const SolverConfig& config) {
  if (camera < 0 || camera >= static_cast<int>(cameras.size()))
    throw InvalidInput("refine camera " + std::to_string(camera) + " out of range");
  const SolverConfig mono = monocular_config(config);
  RefineResult out;
  out.pose_stage = solve_pose_frame(character, cameras, obs, init_pose, mono, {camera});
  out.pose = out.pose_stage.params;
  out.deformation = init_deformation;
  if (!out.pose_stage.failed && mono.run_deform) {
    out.deform_stage = solve_deform_frame(character, out.pose, cameras, obs, init_deformation, mono, {camera});
    out.deformation = out.deform_stage.deformation;
  }
  return out;
}

std::vector<double> gaussian_taps(int kernel_size, double sigma) {
  if (kernel_size < 1 || kernel_size % 2 == 0) throw InvalidInput("gaussian_taps: kernel size must be odd");
  const int half = kernel_size / 2;
  std::vector<double> taps(kernel_size);
  for (int k = -half; k <= half; ++k) taps[k + half] = std::exp(-0.5 * k * k / (sigma * sigma));
  return taps;
}

std::vector<Points> temporal_smooth(const std::vector<Points>& sequence, int kernel_size, double sigma) {
  const auto taps = gaussian_taps(kernel_size, sigma);
  const int half = kernel_size / 2;
  const int n = static_cast<int>(sequence.size());
  for (const auto& frame : sequence)
    if (frame.rows() != sequence.front().rows()) throw InvalidInput("temporal_smooth: vertex count changes across frames");
  std::vector<Points> out(n);
  for (int f = 0; f < n; ++f) {
    Points acc = Points::Zero(sequence[f].rows(), 3);
    double total = 0.0;
    for (int k = -half; k <= half; ++k) {
      if (f + k < 0 || f + k >= n) continue;
      acc += taps[k + half] * sequence[f + k];
      total += taps[k + half];
    }
    out[f] = acc / total;
  }
  return out;
}

void save_tracking_result(const TrackingResult& result, const std::vector<Triangle>& triangles,
                          const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json frames = json::array();
  for (std::size_t f = 0; f < result.frames.size(); ++f) {
    const auto& fr = result.frames[f];
    const std::string mesh = "mesh_" + frame_name(static_cast<int>(f)).substr(6) + ".obj";
    save_obj(dir / mesh, fr.vertices, triangles);
    frames.push_back({{"theta", detail::vecx_json(fr.pose.theta)},
                      {"alpha", detail::vec_json(fr.pose.alpha)},
                      {"translation", detail::vec_json(fr.pose.translation)},
                      {"rotations", detail::points_json(fr.deformation.rotations)},
                      {"translations", detail::points_json(fr.deformation.translations)},
                      {"pose_trace", fr.pose_trace},
                      {"deform_trace", fr.deform_trace},
                      {"failed", fr.failed},
                      {"message", fr.message},
                      {"mesh", mesh}});
  }
  detail::write_json(dir / "result.json", {{"frames", frames}});
}

TrackingResult load_tracking_result(const std::filesystem::path& dir) {
  const json j = detail::read_json(dir / "result.json");
  const std::string where = (dir / "result.json").string();
  const auto frames = detail::field<json>(j, "frames", where);
  TrackingResult result;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const json& fj = frames[f];
    const std::string w = where + ".frames[" + std::to_string(f) + "]";
    FrameResult fr;
    fr.pose.theta = detail::vecx_field(fj, "theta", w);
    fr.pose.alpha = detail::vec_field(fj, "alpha", w);
    fr.pose.translation = detail::vec_field(fj, "translation", w);
    fr.deformation.rotations = detail::points_field(fj, "rotations", w);
    fr.deformation.translations = detail::points_field(fj, "translations", w);
    fr.pose_trace = detail::field<std::vector<double>>(fj, "pose_trace", w);
    fr.deform_trace = detail::field<std::vector<double>>(fj, "deform_trace", w);
    fr.failed = detail::field<bool>(fj, "failed", w);
    fr.message = detail::field<std::string>(fj, "message", w);
    fr.vertices = load_obj(dir / detail::field<std::string>(fj, "mesh", w)).vertices();
    result.frames.push_back(std::move(fr));
  }
  return result;
}

}  // namespace percap
