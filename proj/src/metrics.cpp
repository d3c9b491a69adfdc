#include "percap/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include <Eigen/SVD>

#include "json_io.hpp"
#include "percap/deform.hpp"
#include "percap/kinematics.hpp"
#include "percap/raster.hpp"
#include "percap/solver.hpp"

namespace percap {

namespace {

void check_pair(const Points& a, const Points& b, const char* what) {
  if (a.rows() != b.rows()) throw InvalidInput(std::string(what) + ": row counts differ");
  if (a.rows() == 0) throw InvalidInput(std::string(what) + ": no joints");
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / v.size();
}

}  // namespace

Points select_rows(const Points& points, const std::vector<int>& indices) {
  Points out(indices.size(), 3);
  for (std::size_t i = 0; i < indices.size(); ++i) out.row(i) = points.row(indices[i]);
  return out;
}

Points root_align(const Points& points, int root) { return points.rowwise() - points.row(root); }

double pck3d(const Points& pred, const Points& gt, double threshold_mm) {
  check_pair(pred, gt, "pck3d");
  const VecX d = (pred - gt).rowwise().norm() * 1000.0;
  int within = 0;
  // Slack keeps joints placed exactly on the threshold inside despite rounding.
  for (Eigen::Index i = 0; i < d.size(); ++i) within += d(i) <= threshold_mm + 1e-9;
  return 100.0 * within / d.size();
}

std::vector<double> default_auc_thresholds() {
  std::vector<double> t;
  for (int i = 0; i <= 30; ++i) t.push_back(5.0 * i);
  return t;
}

double auc(const Points& pred, const Points& gt, const std::vector<double>& thresholds_mm) {
  if (thresholds_mm.empty()) throw InvalidInput("auc: no thresholds");
  double s = 0.0;
  for (double t : thresholds_mm) s += pck3d(pred, gt, t);
  return s / thresholds_mm.size();
}

Points Similarity::apply(const Points& x) const {
  return ((scale * x * rotation.transpose()).rowwise() + translation.transpose());
}

Similarity procrustes_align(const Points& x, const Points& y) {
  check_pair(x, y, "procrustes_align");
  const Eigen::RowVector3d mx = x.colwise().mean();
  const Eigen::RowVector3d my = y.colwise().mean();
  const Points xc = x.rowwise() - mx;
  const Points yc = y.rowwise() - my;
  const double n = static_cast<double>(x.rows());
  const Mat3 cov = yc.transpose() * xc / n;
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 s = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s(2, 2) = -1.0;
  Similarity out;
  out.rotation = svd.matrixU() * s * svd.matrixV().transpose();
  const double var_x = xc.squaredNorm() / n;
  out.scale = var_x > 0.0 ? svd.singularValues().dot(s.diagonal()) / var_x : 1.0;
  out.translation = my.transpose() - out.scale * out.rotation * mx.transpose();
  return out;
}

double mpjpe(const Points& pred, const Points& gt, bool aligned) {
  check_pair(pred, gt, "mpjpe");
  const Points p = aligned ? procrustes_align(pred, gt).apply(pred) : pred;
  return 1000.0 * (p - gt).rowwise().norm().mean();
}

double gle(const Points& pred_roots, const Points& gt_roots) {
  check_pair(pred_roots, gt_roots, "gle");
  return 1000.0 * (pred_roots - gt_roots).rowwise().norm().mean();
}

IouReport iou_views(const std::vector<Points>& pred_vertices, const std::vector<Triangle>& triangles,
                    const std::vector<Camera>& cameras, const std::vector<std::vector<Mask>>& gt_masks,
                    int input_camera, const std::vector<Vec3>& translation_offsets) {
  if (gt_masks.size() != pred_vertices.size()) throw InvalidInput("iou_views: frame counts differ");
  if (!translation_offsets.empty() && translation_offsets.size() != pred_vertices.size())
    throw InvalidInput("iou_views: one translation offset per frame expected");
  const int c_count = static_cast<int>(cameras.size());
  if (input_camera < 0 || input_camera >= c_count) throw InvalidInput("iou_views: input camera out of range");
  IouReport r;
  double sum_all = 0.0, sum_ref = 0.0, sum_single = 0.0;
  for (std::size_t f = 0; f < pred_vertices.size(); ++f) {
    if (static_cast<int>(gt_masks[f].size()) != c_count) throw InvalidInput("iou_views: one mask per camera expected");
    Points v = pred_vertices[f];
    if (!translation_offsets.empty()) v.rowwise() += translation_offsets[f].transpose();
    double frame_sum = 0.0;
    for (int c = 0; c < c_count; ++c) {
      const double iou = mask_iou(render_mask(v, triangles, cameras[c]), gt_masks[f][c]);
      frame_sum += iou;
      if (c == input_camera) sum_single += iou;
      else sum_ref += iou;
    }
    sum_all += frame_sum;
    r.per_frame_all.push_back(frame_sum / c_count);
  }
  const double frames = static_cast<double>(pred_vertices.size());
  if (frames == 0) return r;
  r.all_views = sum_all / (frames * c_count);
  r.single_view = sum_single / frames;
  r.reference_views = c_count > 1 ? sum_ref / (frames * (c_count - 1)) : std::numeric_limits<double>::quiet_NaN();
  return r;
}

Points frame_landmarks(const TemplateCharacter& character, const Camera& input_camera, const FrameResult& frame) {
  const Points posed = forward_kinematics(character.skeleton, frame.pose.theta, frame.pose.alpha).landmarks;
  return (posed * input_camera.rotation()).rowwise() + frame.pose.translation.transpose();
}

MetricReport evaluate_sequence(const TemplateCharacter& character, const std::vector<Camera>& cameras,
                               const TrackingResult& pred, const TrackingResult& truth,
                               const std::vector<ObservationSet>& observations, const EvalOptions& options) {
  const std::size_t n = pred.frames.size();
  if (truth.frames.size() != n || observations.size() != n)
    throw InvalidInput("evaluate: prediction, ground truth and observations have different frame counts");
  if (options.input_camera < 0 || options.input_camera >= static_cast<int>(cameras.size()))
    throw InvalidInput("evaluate: input camera out of range");
  const auto& subset = character.metric_landmarks;
  if (subset.empty()) throw InvalidInput("evaluate: character has no metric landmarks");
  const Camera& input = cameras[options.input_camera];

  MetricReport r;
  Points all_pred(0, 3), all_gt(0, 3);
  Points roots_pred(n, 3), roots_gt(n, 3);
  std::vector<Points> pred_vertices;
  std::vector<std::vector<Mask>> masks;
  std::vector<Vec3> offsets;
  for (std::size_t f = 0; f < n; ++f) {
    const Points lp = frame_landmarks(character, input, pred.frames[f]);
    const Points lg = frame_landmarks(character, input, truth.frames[f]);
    roots_pred.row(f) = lp.row(character.root_landmark);
    roots_gt.row(f) = lg.row(character.root_landmark);
    const Points p = select_rows(root_align(lp, character.root_landmark), subset);
    const Points g = select_rows(root_align(lg, character.root_landmark), subset);
    r.frame_mpjpe_mm.push_back(mpjpe(p, g, true));
    r.frame_gle_mm.push_back(1000.0 * (roots_pred.row(f) - roots_gt.row(f)).norm());
    r.frame_pck3d_percent.push_back(pck3d(p, g));
    all_pred.conservativeResize(all_pred.rows() + p.rows(), 3);
    all_pred.bottomRows(p.rows()) = p;
    all_gt.conservativeResize(all_gt.rows() + g.rows(), 3);
    all_gt.bottomRows(g.rows()) = g;
    pred_vertices.push_back(pred.frames[f].vertices);
    std::vector<Mask> fm;
    for (const auto& view : observations[f].views) fm.push_back(view.mask);
    masks.push_back(std::move(fm));
    offsets.push_back(truth.frames[f].pose.translation - pred.frames[f].pose.translation);
  }
  if (n == 0) return r;
  r.gle_mm = gle(roots_pred, roots_gt);
  r.pck3d_percent = pck3d(all_pred, all_gt);
  r.auc_percent = auc(all_pred, all_gt, options.auc_thresholds_mm);
  r.mpjpe_mm = mean(r.frame_mpjpe_mm);
  const auto iou = iou_views(pred_vertices, character.mesh.triangles(), cameras, masks, options.input_camera,
                             options.ground_truth_translation ? offsets : std::vector<Vec3>{});
  r.amv_iou = iou.all_views;
  r.rv_iou = iou.reference_views;
  r.sv_iou = iou.single_view;
  r.frame_amv_iou = iou.per_frame_all;
  return r;
}

std::string MetricReport::to_json() const {
  using detail::json;
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json j{{"gle_mm", num(gle_mm)},
         {"pck3d_percent", num(pck3d_percent)},
         {"auc_percent", num(auc_percent)},
         {"mpjpe_mm", num(mpjpe_mm)},
         {"amv_iou", num(amv_iou)},
         {"rv_iou", num(rv_iou)},
         {"sv_iou", num(sv_iou)},
         {"frames",
          {{"mpjpe_mm", frame_mpjpe_mm},
           {"gle_mm", frame_gle_mm},
           {"pck3d_percent", frame_pck3d_percent},
           {"amv_iou", frame_amv_iou}}}};
  return j.dump(1);
}

std::string MetricReport::to_table() const {
  std::ostringstream out;
  out << std::fixed << std::setprecision(3);
  out << "metric          value\n";
  out << "GLE [mm]        " << gle_mm << '\n';
  out << "3DPCK [%]       " << pck3d_percent << '\n';
  out << "AUC [%]         " << auc_percent << '\n';
  out << "MPJPE [mm]      " << mpjpe_mm << '\n';
  out << "AMVIoU          " << amv_iou << '\n';
  out << "RVIoU           " << rv_iou << '\n';
  out << "SVIoU           " << sv_iou << '\n';
  return out.str();
}

}  // namespace percap
