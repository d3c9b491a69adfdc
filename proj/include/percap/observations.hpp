#pragma once

#include <filesystem>
#include <vector>

#include "percap/core.hpp"

namespace percap {

using Pixels = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

/// Evidence from one camera: 2D landmark detections, silhouette mask and its
/// distance transform.
struct CameraObservation {
  Pixels detections;  ///< M x 2
  VecX confidences;   ///< M, in [0, 1]
  Mask mask;          ///< 0 background, 1 foreground
  DistanceImage distance;
};

struct ObservationSet {
  std::vector<CameraObservation> views;

  int camera_count() const { return static_cast<int>(views.size()); }
  /// Throws InvalidInput when counts or image sizes disagree.
  void validate(int landmark_count) const;
};

/// Detections below this confidence are ignored.
inline constexpr double kConfidenceThreshold = 0.4;

inline double effective_confidence(double sigma) { return sigma < kConfidenceThreshold ? 0.0 : sigma; }

/// Binary PGM (P5), foreground written as 255. Any nonzero byte reads as foreground.
void save_mask_pgm(const Mask& mask, const std::filesystem::path& path);
Mask load_mask_pgm(const std::filesystem::path& path);

/// "DTF1" magic, uint32 width, uint32 height (little endian), then
/// width*height float32 values in row-major order.
void save_distance_image(const DistanceImage& image, const std::filesystem::path& path);
DistanceImage load_distance_image(const std::filesystem::path& path);

/// Frame directory layout: detections.json plus mask_XX.pgm and dt_XX.dtf per camera.
void save_observations(const ObservationSet& obs, const std::filesystem::path& dir);
ObservationSet load_observations(const std::filesystem::path& dir);

/// Sequence layout: frame_0000/, frame_0001/, ...
void save_observation_sequence(const std::vector<ObservationSet>& frames, const std::filesystem::path& dir);
std::vector<ObservationSet> load_observation_sequence(const std::filesystem::path& dir);

std::string frame_name(int frame);

}  // namespace percap
