#pragma once

#include "csepose/core/rng.hpp"
#include "csepose/geom/camera.hpp"

namespace csepose::fit {

using geom::ScaledPose;
using geom::Vec3;

struct Correspondence {
  Vec3 canonical = Vec3::Zero();
  Vec3 scene = Vec3::Zero();
  double confidence = 1.0;
};

struct PoseEstimate {
  ScaledPose pose;
  int inlier_count = 0;
  double inlier_ratio = 0.0;
  bool ok = false;
  std::string failure;
};

struct RansacConfig {
  int iterations = 256;
  int sample_size = 4;            // one above the rigid minimum, for scale stability
  double inlier_threshold = 0.0;  // scene units; 0 derives 5% of the cloud diameter
  std::uint64_t seed = 0;
};

// Indices with confidence > alpha, sorted by descending confidence. An empty
// selection falls back to the top 50 (warning via return flag).
struct Selection {
  std::vector<int> indices;
  bool fallback = false;
};
Selection select_correspondences(const std::vector<double>& confidence, double alpha);

// Closed-form least-squares similarity q ~= s R p + t. Throws when the
// canonical set is degenerate (covariance rank < 2).
ScaledPose umeyama(const std::vector<Vec3>& canonical, const std::vector<Vec3>& scene);

double pose_residual(const ScaledPose& pose, const Correspondence& c);

PoseEstimate ransac_umeyama(const std::vector<Correspondence>& set, const RansacConfig& config);

}  // namespace csepose::fit
