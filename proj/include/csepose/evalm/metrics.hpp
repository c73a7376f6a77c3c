#pragma once

#include <map>
#include <string>

#include "csepose/geom/camera.hpp"

namespace csepose::evalm {

using geom::ScaledPose;
using geom::SymmetryKind;
using geom::SymmetrySpec;
using geom::Vec3;

using BoxCorners = std::array<Vec3, 8>;

// Exact intersection-over-union of two oriented boxes by half-space clipping.
// Degenerate (zero-volume) boxes score 0.
double iou3d(const BoxCorners& a, const BoxCorners& b);

struct PoseGT {
  std::string frame_id;
  std::string category;
  ScaledPose pose;
  SymmetrySpec symmetry;
};

struct PosePred {
  std::string frame_id;
  std::string category;
  ScaledPose pose;
  bool ok = true;
};

// (rotation degrees, translation scene units); the rotation error is the
// minimum geodesic angle over the symmetry orbit of the ground truth
// (k_symmetry candidates for rotation symmetry; identity + half-turn about
// the axis for flips).
std::pair<double, double> pose_error(const ScaledPose& pred, const ScaledPose& gt,
                                     const SymmetrySpec& symmetry, int k_symmetry = 360);

struct MetricReport {
  // cell name -> pass fraction, averaged over categories
  std::map<std::string, double> cells;
  std::map<std::string, std::map<std::string, double>> per_category;
  int frames = 0;
  int unmatched = 0;
  std::string table() const;  // column layout: IoU_0.25 IoU_0.5 5d2cm 5d5cm 10d2cm 10d5cm
};

// Canonical bounds per category are needed to build the IoU boxes.
MetricReport map_report(const std::vector<PosePred>& predictions, const std::vector<PoseGT>& gts,
                        const std::map<std::string, std::pair<Vec3, Vec3>>& category_bounds,
                        int k_symmetry = 360);

// Keypoint transfer: for each source keypoint's canonical location, the
// target pixel whose canonical location is 3D-nearest (ties -> lowest index).
std::vector<int> keypoint_transfer(const std::vector<Vec3>& keypoint_canonical,
                                   const std::vector<Vec3>& target_pixel_canonical);

// Fraction of predictions within alpha * max(box_h, box_w) pixels.
double pck(const std::vector<Eigen::Vector2d>& predicted, const std::vector<Eigen::Vector2d>& gt,
           double box_h, double box_w, double alpha = 0.1);

}  // namespace csepose::evalm
