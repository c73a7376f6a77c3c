#include "csepose/evalm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "csepose/geom/sampling.hpp"

namespace csepose::evalm {

namespace {

using Ring = std::vector<Vec3>;

struct ConvexPoly {
  std::vector<Ring> faces;  // outward-wound rings
};

// face index rings for the bit-pattern corner order (x=bit0, y=bit1, z=bit2)
constexpr int kBoxFaces[6][4] = {
    {0, 4, 6, 2},  // -x
    {1, 3, 7, 5},  // +x
    {0, 1, 5, 4},  // -y
    {2, 6, 7, 3},  // +y
    {0, 2, 3, 1},  // -z
    {4, 5, 7, 6},  // +z
};

ConvexPoly box_to_poly(const BoxCorners& c) {
  ConvexPoly p;
  for (const auto& f : kBoxFaces) {
    p.faces.push_back({c[static_cast<std::size_t>(f[0])], c[static_cast<std::size_t>(f[1])],
                       c[static_cast<std::size_t>(f[2])], c[static_cast<std::size_t>(f[3])]});
  }
  return p;
}

struct HalfSpace {
  Vec3 n;
  double d;  // inside: n.x <= d
};

std::array<HalfSpace, 6> box_planes(const BoxCorners& c) {
  const Vec3 center = 0.125 * std::accumulate(c.begin(), c.end(), Vec3(Vec3::Zero()));
  const Vec3 axes[3] = {0.5 * (c[1] - c[0]), 0.5 * (c[2] - c[0]), 0.5 * (c[4] - c[0])};
  std::array<HalfSpace, 6> out;
  for (int a = 0; a < 3; ++a) {
    const double h = axes[a].norm();
    const Vec3 u = h > 0 ? Vec3(axes[a] / h) : Vec3::Unit(a);
    out[static_cast<std::size_t>(2 * a)] = {u, u.dot(center) + h};
    out[static_cast<std::size_t>(2 * a + 1)] = {-u, -u.dot(center) + h};
  }
  return out;
}

double poly_volume(const ConvexPoly& p) {
  double v = 0;
  for (const auto& ring : p.faces) {
    for (std::size_t i = 1; i + 1 < ring.size(); ++i) {
      v += ring[0].dot(ring[i].cross(ring[i + 1])) / 6.0;
    }
  }
  return v;
}

ConvexPoly clip(const ConvexPoly& poly, const HalfSpace& hs, double eps) {
  ConvexPoly out;
  std::vector<Vec3> cap_points;
  for (const auto& ring : poly.faces) {
    Ring kept;
    const std::size_t n = ring.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3& a = ring[i];
      const Vec3& b = ring[(i + 1) % n];
      const double da = hs.n.dot(a) - hs.d;
      const double db = hs.n.dot(b) - hs.d;
      const bool ina = da <= eps, inb = db <= eps;
      if (ina) kept.push_back(a);
      if (ina != inb && std::abs(da - db) > 1e-15) {
        const double t = da / (da - db);
        const Vec3 x = a + t * (b - a);
        kept.push_back(x);
        cap_points.push_back(x);
      }
    }
    if (kept.size() >= 3) out.faces.push_back(std::move(kept));
  }
  // the cut leaves one convex cap; order its points around the plane normal
  if (cap_points.size() >= 3) {
    Vec3 e1 = std::abs(hs.n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    e1 = (e1 - hs.n * e1.dot(hs.n)).normalized();
    const Vec3 e2 = hs.n.cross(e1);
    Vec3 centroid = Vec3::Zero();
    for (const auto& q : cap_points) centroid += q;
    centroid /= static_cast<double>(cap_points.size());
    std::sort(cap_points.begin(), cap_points.end(), [&](const Vec3& a, const Vec3& b) {
      const double aa = std::atan2(e2.dot(a - centroid), e1.dot(a - centroid));
      const double ab = std::atan2(e2.dot(b - centroid), e1.dot(b - centroid));
      return aa < ab;
    });
    // dedupe nearly identical points
    Ring cap;
    for (const auto& q : cap_points) {
      if (cap.empty() || (q - cap.back()).norm() > 1e-10) cap.push_back(q);
    }
    if (cap.size() >= 3 && (cap.front() - cap.back()).norm() <= 1e-10) cap.pop_back();
    if (cap.size() >= 3) out.faces.push_back(std::move(cap));
  }
  return out;
}

double box_volume(const BoxCorners& c) {
  const Vec3 ex = c[1] - c[0], ey = c[2] - c[0], ez = c[4] - c[0];
  return std::abs(ex.dot(ey.cross(ez)));
}

}  // namespace

double iou3d(const BoxCorners& a, const BoxCorners& b) {
  const double va = box_volume(a);
  const double vb = box_volume(b);
  if (va <= 0 || vb <= 0) {
    std::fprintf(stderr, "[csepose] warning: iou3d on a degenerate box (vol %g, %g)\n", va, vb);
    return 0.0;
  }
  const double eps = 1e-12 * (std::cbrt(va) + std::cbrt(vb));
  ConvexPoly poly = box_to_poly(a);
  for (const auto& hs : box_planes(b)) {
    poly = clip(poly, hs, eps);
    if (poly.faces.empty()) return 0.0;
  }
  const double inter = std::max(0.0, poly_volume(poly));
  return inter / (va + vb - inter);
}

std::pair<double, double> pose_error(const ScaledPose& pred, const ScaledPose& gt,
                                     const SymmetrySpec& symmetry, int k_symmetry) {
  std::vector<geom::Mat3> candidates;
  if (symmetry.kind == SymmetryKind::rotation) {
    if (k_symmetry < 1) throw std::invalid_argument("pose_error: k_symmetry must be >= 1");
    for (int k = 0; k < k_symmetry; ++k) {
      candidates.push_back(gt.rigid.rotation *
                           geom::axis_angle(symmetry.axis, 2.0 * M_PI * k / k_symmetry));
    }
  } else if (symmetry.kind == SymmetryKind::flip) {
    candidates.push_back(gt.rigid.rotation);
    candidates.push_back(gt.rigid.rotation * geom::axis_angle(symmetry.axis, M_PI));
  } else {
    candidates.push_back(gt.rigid.rotation);
  }
  double best = std::numeric_limits<double>::infinity();
  for (const auto& cand : candidates) {
    best = std::min(best, geom::geodesic_angle(pred.rigid.rotation, cand));
  }
  const double trans_err = (pred.rigid.translation - gt.rigid.translation).norm();
  return {best * 180.0 / M_PI, trans_err};
}

namespace {

struct CellDef {
  const char* name;
  double iou = -1;            // IoU threshold, or
  double deg = -1, cm = -1;   // joint pose threshold (cm in 1/100 scene units)
};
constexpr CellDef kCells[6] = {
    {"iou_0.25", 0.25, -1, -1}, {"iou_0.5", 0.5, -1, -1},   {"deg5_cm2", -1, 5, 2},
    {"deg5_cm5", -1, 5, 5},     {"deg10_cm2", -1, 10, 2},   {"deg10_cm5", -1, 10, 5},
};

}  // namespace

MetricReport map_report(const std::vector<PosePred>& predictions, const std::vector<PoseGT>& gts,
                        const std::map<std::string, std::pair<Vec3, Vec3>>& category_bounds,
                        int k_symmetry) {
  MetricReport report;
  std::map<std::string, const PosePred*> by_frame;
  for (const auto& p : predictions) by_frame[p.frame_id] = &p;

  std::map<std::string, std::array<int, 6>> passed;
  std::map<std::string, int> totals;
  for (const auto& gt : gts) {
    ++report.frames;
    ++totals[gt.category];
    auto& pass = passed[gt.category];
    auto it = by_frame.find(gt.frame_id);
    if (it == by_frame.end() || !it->second->ok) {
      if (it == by_frame.end()) {
        ++report.unmatched;
        std::fprintf(stderr, "[csepose] eval: no prediction for frame %s\n", gt.frame_id.c_str());
      }
      continue;  // counted as failing every cell
    }
    const PosePred& pred = *it->second;
    const auto bounds_it = category_bounds.find(gt.category);
    if (bounds_it == category_bounds.end()) {
      throw std::invalid_argument("map_report: missing canonical bounds for category " + gt.category);
    }
    const auto [lo, hi] = bounds_it->second;
    const double iou = iou3d(geom::box_corners(lo, hi, pred.pose), geom::box_corners(lo, hi, gt.pose));
    const auto [deg, trans] = pose_error(pred.pose, gt.pose, gt.symmetry, k_symmetry);
    for (int c = 0; c < 6; ++c) {
      const CellDef& cell = kCells[c];
      bool ok = false;
      if (cell.iou > 0) {
        ok = iou >= cell.iou;
      } else {
        ok = deg < cell.deg && trans < cell.cm / 100.0;
      }
      if (ok) ++pass[static_cast<std::size_t>(c)];
    }
  }

  for (int c = 0; c < 6; ++c) {
    double acc = 0;
    for (const auto& [cat, pass] : passed) {
      const double frac = totals[cat] > 0
                              ? static_cast<double>(pass[static_cast<std::size_t>(c)]) / totals[cat]
                              : 0.0;
      report.per_category[cat][kCells[c].name] = frac;
      acc += frac;
    }
    report.cells[kCells[c].name] = passed.empty() ? 0.0 : acc / static_cast<double>(passed.size());
  }
  return report;
}

std::string MetricReport::table() const {
  std::ostringstream out;
  out << "category    IoU_0.25  IoU_0.5   5d2cm     5d5cm     10d2cm    10d5cm\n";
  auto row = [&](const std::string& name, const std::map<std::string, double>& cells_map) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-10s  %-8.3f  %-8.3f  %-8.3f  %-8.3f  %-8.3f  %-8.3f\n",
                  name.c_str(), cells_map.at("iou_0.25"), cells_map.at("iou_0.5"),
                  cells_map.at("deg5_cm2"), cells_map.at("deg5_cm5"), cells_map.at("deg10_cm2"),
                  cells_map.at("deg10_cm5"));
    out << buf;
  };
  for (const auto& [cat, cells_map] : per_category) row(cat, cells_map);
  row("mean", cells);
  return out.str();
}

std::vector<int> keypoint_transfer(const std::vector<Vec3>& keypoint_canonical,
                                   const std::vector<Vec3>& target_pixel_canonical) {
  if (target_pixel_canonical.empty()) {
    throw std::invalid_argument("keypoint_transfer: empty target foreground");
  }
  return geom::nearest_indices(keypoint_canonical, target_pixel_canonical);
}

double pck(const std::vector<Eigen::Vector2d>& predicted, const std::vector<Eigen::Vector2d>& gt,
           double box_h, double box_w, double alpha) {
  if (predicted.size() != gt.size() || predicted.empty()) {
    throw std::invalid_argument("pck: prediction/gt size mismatch or empty");
  }
  const double limit = alpha * std::max(box_h, box_w);
  int ok = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if ((predicted[i] - gt[i]).norm() < limit) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(predicted.size());
}

}  // namespace csepose::evalm
