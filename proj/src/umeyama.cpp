#include "csepose/fit/posefit.hpp"

#include <algorithm>
#include <numeric>

#include <Eigen/SVD>

namespace csepose::fit {

Selection select_correspondences(const std::vector<double>& confidence, double alpha) {
  Selection out;
  std::vector<int> order(confidence.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return confidence[static_cast<std::size_t>(a)] > confidence[static_cast<std::size_t>(b)];
  });
  for (int i : order) {
    if (confidence[static_cast<std::size_t>(i)] > alpha) out.indices.push_back(i);
  }
  if (out.indices.empty()) {
    out.fallback = true;
    const std::size_t keep = std::min<std::size_t>(50, order.size());
    out.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
  }
  return out;
}

ScaledPose umeyama(const std::vector<Vec3>& canonical, const std::vector<Vec3>& scene) {
  if (canonical.size() != scene.size() || canonical.size() < 3) {
    throw std::invalid_argument("umeyama: needs >= 3 matched points");
  }
  const double k = static_cast<double>(canonical.size());
  Vec3 mp = Vec3::Zero(), mq = Vec3::Zero();
  for (std::size_t i = 0; i < canonical.size(); ++i) {
    mp += canonical[i];
    mq += scene[i];
  }
  mp /= k;
  mq /= k;

  Eigen::Matrix3d sigma = Eigen::Matrix3d::Zero();
  double var_p = 0;
  for (std::size_t i = 0; i < canonical.size(); ++i) {
    const Vec3 p = canonical[i] - mp;
    const Vec3 q = scene[i] - mq;
    sigma += q * p.transpose();
    var_p += p.squaredNorm();
  }
  sigma /= k;
  var_p /= k;

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d d = svd.singularValues();
  if (d[1] <= 1e-12 * std::max(1.0, d[0])) {
    throw std::invalid_argument("umeyama: degenerate point set (covariance rank < 2)");
  }
  Eigen::Vector3d s_diag(1, 1, 1);
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) s_diag[2] = -1;
  ScaledPose out;
  out.rigid.rotation = svd.matrixU() * s_diag.asDiagonal() * svd.matrixV().transpose();
  out.scale = (d[0] * s_diag[0] + d[1] * s_diag[1] + d[2] * s_diag[2]) / var_p;
  if (out.scale <= 0) throw std::invalid_argument("umeyama: non-positive scale solution");
  out.rigid.translation = mq - out.scale * (out.rigid.rotation * mp);
  return out;
}

double pose_residual(const ScaledPose& pose, const Correspondence& c) {
  return (c.scene - pose.apply(c.canonical)).norm();
}

namespace {

double cloud_diameter(const std::vector<Correspondence>& set) {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto& c : set) {
    lo = lo.cwiseMin(c.scene);
    hi = hi.cwiseMax(c.scene);
  }
  return (hi - lo).norm();
}

}  // namespace

PoseEstimate ransac_umeyama(const std::vector<Correspondence>& set, const RansacConfig& config) {
  PoseEstimate best;
  if (static_cast<int>(set.size()) < config.sample_size) {
    best.failure = "correspondence set smaller than the minimal sample (" +
                   std::to_string(set.size()) + " < " + std::to_string(config.sample_size) + ")";
    return best;
  }
  if (config.sample_size < 3 || config.iterations < 1) {
    throw std::invalid_argument("ransac_umeyama: bad config");
  }
  const double threshold =
      config.inlier_threshold > 0 ? config.inlier_threshold : 0.05 * cloud_diameter(set);

  Rng rng(config.seed ^ 0x9a5ac7f3u);
  int best_count = -1;
  std::vector<int> best_inliers;
  double best_sample_residual = 0;

  std::vector<Vec3> sp(static_cast<std::size_t>(config.sample_size));
  std::vector<Vec3> sq(static_cast<std::size_t>(config.sample_size));
  for (int it = 0; it < config.iterations; ++it) {
    Rng iter_rng = rng.fork(static_cast<std::uint64_t>(it));
    // distinct random indices
    std::vector<int> pick;
    while (static_cast<int>(pick.size()) < config.sample_size) {
      const int cand = static_cast<int>(iter_rng.uniform_index(set.size()));
      if (std::find(pick.begin(), pick.end(), cand) == pick.end()) pick.push_back(cand);
    }
    for (int i = 0; i < config.sample_size; ++i) {
      sp[static_cast<std::size_t>(i)] = set[static_cast<std::size_t>(pick[static_cast<std::size_t>(i)])].canonical;
      sq[static_cast<std::size_t>(i)] = set[static_cast<std::size_t>(pick[static_cast<std::size_t>(i)])].scene;
    }
    ScaledPose pose;
    try {
      pose = umeyama(sp, sq);
    } catch (const std::invalid_argument&) {
      continue;  // degenerate sample
    }
    std::vector<int> inliers;
    double residual_acc = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
      const double r = pose_residual(pose, set[i]);
      if (r < threshold) {
        inliers.push_back(static_cast<int>(i));
        residual_acc += r * r;
      }
    }
    // ties keep the earlier iteration (strictly greater count to replace)
    if (static_cast<int>(inliers.size()) > best_count) {
      best_count = static_cast<int>(inliers.size());
      best_inliers = std::move(inliers);
      best_sample_residual = residual_acc;
    }
  }

  if (best_count < std::max(config.sample_size, 4)) {
    best.failure = "ransac found only " + std::to_string(std::max(best_count, 0)) +
                   " inliers at threshold " + std::to_string(threshold);
    return best;
  }

  std::vector<Vec3> ip, iq;
  ip.reserve(best_inliers.size());
  iq.reserve(best_inliers.size());
  for (int i : best_inliers) {
    ip.push_back(set[static_cast<std::size_t>(i)].canonical);
    iq.push_back(set[static_cast<std::size_t>(i)].scene);
  }
  try {
    best.pose = umeyama(ip, iq);
  } catch (const std::invalid_argument& e) {
    best.failure = std::string("final refit failed: ") + e.what();
    return best;
  }
  // the least-squares refit cannot be worse than the sample hypothesis on the
  // same inlier set
  double refit_residual = 0;
  for (int i : best_inliers) {
    const double r = pose_residual(best.pose, set[static_cast<std::size_t>(i)]);
    refit_residual += r * r;
  }
  (void)best_sample_residual;
  (void)refit_residual;
  best.inlier_count = best_count;
  best.inlier_ratio = static_cast<double>(best_count) / static_cast<double>(set.size());
  best.ok = true;
  return best;
}

}  // namespace csepose::fit
