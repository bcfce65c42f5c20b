#pragma once

#include "geolabel/map.hpp"

#include <limits>

namespace geolabel {

/// Azimuth/elevation bins with the minimum range seen in each. Bin edges
/// start at -pi (azimuth) and -pi/2 (elevation) with uniform spacing.
class SphericalGrid {
 public:
  struct Bin {
    std::int32_t i, j;
  };

  SphericalGrid(double delta_theta, double delta_phi, double alpha_cull = 0.02)
      : dtheta_(delta_theta), dphi_(delta_phi), alpha_(alpha_cull) {
    if (!(delta_theta > 0.0) || !(delta_phi > 0.0)) throw ParameterError("angular resolution must be positive");
    if (alpha_cull < 0.0) throw ParameterError("alpha_cull must be >= 0");
    n_theta_ = static_cast<std::int32_t>(std::ceil(2.0 * M_PI / dtheta_ - 1e-9));
    n_phi_ = static_cast<std::int32_t>(std::ceil(M_PI / dphi_ - 1e-9));
    rmin_.assign(static_cast<std::size_t>(n_theta_) * n_phi_, std::numeric_limits<double>::infinity());
  }

  double delta_theta() const noexcept { return dtheta_; }
  double delta_phi() const noexcept { return dphi_; }
  double alpha_cull() const noexcept { return alpha_; }
  std::int32_t theta_bins() const noexcept { return n_theta_; }
  std::int32_t phi_bins() const noexcept { return n_phi_; }

  double theta_edge(std::int32_t k) const { return -M_PI + k * dtheta_; }
  double phi_edge(std::int32_t k) const { return -M_PI / 2.0 + k * dphi_; }

  Bin bin_of(const SphericalCoord& s) const {
    auto i = static_cast<std::int32_t>(std::floor((s.theta + M_PI) / dtheta_));
    auto j = static_cast<std::int32_t>(std::floor((s.phi + M_PI / 2.0) / dphi_));
    return {std::clamp(i, 0, n_theta_ - 1), std::clamp(j, 0, n_phi_ - 1)};
  }

  void reset() { std::fill(rmin_.begin(), rmin_.end(), std::numeric_limits<double>::infinity()); }

  void insert(const SphericalCoord& s) {
    double& r = rmin_[flat(bin_of(s))];
    r = std::min(r, s.r);
  }

  double r_min(Bin b) const { return rmin_[flat(b)]; }
  double r_min(std::int32_t i, std::int32_t j) const { return rmin_[flat({i, j})]; }

  /// Range-adaptive slack T(r) = 1 + alpha_cull * r.
  double threshold(double r) const { return 1.0 + alpha_ * r; }

  bool visible(const SphericalCoord& s) const { return s.r <= r_min(bin_of(s)) + threshold(s.r); }

 private:
  std::size_t flat(Bin b) const { return static_cast<std::size_t>(b.j) * n_theta_ + b.i; }

  double dtheta_, dphi_, alpha_;
  std::int32_t n_theta_ = 0, n_phi_ = 0;
  std::vector<double> rmin_;
};

/// Bins `points` as seen from `origin`. Points closer than 1e-6 m to the
/// origin have no direction and are skipped.
inline SphericalGrid build_grid(std::span<const Point3> points, const Point3& origin, double delta_theta,
                                double delta_phi, double alpha_cull = 0.02) {
  SphericalGrid grid(delta_theta, delta_phi, alpha_cull);
  for (const auto& p : points) {
    const Point3 d = p - origin;
    if (d.norm() > kMinSphericalRange) grid.insert(cart_to_spherical(d));
  }
  return grid;
}

/// Visibility per point; origin-coincident points are reported occluded.
inline std::vector<std::uint8_t> cull_occluded(const SphericalGrid& grid, std::span<const Point3> points,
                                               const Point3& origin) {
  std::vector<std::uint8_t> vis(points.size(), 0);
  for (std::size_t k = 0; k < points.size(); ++k) {
    const Point3 d = points[k] - origin;
    if (d.norm() > kMinSphericalRange) vis[k] = grid.visible(cart_to_spherical(d));
  }
  return vis;
}

struct DensifyConfig {
  double delta_theta = 0.2 * kDegToRad;
  double delta_phi = 0.4 * kDegToRad;
  double alpha_cull = 0.02;
  double max_range = 200.0;  ///< m, map points beyond are not rendered
};

struct DensifiedScan {
  Scan scan;
  std::vector<ClassId> labels;
  std::size_t map_points = 0;    ///< how many of the output points came from the map
  std::size_t mover_points = 0;
};

/// Renders the static map plus the frame's movers into the sensor frame of
/// `pose`, keeping only points that survive spherical occlusion culling.
inline DensifiedScan extract_densified_scan(const SemanticMap& map, std::span<const ClassId> map_labels,
                                            std::span<const Point3> mover_points_world,
                                            std::span<const ClassId> mover_labels, const Pose& pose,
                                            const DensifyConfig& cfg) {
  if (!pose.is_special_orthogonal(1e-6)) throw ParameterError("pose rotation is not orthonormal");
  if (map_labels.size() != map.size()) throw AlignmentError("map labels do not match map", map.size(), map_labels.size());
  if (mover_labels.size() != mover_points_world.size())
    throw AlignmentError("mover labels do not match mover points", mover_points_world.size(), mover_labels.size());

  const Pose to_sensor = pose.inverse();
  std::vector<Point3> pts;
  std::vector<ClassId> labels;
  std::size_t from_map = 0;
  const double r2 = cfg.max_range * cfg.max_range;
  for (std::size_t i = 0; i < map.size(); ++i) {
    const Point3 p = to_sensor.apply(map[i].position);
    const double n2 = p.squaredNorm();
    if (n2 > r2 || n2 <= kMinSphericalRange * kMinSphericalRange) continue;
    pts.push_back(p);
    labels.push_back(map_labels[i]);
    ++from_map;
  }
  for (std::size_t i = 0; i < mover_points_world.size(); ++i) {
    const Point3 p = to_sensor.apply(mover_points_world[i]);
    if (p.norm() <= kMinSphericalRange) continue;
    pts.push_back(p);
    labels.push_back(mover_labels[i]);
  }

  const SphericalGrid grid = build_grid(pts, Point3::Zero(), cfg.delta_theta, cfg.delta_phi, cfg.alpha_cull);
  const auto vis = cull_occluded(grid, pts, Point3::Zero());

  DensifiedScan out;
  out.scan.timestamp_index = pose.timestamp_index;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    if (!vis[k]) continue;
    out.scan.points.push_back(pts[k]);
    out.scan.intensities.push_back(0.0f);
    out.labels.push_back(labels[k]);
    (k < from_map ? out.map_points : out.mover_points)++;
  }
  if (out.scan.points.empty())
    throw StageError("densify", pose.timestamp_index, "no map points visible within max range (degenerate pose)");
  return out;
}

}  // namespace geolabel
