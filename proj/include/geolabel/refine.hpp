#pragma once

#include "geolabel/densify.hpp"
#include "geolabel/map.hpp"

#include <set>

namespace geolabel {

/// SemanticKITTI ids of classes that can move.
inline std::set<ClassId> default_movable_classes() { return {10, 11, 15, 18, 20, 30, 31, 32}; }

struct IwuConfig {
  double alpha = 0.7;
  double tau_s = 0.5;
  double r_max = 200.0;        ///< full-credibility radius, m
  double match_radius = 0.3;   ///< m
  double initial_prob = 0.5;
  int sweeps = 1;
  std::set<ClassId> movable = default_movable_classes();

  // Coverage gate for the unmatched update: a map point is covered by a scan
  // when one of the scan's rays passes within `coverage_ray_tolerance` of it
  // and returns beyond it by more than T(r) = 1 + coverage_alpha * r.
  double coverage_delta_theta = 0.2 * kDegToRad;
  double coverage_delta_phi = 0.4 * kDegToRad;
  double coverage_alpha = 0.02;
  double coverage_ray_tolerance = 0.05;  ///< m

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("alpha must be in (0,1)");
    if (!(tau_s >= 0.0 && tau_s <= 1.0)) throw ParameterError("tau_s must be in [0,1]");
    if (!(match_radius > 0.0)) throw ParameterError("match_radius must be positive");
    if (!(r_max > 0.0)) throw ParameterError("r_max must be positive");
    if (!(initial_prob >= 0.0 && initial_prob <= 1.0)) throw ParameterError("initial_prob must be in [0,1]");
    if (sweeps < 1) throw ParameterError("sweeps must be >= 1");
    if (!(coverage_ray_tolerance > 0.0)) throw ParameterError("coverage_ray_tolerance must be positive");
  }
};

inline double range_credibility(double r, double r_max) {
  if (!(r > 0.0)) throw ParameterError("range must be positive");
  return std::min(1.0, r_max / r);
}

/// Majority fraction after collapsing counts into movable / non-movable.
/// Empty histograms are neutral (0.5).
inline double class_consistency(const LabelHistogram& h, const std::set<ClassId>& movable) {
  std::uint64_t mov = 0, stat = 0;
  for (const auto& e : h.entries()) (movable.count(e.label) ? mov : stat) += e.count;
  const std::uint64_t total = mov + stat;
  if (total == 0) return 0.5;
  return static_cast<double>(std::max(mov, stat)) / static_cast<double>(total);
}

/// One step of the static-probability recurrence, clamped to [0,1].
inline double update_static_prob(double p_prev, bool matched, double r_star, double consistency, double alpha) {
  const double evidence = matched ? r_star * (1.0 + consistency) : (1.0 - r_star) * (1.0 - consistency);
  return clamp_unit(alpha * p_prev + (1.0 - alpha) * evidence);
}

/// Free-space test against one scan: rays binned by direction so each map
/// point only inspects rays in nearby bins.
class RayCoverage {
 public:
  explicit RayCoverage(const IwuConfig& cfg)
      : grid_(cfg.coverage_delta_theta, cfg.coverage_delta_phi, cfg.coverage_alpha),
        tol_(cfg.coverage_ray_tolerance),
        alpha_(cfg.coverage_alpha) {
    offsets_.assign(static_cast<std::size_t>(grid_.theta_bins()) * grid_.phi_bins() + 1, 0);
    bin_rmax_.assign(static_cast<std::size_t>(grid_.theta_bins()) * grid_.phi_bins(), 0.0);
  }

  /// `points` are in the sensor frame.
  void set_scan(std::span<const Point3> points) {
    std::fill(offsets_.begin(), offsets_.end(), 0);
    std::fill(bin_rmax_.begin(), bin_rmax_.end(), 0.0);
    std::vector<std::uint32_t> bin(points.size(), kNone);
    for (std::size_t k = 0; k < points.size(); ++k) {
      const double r = points[k].norm();
      if (r <= kMinSphericalRange) continue;
      const auto b = grid_.bin_of(cart_to_spherical(points[k]));
      bin[k] = flat(b.i, b.j);
      ++offsets_[bin[k] + 1];
      bin_rmax_[bin[k]] = std::max(bin_rmax_[bin[k]], r);
    }
    for (std::size_t b = 1; b < offsets_.size(); ++b) offsets_[b] += offsets_[b - 1];
    rays_.resize(offsets_.back());
    std::vector<std::uint32_t> fill(offsets_.begin(), offsets_.end() - 1);
    for (std::size_t k = 0; k < points.size(); ++k) {
      if (bin[k] == kNone) continue;
      const double r = points[k].norm();
      rays_[fill[bin[k]]++] = Ray{points[k] / r, r};
    }
  }

  /// True when some ray passes close to `m` (sensor frame) and continues
  /// beyond it by more than T(|m|).
  bool seen_through(const Point3& m) const {
    const double rm = m.norm();
    if (rm <= kMinSphericalRange) return false;
    const auto s = cart_to_spherical(m);
    const auto c = grid_.bin_of(s);
    const double need = rm + 1.0 + alpha_ * rm;
    // Angular radius of the tolerance cone, widened slightly so bins at the
    // cone boundary are never skipped.
    const double ang = std::asin(std::min(1.0, tol_ / rm)) * (1.0 + 1e-9);
    const double cphi = std::max(std::cos(std::min(M_PI / 2, std::abs(s.phi) + ang)), 1e-3);
    const int ki = std::min(64, static_cast<int>(std::ceil(ang / (grid_.delta_theta() * cphi))));
    const int kj = std::min(64, static_cast<int>(std::ceil(ang / grid_.delta_phi())));
    const double tol2 = tol_ * tol_;
    for (int dj = -kj; dj <= kj; ++dj) {
      const int j = c.j + dj;
      if (j < 0 || j >= grid_.phi_bins()) continue;
      for (int di = -ki; di <= ki; ++di) {
        int i = (c.i + di) % grid_.theta_bins();
        if (i < 0) i += grid_.theta_bins();
        const std::uint32_t b = flat(i, j);
        if (bin_rmax_[b] <= need) continue;
        for (std::uint32_t k = offsets_[b]; k < offsets_[b + 1]; ++k) {
          const Ray& ray = rays_[k];
          if (ray.range <= need) continue;
          const double along = m.dot(ray.dir);
          if (along <= 0.0) continue;
          if ((m - along * ray.dir).squaredNorm() <= tol2) return true;
        }
      }
    }
    return false;
  }

 private:
  static constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
  struct Ray {
    Point3 dir;
    double range;
  };
  std::uint32_t flat(std::int32_t i, std::int32_t j) const {
    return static_cast<std::uint32_t>(j) * grid_.theta_bins() + static_cast<std::uint32_t>(i);
  }

  SphericalGrid grid_;
  double tol_, alpha_;
  std::vector<std::uint32_t> offsets_;
  std::vector<double> bin_rmax_;
  std::vector<Ray> rays_;
};

struct IwuStats {
  std::uint64_t matched_updates = 0;
  std::uint64_t unmatched_updates = 0;
};

/// Runs the weighted update over `scans` in the given (timestamp) order.
/// Each map point receives at most one update per scan: the matched update
/// with the closest matching scan point's credibility, or, if it went
/// unmatched but the scan saw through it, the unmatched update.
inline IwuStats iwu_pass(SemanticMap& map, std::span<const Scan> scans, std::span<const Pose> poses,
                         const IwuConfig& cfg) {
  cfg.validate();
  if (map.empty()) throw ParameterError("iwu_pass on an empty map");
  if (!map.indexed()) throw ParameterError("map is not indexed");
  if (scans.size() != poses.size()) throw AlignmentError("poses do not match scans", scans.size(), poses.size());

  std::vector<double> consistency(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) consistency[i] = class_consistency(map[i].histogram, cfg.movable);

  IwuStats stats;
  RayCoverage coverage(cfg);
  // Best (largest) credibility of a match this scan; negative = unmatched.
  std::vector<double> best_rstar(map.size(), -1.0);
  for (int sweep = 0; sweep < cfg.sweeps; ++sweep) {
    for (std::size_t t = 0; t < scans.size(); ++t) {
      const Scan& scan = scans[t];
      const Pose& pose = poses[t];
      std::fill(best_rstar.begin(), best_rstar.end(), -1.0);
      for (const auto& p : scan.points) {
        const double r = p.norm();
        if (r <= kMinSphericalRange) continue;
        const auto hit = map.index().nearest_within(pose.apply(p), cfg.match_radius);
        if (!hit) continue;
        best_rstar[hit->id] = std::max(best_rstar[hit->id], range_credibility(r, cfg.r_max));
      }

      coverage.set_scan(scan.points);
      const Pose to_sensor = pose.inverse();
      const double rmax2 = cfg.r_max * cfg.r_max;
      for (std::size_t i = 0; i < map.size(); ++i) {
        MapPoint& mp = map[i];
        if (best_rstar[i] >= 0.0) {
          mp.static_prob = update_static_prob(mp.static_prob, true, best_rstar[i], consistency[i], cfg.alpha);
          ++stats.matched_updates;
          continue;
        }
        const Point3 m = to_sensor.apply(mp.position);
        const double r2 = m.squaredNorm();
        if (r2 > rmax2 || !coverage.seen_through(m)) continue;
        const double rstar = range_credibility(std::sqrt(r2), cfg.r_max);
        mp.static_prob = update_static_prob(mp.static_prob, false, rstar, consistency[i], cfg.alpha);
        ++stats.unmatched_updates;
      }
    }
  }
  return stats;
}

struct StaticSplit {
  SemanticMap static_map;               ///< indexed
  std::vector<MapPoint> floaters;
  std::vector<std::uint32_t> kept_ids;  ///< original ids of static_map points
  std::vector<std::uint32_t> floater_ids;
};

/// Points with static_prob >= tau_s are kept.
inline StaticSplit split_static(const SemanticMap& map, double tau_s) {
  StaticSplit out;
  std::vector<MapPoint> kept;
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (map[i].static_prob >= tau_s) {
      kept.push_back(map[i]);
      out.kept_ids.push_back(static_cast<std::uint32_t>(i));
    } else {
      out.floaters.push_back(map[i]);
      out.floater_ids.push_back(static_cast<std::uint32_t>(i));
    }
  }
  out.static_map = SemanticMap(std::move(kept));
  return out;
}

/// Moving-point masks from a first pass over an all-points map: scan points
/// close to a floater of that map are marked moving.
inline std::vector<std::vector<std::uint8_t>> bootstrap_mos(std::span<const Scan> scans, std::span<const Pose> poses,
                                                            std::span<const std::vector<ClassId>> labels,
                                                            const IwuConfig& cfg, double map_voxel) {
  if (scans.size() < 3) throw ParameterError("bootstrap needs at least 3 scans");
  if (scans.size() != poses.size()) throw AlignmentError("poses do not match scans", scans.size(), poses.size());
  MapAccumulator acc(map_voxel, cfg.initial_prob);
  for (std::size_t t = 0; t < scans.size(); ++t) {
    const auto world = transform_scan(scans[t], poses[t]);
    acc.add_scan(world, labels.empty() ? std::span<const ClassId>{} : std::span<const ClassId>(labels[t]));
  }
  SemanticMap map = std::move(acc).finish();
  iwu_pass(map, scans, poses, cfg);
  const StaticSplit split = split_static(map, cfg.tau_s);

  std::vector<Point3> floater_pos;
  floater_pos.reserve(split.floaters.size());
  for (const auto& f : split.floaters) floater_pos.push_back(f.position);
  const SpatialIndex floaters(floater_pos);

  std::vector<std::vector<std::uint8_t>> masks(scans.size());
  for (std::size_t t = 0; t < scans.size(); ++t) {
    masks[t].assign(scans[t].size(), 0);
    if (floaters.empty()) continue;
    for (std::size_t k = 0; k < scans[t].size(); ++k)
      masks[t][k] = floaters.nearest_within(poses[t].apply(scans[t].points[k]), cfg.match_radius).has_value();
  }
  return masks;
}

}  // namespace geolabel
