#pragma once

#include "geolabel/map.hpp"

namespace geolabel {

struct MoverConfig {
  double corr_radius = 0.3;     ///< m, map correspondence
  double support_radius = 1.0;  ///< m
  int min_support = 2;          ///< other candidates required within support_radius
  double eps = 1.0;             ///< m, clustering neighborhood
  int min_pts = 3;
};

/// Per-point moving flags aligned with a scan.
struct MoverMask {
  std::vector<std::uint8_t> moving;
  std::int64_t timestamp_index = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(std::count(moving.begin(), moving.end(), std::uint8_t{1}));
  }
};

/// Points without a refined-map correspondence that have at least
/// `min_support` other such points nearby.
inline MoverMask extract_movers(const Scan& scan, const Pose& pose, const SemanticMap& refined,
                                const MoverConfig& cfg = {}) {
  MoverMask mask{std::vector<std::uint8_t>(scan.size(), 0), scan.timestamp_index};
  std::vector<std::uint32_t> cand;
  std::vector<Point3> cand_pos;
  for (std::size_t i = 0; i < scan.size(); ++i) {
    const Point3 w = pose.apply(scan.points[i]);
    if (!refined.empty() && refined.index().nearest_within(w, cfg.corr_radius)) continue;
    cand.push_back(static_cast<std::uint32_t>(i));
    cand_pos.push_back(w);
  }
  if (cand.empty()) return mask;
  const SpatialIndex idx(cand_pos);
  for (std::size_t c = 0; c < cand.size(); ++c) {
    int support = -1;  // the candidate itself is always within the radius
    idx.for_each_in_radius(cand_pos[c], cfg.support_radius, [&](std::uint32_t, double) { ++support; });
    if (support >= cfg.min_support) mask.moving[cand[c]] = 1;
  }
  return mask;
}

struct ClusterMember {
  std::int64_t frame;  ///< timestamp index of the member's scan
  std::uint32_t point;
  bool operator==(const ClusterMember&) const = default;
};

struct Cluster {
  std::vector<ClusterMember> members;
  std::vector<Point3> points;  ///< world positions, aligned with members
  Point3 centroid = Point3::Zero();
  std::int64_t timestamp_index = 0;
};

struct MoverFrame {
  const Scan* scan;
  Pose pose;
  const MoverMask* mask;
};

/// Density clustering with DBSCAN semantics. Returns clusters of point ids,
/// each sorted ascending, ordered by lowest member id. Seeds are expanded in
/// id order, so border points go to the lowest-seeded cluster; membership
/// does not depend on the order neighbors are visited in.
inline std::vector<std::vector<std::uint32_t>> dbscan(std::span<const Point3> pts, double eps, int min_pts) {
  if (!(eps > 0.0)) throw ParameterError("eps must be positive");
  constexpr std::int32_t kUnvisited = -2, kNoise = -1;
  std::vector<std::int32_t> label(pts.size(), kUnvisited);
  std::vector<std::vector<std::uint32_t>> clusters;
  if (pts.empty()) return clusters;
  const SpatialIndex idx(pts);
  std::vector<std::uint32_t> nb, frontier;
  auto neighbors = [&](std::uint32_t p) {
    nb.clear();
    idx.for_each_in_radius(pts[p], eps, [&](std::uint32_t id, double) { nb.push_back(id); });
  };
  for (std::uint32_t p = 0; p < pts.size(); ++p) {
    if (label[p] != kUnvisited) continue;
    neighbors(p);
    if (static_cast<int>(nb.size()) < min_pts) {
      label[p] = kNoise;
      continue;
    }
    const auto cid = static_cast<std::int32_t>(clusters.size());
    clusters.emplace_back();
    label[p] = cid;
    frontier.clear();
    auto absorb = [&] {
      for (auto q : nb) {
        if (label[q] == kNoise) {
          label[q] = cid;  // border point
        } else if (label[q] == kUnvisited) {
          label[q] = cid;
          frontier.push_back(q);
        }
      }
    };
    absorb();
    for (std::size_t f = 0; f < frontier.size(); ++f) {
      neighbors(frontier[f]);
      if (static_cast<int>(nb.size()) >= min_pts) absorb();
    }
  }
  for (std::uint32_t p = 0; p < pts.size(); ++p)
    if (label[p] >= 0) clusters[label[p]].push_back(p);
  std::sort(clusters.begin(), clusters.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return clusters;
}

/// Clusters the world-frame mover points of a window of consecutive scans.
/// `center` is the index within `window` whose timestamp labels the clusters.
inline std::vector<Cluster> cluster_movers(std::span<const MoverFrame> window, std::size_t center,
                                           const MoverConfig& cfg = {}) {
  if (window.empty()) return {};
  if (center >= window.size()) throw ParameterError("window center out of range");
  std::vector<Point3> pts;
  std::vector<ClusterMember> ref;
  for (const auto& f : window) {
    if (f.mask->moving.size() != f.scan->size())
      throw AlignmentError("mover mask does not match scan", f.scan->size(), f.mask->moving.size());
    for (std::uint32_t i = 0; i < f.scan->size(); ++i) {
      if (!f.mask->moving[i]) continue;
      pts.push_back(f.pose.apply(f.scan->points[i]));
      ref.push_back({f.scan->timestamp_index, i});
    }
  }
  std::vector<Cluster> out;
  for (const auto& ids : dbscan(pts, cfg.eps, cfg.min_pts)) {
    Cluster c;
    c.timestamp_index = window[center].scan->timestamp_index;
    for (auto id : ids) {
      c.members.push_back(ref[id]);
      c.points.push_back(pts[id]);
      c.centroid += pts[id];
    }
    c.centroid /= static_cast<double>(ids.size());
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace geolabel
