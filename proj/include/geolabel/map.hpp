#pragma once

#include "geolabel/spatial.hpp"

#include <unordered_map>

namespace geolabel {

/// World-frame map points plus an index over their positions. The index is
/// a snapshot: call reindex() after adding or removing points.
class SemanticMap {
 public:
  SemanticMap() = default;
  explicit SemanticMap(std::vector<MapPoint> pts) : points_(std::move(pts)) { reindex(); }

  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }

  const std::vector<MapPoint>& points() const noexcept { return points_; }
  std::vector<MapPoint>& mutable_points() noexcept { return points_; }
  const MapPoint& operator[](std::size_t i) const { return points_[i]; }
  MapPoint& operator[](std::size_t i) { return points_[i]; }

  const SpatialIndex& index() const noexcept { return index_; }
  bool indexed() const noexcept { return index_.size() == points_.size(); }

  void reindex() {
    std::vector<Point3> pos;
    pos.reserve(points_.size());
    for (const auto& mp : points_) pos.push_back(mp.position);
    index_ = SpatialIndex(pos);
  }

  std::vector<Point3> positions() const {
    std::vector<Point3> pos;
    pos.reserve(points_.size());
    for (const auto& mp : points_) pos.push_back(mp.position);
    return pos;
  }

  /// Majority histogram label per point (0 when empty).
  std::vector<ClassId> majority_labels() const {
    std::vector<ClassId> out(points_.size(), kUnlabeled);
    for (std::size_t i = 0; i < points_.size(); ++i)
      out[i] = majority_label(points_[i].histogram).value_or(kUnlabeled);
    return out;
  }

  /// Propagated label per point, falling back to the histogram majority.
  std::vector<ClassId> current_labels() const {
    std::vector<ClassId> out = majority_labels();
    for (std::size_t i = 0; i < points_.size(); ++i)
      if (points_[i].label != kUnlabeled) out[i] = points_[i].label;
    return out;
  }

 private:
  std::vector<MapPoint> points_;
  SpatialIndex index_;
};

/// Builds a map by associating every scan point with a voxel-sized cell; the
/// first point to reach a cell fixes the map point's position, later points
/// add their label observation to it.
class MapAccumulator {
 public:
  MapAccumulator(double voxel_size, double initial_static_prob)
      : voxel_(voxel_size), p0_(initial_static_prob) {
    if (!(voxel_size > 0.0)) throw ParameterError("map voxel size must be positive");
  }

  /// `labels` may be empty; points with a nonzero `exclude` entry are skipped.
  void add_scan(std::span<const Point3> world_points, std::span<const ClassId> labels,
                std::span<const std::uint8_t> exclude = {}) {
    if (!labels.empty() && labels.size() != world_points.size())
      throw AlignmentError("labels do not match scan points", world_points.size(), labels.size());
    if (!exclude.empty() && exclude.size() != world_points.size())
      throw AlignmentError("mask does not match scan points", world_points.size(), exclude.size());
    for (std::size_t i = 0; i < world_points.size(); ++i) {
      if (!exclude.empty() && exclude[i]) continue;
      const Point3& p = world_points[i];
      const std::uint64_t key = voxel_key(p);
      auto [it, inserted] = cells_.try_emplace(key, static_cast<std::uint32_t>(points_.size()));
      if (inserted) {
        MapPoint mp;
        mp.position = p;
        mp.static_prob = p0_;
        points_.push_back(std::move(mp));
      }
      if (!labels.empty()) add_label_observation(points_[it->second], labels[i], &stats_);
    }
  }

  const ObservationStats& stats() const noexcept { return stats_; }
  std::size_t size() const noexcept { return points_.size(); }

  SemanticMap finish() && {
    cells_.clear();
    return SemanticMap(std::move(points_));
  }

 private:
  std::uint64_t voxel_key(const Point3& p) const {
    // 21 bits per axis, offset so that +-104 km at 0.1 m stays positive.
    constexpr std::int64_t kOffset = 1 << 20;
    auto q = [&](double v) {
      const auto c = static_cast<std::int64_t>(std::floor(v / voxel_)) + kOffset;
      return static_cast<std::uint64_t>(std::clamp<std::int64_t>(c, 0, (1 << 21) - 1));
    };
    return (q(p.x()) << 42) | (q(p.y()) << 21) | q(p.z());
  }

  double voxel_;
  double p0_;
  std::vector<MapPoint> points_;
  std::unordered_map<std::uint64_t, std::uint32_t> cells_;
  ObservationStats stats_;
};

}  // namespace geolabel
