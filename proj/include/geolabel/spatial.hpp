#pragma once

#include "geolabel/core.hpp"

#include <array>
#include <limits>
#include <numeric>

namespace geolabel {

// ---------------------------------------------------------------------------
// k-d tree
// ---------------------------------------------------------------------------

struct NeighborHit {
  std::uint32_t id;
  double distance;
  bool operator==(const NeighborHit&) const = default;
};

/// Exact k-d tree over a frozen snapshot of positions. Point ids are input
/// indices; duplicates are kept as separate entries.
class SpatialIndex {
 public:
  SpatialIndex() = default;

  explicit SpatialIndex(std::span<const Point3> points, std::size_t leaf_size = 16)
      : leaf_size_(std::max<std::size_t>(1, leaf_size)) {
    build(points);
  }

  std::size_t size() const noexcept { return pts_.size(); }
  bool empty() const noexcept { return pts_.empty(); }

  /// Visits every point with distance <= radius, in tree order.
  template <typename Visitor>
  void for_each_in_radius(const Point3& center, double radius, Visitor&& visit) const {
    if (!(radius > 0.0)) throw ParameterError("radius must be positive");
    if (nodes_.empty()) return;
    const double r2 = radius * radius;
    std::array<std::uint32_t, 64> stack;
    std::size_t top = 0;
    stack[top++] = 0;
    while (top) {
      const Node& n = nodes_[stack[--top]];
      if (box_dist2(n, center) > r2) continue;
      if (n.left == kLeaf) {
        for (std::uint32_t s = n.begin; s < n.end; ++s) {
          const double d2 = (pts_[s] - center).squaredNorm();
          if (d2 <= r2) visit(ids_[s], d2);
        }
      } else {
        stack[top++] = n.left;
        stack[top++] = n.right;
      }
    }
  }

  /// All points within `radius`, sorted by id.
  std::vector<NeighborHit> query_radius(const Point3& center, double radius) const {
    std::vector<NeighborHit> hits;
    for_each_in_radius(center, radius,
                       [&](std::uint32_t id, double d2) { hits.push_back({id, std::sqrt(d2)}); });
    std::sort(hits.begin(), hits.end(), [](const NeighborHit& a, const NeighborHit& b) { return a.id < b.id; });
    return hits;
  }

  /// Closest point; equal distances resolve to the lowest id.
  std::optional<NeighborHit> nearest_neighbor(const Point3& q) const {
    return nearest_impl(q, std::numeric_limits<double>::infinity());
  }

  /// Closest point within `max_radius` (inclusive), if any.
  std::optional<NeighborHit> nearest_within(const Point3& q, double max_radius) const {
    return nearest_impl(q, max_radius * max_radius);
  }

 private:
  static constexpr std::uint32_t kLeaf = std::numeric_limits<std::uint32_t>::max();

  struct Node {
    Eigen::Vector3d lo, hi;
    std::uint32_t begin, end;
    std::uint32_t left = kLeaf, right = kLeaf;
  };

  static double box_dist2(const Node& n, const Point3& q) {
    double d2 = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double v = q[k] < n.lo[k] ? n.lo[k] - q[k] : (q[k] > n.hi[k] ? q[k] - n.hi[k] : 0.0);
      d2 += v * v;
    }
    return d2;
  }

  void build(std::span<const Point3> points) {
    pts_.assign(points.begin(), points.end());
    ids_.resize(pts_.size());
    std::iota(ids_.begin(), ids_.end(), 0u);
    if (pts_.empty()) return;
    std::vector<std::uint32_t> order(pts_.size());
    std::iota(order.begin(), order.end(), 0u);
    nodes_.reserve(2 * pts_.size() / leaf_size_ + 2);
    build_node(order, 0, static_cast<std::uint32_t>(order.size()));
    std::vector<Point3> sorted(pts_.size());
    for (std::size_t s = 0; s < order.size(); ++s) sorted[s] = pts_[order[s]];
    pts_ = std::move(sorted);
    ids_ = std::move(order);
  }

  std::uint32_t build_node(std::vector<std::uint32_t>& order, std::uint32_t begin, std::uint32_t end) {
    const auto idx = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back(Node{});
    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    Eigen::Vector3d hi = -lo;
    for (std::uint32_t s = begin; s < end; ++s) {
      lo = lo.cwiseMin(pts_[order[s]]);
      hi = hi.cwiseMax(pts_[order[s]]);
    }
    nodes_[idx].lo = lo;
    nodes_[idx].hi = hi;
    nodes_[idx].begin = begin;
    nodes_[idx].end = end;
    if (end - begin <= leaf_size_ || (hi - lo).maxCoeff() == 0.0) return idx;

    int dim;
    (hi - lo).maxCoeff(&dim);
    const std::uint32_t mid = begin + (end - begin) / 2;
    // Ties on the split coordinate are ordered by id so the build is deterministic.
    std::nth_element(order.begin() + begin, order.begin() + mid, order.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       const double va = pts_[a][dim], vb = pts_[b][dim];
                       return va < vb || (va == vb && a < b);
                     });
    const std::uint32_t l = build_node(order, begin, mid);
    const std::uint32_t r = build_node(order, mid, end);
    nodes_[idx].left = l;
    nodes_[idx].right = r;
    return idx;
  }

  std::optional<NeighborHit> nearest_impl(const Point3& q, double max_d2) const {
    if (nodes_.empty()) return std::nullopt;
    double best_d2 = max_d2;
    std::uint32_t best_id = kLeaf;
    std::array<std::uint32_t, 64> stack;
    std::size_t top = 0;
    stack[top++] = 0;
    while (top) {
      const Node& n = nodes_[stack[--top]];
      if (box_dist2(n, q) > best_d2) continue;
      if (n.left == kLeaf) {
        for (std::uint32_t s = n.begin; s < n.end; ++s) {
          const double d2 = (pts_[s] - q).squaredNorm();
          if (d2 < best_d2 || (d2 == best_d2 && ids_[s] < best_id)) {
            best_d2 = d2;
            best_id = ids_[s];
          }
        }
      } else {
        // Visit the nearer child first.
        const double dl = box_dist2(nodes_[n.left], q);
        const double dr = box_dist2(nodes_[n.right], q);
        if (dl <= dr) {
          stack[top++] = n.right;
          stack[top++] = n.left;
        } else {
          stack[top++] = n.left;
          stack[top++] = n.right;
        }
      }
    }
    if (best_id == kLeaf) return std::nullopt;
    return NeighborHit{best_id, std::sqrt(best_d2)};
  }

  std::size_t leaf_size_ = 16;
  std::vector<Point3> pts_;
  std::vector<std::uint32_t> ids_;
  std::vector<Node> nodes_;
};

inline SpatialIndex build_index(std::span<const Point3> points, std::size_t leaf_size = 16) {
  return SpatialIndex(points, leaf_size);
}

// ---------------------------------------------------------------------------
// Spherical coordinates
// ---------------------------------------------------------------------------

struct SphericalCoord {
  double r;      ///< range, m
  double theta;  ///< azimuth in (-pi, pi]
  double phi;    ///< elevation in [-pi/2, pi/2]
};

inline constexpr double kMinSphericalRange = 1e-6;

inline SphericalCoord cart_to_spherical(const Point3& p) {
  const double r = p.norm();
  if (!(r > kMinSphericalRange)) throw ParameterError("degenerate point: range <= 1e-6");
  double theta = std::atan2(p.y(), p.x());
  if (theta == -M_PI) theta = M_PI;
  // Equal to asin(z/r); atan2 keeps full precision near the poles.
  const double phi = std::atan2(p.z(), std::hypot(p.x(), p.y()));
  return {r, theta, phi};
}

inline Point3 spherical_to_cart(const SphericalCoord& s) {
  const double c = std::cos(s.phi);
  return {s.r * c * std::cos(s.theta), s.r * c * std::sin(s.theta), s.r * std::sin(s.phi)};
}

}  // namespace geolabel
