#pragma once

#include "geolabel/map.hpp"

namespace geolabel {

struct PropagationConfig {
  double radius = 0.2;  ///< m
  int passes = 1;
  /// In-place updates in point-id order instead of reading the previous pass.
  bool sequential = false;

  double sigma() const { return radius / 2.0; }
  static bool ignored(ClassId l) { return l == kUnlabeled || l == kIgnore; }
};

inline double gaussian_weight(double d, double sigma) {
  if (!(sigma > 0.0)) throw ParameterError("sigma must be positive");
  if (d < 0.0) throw ParameterError("distance must be non-negative");
  return std::exp(-(d * d) / (2.0 * sigma * sigma));
}

namespace detail {

/// Weighted vote accumulator; entries stay in first-seen order and the
/// argmax breaks exact ties toward the lowest class id.
class VoteTally {
 public:
  void clear() { votes_.clear(); }
  bool empty() const { return votes_.empty(); }

  void add(ClassId l, double w) {
    for (auto& v : votes_)
      if (v.first == l) {
        v.second += w;
        return;
      }
    votes_.emplace_back(l, w);
  }

  ClassId winner() const {
    ClassId best = votes_.front().first;
    double best_s = votes_.front().second;
    for (const auto& [l, s] : votes_)
      if (s > best_s || (s == best_s && l < best)) {
        best = l;
        best_s = s;
      }
    return best;
  }

 private:
  std::vector<std::pair<ClassId, double>> votes_;
};

}  // namespace detail

/// Gaussian-weighted neighborhood vote over `labels`. Votes are summed in
/// ascending neighbor-id order, so the result does not depend on tree layout.
inline std::vector<ClassId> propagate_labels(const SpatialIndex& index, std::span<const Point3> positions,
                                             std::span<const ClassId> labels, const PropagationConfig& cfg) {
  if (labels.size() != positions.size() || index.size() != positions.size())
    throw AlignmentError("labels do not match indexed points", positions.size(), labels.size());
  if (!(cfg.radius > 0.0)) throw ParameterError("propagation radius must be positive");
  const double inv_two_sigma2 = 1.0 / (2.0 * cfg.sigma() * cfg.sigma());

  std::vector<ClassId> current(labels.begin(), labels.end());
  std::vector<std::pair<std::uint32_t, double>> hits;
  detail::VoteTally tally;
  for (int pass = 0; pass < cfg.passes; ++pass) {
    std::vector<ClassId> next = current;
    const std::vector<ClassId>& source = cfg.sequential ? next : current;
    for (std::size_t i = 0; i < positions.size(); ++i) {
      hits.clear();
      index.for_each_in_radius(positions[i], cfg.radius, [&](std::uint32_t id, double d2) {
        if (!PropagationConfig::ignored(source[id])) hits.emplace_back(id, d2);
      });
      if (hits.empty()) continue;
      std::sort(hits.begin(), hits.end());
      tally.clear();
      for (const auto& [id, d2] : hits) tally.add(source[id], std::exp(-d2 * inv_two_sigma2));
      next[i] = tally.winner();
    }
    current = std::move(next);
  }
  return current;
}

inline std::vector<ClassId> propagate_labels(const SemanticMap& map, const PropagationConfig& cfg) {
  if (!map.indexed()) throw ParameterError("map is not indexed");
  const auto pos = map.positions();
  const auto labels = map.current_labels();
  return propagate_labels(map.index(), pos, labels, cfg);
}

/// Per-scan labels: majority (or propagated, when `map_labels` is given)
/// label of the nearest map point within `match_radius`, else `fallback`.
inline std::vector<ClassId> scan_labels_from_map(const Scan& scan, const Pose& pose, const SemanticMap& map,
                                                 std::span<const ClassId> fallback, double match_radius,
                                                 std::span<const ClassId> map_labels = {}) {
  if (fallback.size() != scan.size()) throw AlignmentError("fallback labels do not match scan", scan.size(), fallback.size());
  if (!map_labels.empty() && map_labels.size() != map.size())
    throw AlignmentError("map labels do not match map", map.size(), map_labels.size());
  std::vector<ClassId> out(fallback.begin(), fallback.end());
  for (std::size_t i = 0; i < scan.size(); ++i) {
    const auto hit = map.index().nearest_within(pose.apply(scan.points[i]), match_radius);
    if (!hit) continue;
    const ClassId l = map_labels.empty() ? majority_label(map[hit->id].histogram).value_or(kUnlabeled)
                                         : map_labels[hit->id];
    if (l != kUnlabeled) out[i] = l;
  }
  return out;
}

}  // namespace geolabel
