#pragma once

#include "geolabel/io.hpp"

namespace geolabel {

// ---------------------------------------------------------------------------
// Semantic segmentation
// ---------------------------------------------------------------------------

struct SemanticScores {
  std::map<ClassId, double> iou;  ///< classes present in the ground truth
  double miou = 0.0;
  double accuracy = 0.0;
  std::uint64_t points = 0;
};

/// Accumulates a confusion table over any number of frames.
class SemanticEvaluator {
 public:
  void add(std::span<const ClassId> predicted, std::span<const ClassId> truth) {
    if (predicted.size() != truth.size()) throw AlignmentError("predictions do not match ground truth", truth.size(), predicted.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
      ++points_;
      if (predicted[i] == truth[i]) {
        ++tp_[truth[i]];
        ++correct_;
      } else {
        ++fn_[truth[i]];
        ++fp_[predicted[i]];
      }
      present_.insert(truth[i]);
    }
  }

  SemanticScores scores() const {
    if (points_ == 0) throw ParameterError("no ground-truth points to evaluate");
    SemanticScores s;
    auto get = [](const std::map<ClassId, std::uint64_t>& m, ClassId c) {
      const auto it = m.find(c);
      return it == m.end() ? std::uint64_t{0} : it->second;
    };
    double sum = 0.0;
    for (ClassId c : present_) {
      const double tp = static_cast<double>(get(tp_, c));
      const double den = tp + static_cast<double>(get(fp_, c) + get(fn_, c));
      s.iou[c] = den > 0 ? tp / den : 0.0;
      sum += s.iou[c];
    }
    s.miou = present_.empty() ? 0.0 : sum / static_cast<double>(present_.size());
    s.accuracy = static_cast<double>(correct_) / static_cast<double>(points_);
    s.points = points_;
    return s;
  }

 private:
  std::map<ClassId, std::uint64_t> tp_, fp_, fn_;
  std::set<ClassId> present_;
  std::uint64_t points_ = 0, correct_ = 0;
};

// ---------------------------------------------------------------------------
// Moving points
// ---------------------------------------------------------------------------

struct MoverScores {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision() const { return tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 1.0; }
  double recall() const { return tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 1.0; }
  /// Fraction of truly static points flagged as moving.
  double static_false_rate() const { return tn + fp ? static_cast<double>(fp) / static_cast<double>(tn + fp) : 0.0; }

  void add(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth) {
    if (predicted.size() != truth.size()) throw AlignmentError("mover mask does not match ground truth", truth.size(), predicted.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i])
        (predicted[i] ? tp : fn)++;
      else
        (predicted[i] ? fp : tn)++;
    }
  }
};

// ---------------------------------------------------------------------------
// Boxes: center-distance average precision
// ---------------------------------------------------------------------------

struct GroundTruthBox {
  Box3D box;
  bool ignore = false;  ///< too few points to count; matches to it are dropped
};

/// All-point interpolated AP for one xy center-distance threshold. Predictions
/// are matched greedily in descending score order to the nearest unmatched
/// ground truth box of the same frame.
inline double average_precision(std::span<const Box3D> predictions, std::span<const GroundTruthBox> truth,
                                double threshold) {
  if (!(threshold > 0.0)) throw ParameterError("AP threshold must be positive");
  std::map<std::int64_t, std::vector<std::size_t>> by_frame;
  std::size_t positives = 0;
  for (std::size_t g = 0; g < truth.size(); ++g) {
    by_frame[truth[g].box.timestamp_index].push_back(g);
    if (!truth[g].ignore) ++positives;
  }
  std::vector<std::size_t> order(predictions.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& pa = predictions[a];
    const auto& pb = predictions[b];
    if (pa.score != pb.score) return pa.score > pb.score;
    return std::tie(pa.timestamp_index, pa.track_id) < std::tie(pb.timestamp_index, pb.track_id);
  });
  std::vector<char> used(truth.size(), 0);
  std::vector<char> is_tp;
  for (std::size_t i : order) {
    const Box3D& p = predictions[i];
    const auto it = by_frame.find(p.timestamp_index);
    std::optional<std::size_t> best_valid, best_ignored;
    double dv = 0.0, di = 0.0;
    if (it != by_frame.end()) {
      for (std::size_t g : it->second) {  // ascending ids: ties keep the lowest
        if (used[g]) continue;
        const double d = (p.center - truth[g].box.center).head<2>().norm();
        if (d > threshold) continue;
        auto& best = truth[g].ignore ? best_ignored : best_valid;
        double& bd = truth[g].ignore ? di : dv;
        if (!best || d < bd) {
          best = g;
          bd = d;
        }
      }
    }
    if (best_valid) {
      used[*best_valid] = 1;
      is_tp.push_back(1);
    } else if (best_ignored) {
      used[*best_ignored] = 1;  // neither TP nor FP
    } else {
      is_tp.push_back(0);
    }
  }
  if (positives == 0) return is_tp.empty() ? 1.0 : 0.0;
  std::vector<double> precision, recall;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < is_tp.size(); ++k) {
    tp += is_tp[k];
    precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(positives));
  }
  for (std::size_t k = precision.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
  double ap = 0.0, prev_r = 0.0;
  for (std::size_t k = 0; k < precision.size(); ++k) {
    ap += (recall[k] - prev_r) * precision[k];
    prev_r = recall[k];
  }
  return ap;
}

// ---------------------------------------------------------------------------
// Densification
// ---------------------------------------------------------------------------

struct RangeBand {
  double lo, hi;
};

inline std::vector<RangeBand> default_range_bands() { return {{0, 80}, {80, 150}, {150, 250}}; }

/// Point counts per band [lo, hi) of sensor-frame range.
inline std::vector<std::uint64_t> band_counts(std::span<const Point3> pts, std::span<const RangeBand> bands) {
  std::vector<std::uint64_t> c(bands.size(), 0);
  for (const auto& p : pts) {
    const double r = p.norm();
    for (std::size_t b = 0; b < bands.size(); ++b)
      if (r >= bands[b].lo && r < bands[b].hi) ++c[b];
  }
  return c;
}

struct DensityBand {
  RangeBand band;
  std::uint64_t raw = 0, densified = 0;
  double ratio() const { return raw ? static_cast<double>(densified) / static_cast<double>(raw) : 0.0; }
};

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct EvalReport {
  std::optional<SemanticScores> semantics;
  std::optional<MoverScores> movers;
  std::map<double, double> ap;  ///< threshold -> AP
  std::vector<DensityBand> density;
  std::size_t tracks = 0;
};

inline json report_to_json(const EvalReport& r) {
  json j = json::object();
  if (r.semantics) {
    json iou = json::object();
    for (const auto& [c, v] : r.semantics->iou) iou[std::to_string(c)] = v;
    j["semantics"] = {{"iou", iou}, {"miou", r.semantics->miou}, {"accuracy", r.semantics->accuracy},
                      {"points", r.semantics->points}};
  }
  if (r.movers) {
    j["movers"] = {{"precision", r.movers->precision()},
                   {"recall", r.movers->recall()},
                   {"static_false_rate", r.movers->static_false_rate()},
                   {"tp", r.movers->tp},
                   {"fp", r.movers->fp},
                   {"fn", r.movers->fn}};
  }
  if (!r.ap.empty()) {
    json ap = json::object();
    for (const auto& [t, v] : r.ap) {
      char key[32];
      std::snprintf(key, sizeof key, "%g", t);
      ap[key] = v;
    }
    j["box_ap"] = ap;
  }
  j["tracks"] = r.tracks;
  if (!r.density.empty()) {
    json d = json::array();
    for (const auto& b : r.density)
      d.push_back({{"lo", b.band.lo}, {"hi", b.band.hi}, {"raw", b.raw}, {"densified", b.densified}, {"ratio", b.ratio()}});
    j["density"] = d;
  }
  return j;
}

}  // namespace geolabel
