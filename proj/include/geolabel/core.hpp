#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace geolabel {

using Point3 = Eigen::Vector3d;
using ClassId = std::uint16_t;

inline constexpr ClassId kUnlabeled = 0;
inline constexpr ClassId kIgnore = 65535;
inline constexpr double kDegToRad = M_PI / 180.0;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the byte offset (binary) or line (text).
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what, std::int64_t location = -1)
      : Error(what), location_(location) {}
  std::int64_t location() const noexcept { return location_; }

 private:
  std::int64_t location_;
};

/// Two files that must describe the same points disagree in length.
class AlignmentError : public FormatError {
 public:
  AlignmentError(const std::string& what, std::size_t expected, std::size_t actual)
      : FormatError(what + " (expected " + std::to_string(expected) + ", got " +
                    std::to_string(actual) + ")"),
        expected_(expected),
        actual_(actual) {}
  std::size_t expected() const noexcept { return expected_; }
  std::size_t actual() const noexcept { return actual_; }

 private:
  std::size_t expected_, actual_;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage failed; names the stage and, when known, the frame.
class StageError : public Error {
 public:
  StageError(std::string stage, std::int64_t frame, const std::string& what)
      : Error("stage '" + stage + "'" +
              (frame >= 0 ? " frame " + std::to_string(frame) : std::string()) + ": " + what),
        stage_(std::move(stage)),
        frame_(frame) {}
  const std::string& stage() const noexcept { return stage_; }
  std::int64_t frame() const noexcept { return frame_; }

 private:
  std::string stage_;
  std::int64_t frame_;
};

// ---------------------------------------------------------------------------
// Angles
// ---------------------------------------------------------------------------

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double kTwoPi = 2.0 * M_PI;
  a = std::fmod(a, kTwoPi);
  if (a <= -M_PI) a += kTwoPi;
  if (a > M_PI) a -= kTwoPi;
  return a;
}

inline bool is_finite(const Point3& p) {
  return std::isfinite(p.x()) && std::isfinite(p.y()) && std::isfinite(p.z());
}

// ---------------------------------------------------------------------------
// Pose
// ---------------------------------------------------------------------------

/// Rigid scan-to-world transform.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Point3 translation = Point3::Zero();
  std::int64_t timestamp_index = 0;

  static Pose identity(std::int64_t t = 0) { return Pose{Eigen::Matrix3d::Identity(), Point3::Zero(), t}; }

  static Pose from_yaw(double yaw, const Point3& t, std::int64_t index = 0) {
    return Pose{Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix(), t, index};
  }

  Point3 apply(const Point3& p) const { return rotation * p + translation; }

  Pose inverse() const {
    Eigen::Matrix3d rt = rotation.transpose();
    return Pose{rt, -(rt * translation), timestamp_index};
  }

  /// (*this) ∘ other: applies `other` first.
  Pose compose(const Pose& other) const {
    return Pose{rotation * other.rotation, rotation * other.translation + translation, timestamp_index};
  }

  bool is_special_orthogonal(double tol = 1e-9) const {
    const Eigen::Matrix3d err = rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
    return err.cwiseAbs().maxCoeff() <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
  }
};

// ---------------------------------------------------------------------------
// Scan
// ---------------------------------------------------------------------------

/// One sweep in the sensor frame.
struct Scan {
  std::vector<Point3> points;
  std::vector<float> intensities;
  std::int64_t timestamp_index = 0;

  std::size_t size() const noexcept { return points.size(); }

  void validate() const {
    if (points.size() != intensities.size())
      throw AlignmentError("scan intensities do not match points", points.size(), intensities.size());
    if (points.empty()) throw ParameterError("scan has no points");
  }
};

/// Applies `pose` to every point. Rejects the scan on the first non-finite point.
inline std::vector<Point3> transform_scan(const Scan& scan, const Pose& pose) {
  std::vector<Point3> out;
  out.reserve(scan.points.size());
  for (std::size_t i = 0; i < scan.points.size(); ++i) {
    const Point3& p = scan.points[i];
    if (!is_finite(p))
      throw ParameterError("non-finite point at index " + std::to_string(i) + " in scan " +
                           std::to_string(scan.timestamp_index));
    out.push_back(pose.apply(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Label histogram
// ---------------------------------------------------------------------------

/// Label-count pairs of one map point, kept sorted by class id.
class LabelHistogram {
 public:
  struct Entry {
    ClassId label;
    std::uint32_t count;
    bool operator==(const Entry&) const = default;
  };

  /// Returns false (and leaves the histogram untouched) for the unlabeled id.
  bool add(ClassId label, std::uint32_t n = 1) {
    if (label == kUnlabeled || n == 0) return false;
    auto it = std::lower_bound(entries_.begin(), entries_.end(), label,
                               [](const Entry& e, ClassId l) { return e.label < l; });
    if (it != entries_.end() && it->label == label)
      it->count += n;
    else
      entries_.insert(it, Entry{label, n});
    return true;
  }

  std::uint32_t count(ClassId label) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), label,
                               [](const Entry& e, ClassId l) { return e.label < l; });
    return (it != entries_.end() && it->label == label) ? it->count : 0;
  }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (const auto& e : entries_) t += e.count;
    return t;
  }

  bool empty() const noexcept { return entries_.empty(); }
  std::span<const Entry> entries() const noexcept { return entries_; }
  bool operator==(const LabelHistogram&) const = default;

 private:
  std::vector<Entry> entries_;
};

/// Argmax count; ties resolve to the lowest class id.
inline std::optional<ClassId> majority_label(const LabelHistogram& h) {
  std::optional<ClassId> best;
  std::uint32_t best_count = 0;
  for (const auto& e : h.entries()) {  // ascending class id
    if (e.count > best_count) {
      best = e.label;
      best_count = e.count;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Map
// ---------------------------------------------------------------------------

struct MapPoint {
  Point3 position = Point3::Zero();
  LabelHistogram histogram;
  double static_prob = 0.5;
  /// Label after propagation; 0 until propagation has run.
  ClassId label = kUnlabeled;
};

/// Counts rejected (unlabeled) observations.
struct ObservationStats {
  std::uint64_t accepted = 0;
  std::uint64_t ignored_unlabeled = 0;
};

inline void add_label_observation(MapPoint& mp, ClassId class_id, ObservationStats* stats = nullptr) {
  const bool ok = mp.histogram.add(class_id);
  if (stats) (ok ? stats->accepted : stats->ignored_unlabeled)++;
}

inline double clamp_unit(double p) { return std::clamp(p, 0.0, 1.0); }

}  // namespace geolabel
