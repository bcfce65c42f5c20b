#pragma once

#include "geolabel/boxes.hpp"
#include "geolabel/lifting.hpp"

#include <random>
#include <set>

namespace geolabel {

// ---------------------------------------------------------------------------
// Deterministic random streams
// ---------------------------------------------------------------------------

/// mt19937_64 with portable uniform and normal draws, so outputs do not
/// depend on the standard library's distribution implementations.
class Rng {
 public:
  /// Independent stream for (seed, stream, index).
  Rng(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t index = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    engine_.seed(seq);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw ParameterError("empty range");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v;
    do v = engine_();
    while (v >= limit);
    return v % n;
  }

  /// Standard normal (Box-Muller, one value per call).
  double normal() {
    double u1;
    do u1 = uniform();
    while (u1 <= 0.0);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }
  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Scene description
// ---------------------------------------------------------------------------

struct PlanePrimitive {
  Point3 point = Point3::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  ClassId class_id = 40;
};

struct CuboidPrimitive {
  Point3 center = Point3::Zero();
  Eigen::Vector3d dims = Eigen::Vector3d::Ones();  ///< along local x, y, z
  double yaw = 0.0;
  ClassId class_id = 50;
};

struct MoverSpec {
  enum class Motion { Linear, Turn };
  Eigen::Vector3d dims{4.5, 1.8, 1.5};
  ClassId class_id = 10;
  double z_min = 0.5;  ///< height of the underside above z = 0
  Motion motion = Motion::Linear;
  // Linear: position = start + velocity * time (m, m/s).
  Eigen::Vector2d start = Eigen::Vector2d::Zero();
  Eigen::Vector2d velocity = Eigen::Vector2d::Zero();
  // Turn: circle around `center` at angular rate `omega` (rad/s) from `phase`.
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double radius = 1.0, phase = 0.0, omega = 0.0;

  /// Ground-truth box at time `seconds`.
  Box3D box_at(double seconds) const {
    Box3D b;
    b.dims = dims;
    if (motion == Motion::Linear) {
      const Eigen::Vector2d p = start + velocity * seconds;
      b.center = Point3(p.x(), p.y(), z_min + dims.z() / 2);
      b.yaw = wrap_angle(std::atan2(velocity.y(), velocity.x()));
    } else {
      const double a = phase + omega * seconds;
      b.center = Point3(center.x() + radius * std::cos(a), center.y() + radius * std::sin(a), z_min + dims.z() / 2);
      b.yaw = wrap_angle(a + (omega >= 0 ? M_PI / 2 : -M_PI / 2));
    }
    return b;
  }
};

struct SensorSpec {
  int beams = 64;
  double elevation_min_deg = -24.8, elevation_max_deg = 2.0;
  int azimuth_columns = 1800;
  double max_range = 150.0;
  double height = 1.7;
  Eigen::Vector2d start = Eigen::Vector2d::Zero();
  Eigen::Vector2d velocity{10.0, 0.0};  ///< m/s
  double yaw = 0.0, yaw_rate = 0.0;
  int frames = 50;
  double dt = 0.1;  ///< s

  Pose pose_at(int k) const {
    const double s = k * dt;
    const Eigen::Vector2d p = start + velocity * s;
    return Pose::from_yaw(yaw + yaw_rate * s, Point3(p.x(), p.y(), height), k);
  }
};

/// Camera co-located with the LiDAR, looking horizontally along `yaw`.
struct CameraSpec {
  std::string name = "cam0";
  double yaw_deg = 0.0;
  int width = 800, height = 336;
  double f = 400.0, cx = 400.0, cy = 36.0;

  /// Sensor (x fwd, y left, z up) to camera (x right, y down, z fwd).
  Eigen::Matrix3d sensor_to_camera() const {
    const double a = yaw_deg * kDegToRad;
    Eigen::Matrix3d r;
    r << std::sin(a), -std::cos(a), 0, 0, 0, -1, std::cos(a), std::sin(a), 0;
    return r;
  }
  CameraModel model() const { return CameraModel::pinhole(f, f, cx, cy, width, height, sensor_to_camera()); }
};

struct SceneSpec {
  std::vector<PlanePrimitive> planes;
  std::vector<CuboidPrimitive> boxes;
  std::vector<MoverSpec> movers;
  SensorSpec sensor;
  std::vector<CameraSpec> cameras;
  double range_sigma = 0.03;  ///< m
  double label_flip = 0.2;
  std::uint64_t seed = 1;

  void validate() const {
    if (sensor.beams < 1 || sensor.azimuth_columns < 1 || sensor.frames < 1)
      throw ParameterError("sensor needs >= 1 beam, column and frame");
    if (!(sensor.elevation_max_deg >= sensor.elevation_min_deg)) throw ParameterError("elevation range is inverted");
    if (!(sensor.max_range > 0.0) || !(sensor.dt > 0.0)) throw ParameterError("sensor max_range and dt must be positive");
    if (!(range_sigma >= 0.0)) throw ParameterError("range_sigma must be >= 0");
    if (!(label_flip >= 0.0 && label_flip < 1.0)) throw ParameterError("label_flip must be in [0,1)");
    for (const auto& p : planes)
      if (!(p.normal.norm() > 0.0)) throw ParameterError("plane normal must be nonzero");
    for (const auto& b : boxes)
      if (!(b.dims.minCoeff() > 0.0)) throw ParameterError("box dims must be positive");
    for (const auto& m : movers) {
      if (!(m.dims.minCoeff() > 0.0)) throw ParameterError("mover dims must be positive");
      if (m.motion == MoverSpec::Motion::Turn && !(m.radius > 0.0)) throw ParameterError("turn radius must be positive");
    }
    for (const auto& c : cameras)
      if (c.width < 1 || c.height < 1 || !(c.f > 0.0)) throw ParameterError("camera " + c.name + " is invalid");
  }

  /// Every class id appearing in the scene, ascending.
  std::vector<ClassId> palette() const {
    std::set<ClassId> s;
    for (const auto& p : planes) s.insert(p.class_id);
    for (const auto& b : boxes) s.insert(b.class_id);
    for (const auto& m : movers) s.insert(m.class_id);
    return {s.begin(), s.end()};
  }
};

/// Ground plane, four 10 m walls around x in [-70, 130], y in [-45, 45], a
/// sensor driving 1 m per frame along x, one mover overtaking in a parallel
/// lane at 2 m per frame and one turning at 0.6 m per frame.
inline SceneSpec default_scene() {
  SceneSpec s;
  s.planes.push_back({Point3::Zero(), Eigen::Vector3d::UnitZ(), 40});
  const double x0 = -70, x1 = 130, y0 = -45, y1 = 45, h = 10, t = 1;
  s.boxes.push_back({Point3(x1 + t / 2, 0, h / 2), Eigen::Vector3d(t, y1 - y0 + 2 * t, h), 0, 50});
  s.boxes.push_back({Point3(x0 - t / 2, 0, h / 2), Eigen::Vector3d(t, y1 - y0 + 2 * t, h), 0, 50});
  s.boxes.push_back({Point3((x0 + x1) / 2, y1 + t / 2, h / 2), Eigen::Vector3d(x1 - x0, t, h), 0, 50});
  s.boxes.push_back({Point3((x0 + x1) / 2, y0 - t / 2, h / 2), Eigen::Vector3d(x1 - x0, t, h), 0, 50});
  MoverSpec a;
  a.start = {-25.0, 8.0};
  a.velocity = {20.0, 0.0};
  s.movers.push_back(a);
  MoverSpec b;
  b.motion = MoverSpec::Motion::Turn;
  b.center = {22.0, -16.0};
  b.radius = 12.0;
  b.phase = M_PI;
  b.omega = 0.5;  // 6 m/s on a 12 m circle
  s.movers.push_back(b);
  for (int k = 0; k < 4; ++k) {
    CameraSpec c;
    c.name = "cam" + std::to_string(k);
    c.yaw_deg = 90.0 * k;
    s.cameras.push_back(c);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Ray casting
// ---------------------------------------------------------------------------

/// Distance along a unit ray to the plane, or +inf.
inline double intersect_plane(const Point3& o, const Eigen::Vector3d& d, const PlanePrimitive& p) {
  const Eigen::Vector3d n = p.normal.normalized();
  const double den = n.dot(d);
  if (std::abs(den) < 1e-12) return std::numeric_limits<double>::infinity();
  const double t = n.dot(p.point - o) / den;
  return t > 1e-9 ? t : std::numeric_limits<double>::infinity();
}

/// Slab test in the box frame; +inf on a miss or when `o` is inside.
inline double intersect_cuboid(const Point3& o, const Eigen::Vector3d& d, const Point3& center,
                               const Eigen::Vector3d& dims, double yaw) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  const Point3 rel = o - center;
  const Eigen::Vector3d lo(c * rel.x() + s * rel.y(), -s * rel.x() + c * rel.y(), rel.z());
  const Eigen::Vector3d ld(c * d.x() + s * d.y(), -s * d.x() + c * d.y(), d.z());
  double tn = -std::numeric_limits<double>::infinity(), tf = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double h = dims[a] / 2;
    if (std::abs(ld[a]) < 1e-15) {
      if (std::abs(lo[a]) > h) return std::numeric_limits<double>::infinity();
      continue;
    }
    double t1 = (-h - lo[a]) / ld[a], t2 = (h - lo[a]) / ld[a];
    if (t1 > t2) std::swap(t1, t2);
    tn = std::max(tn, t1);
    tf = std::min(tf, t2);
  }
  if (tn > tf || tn <= 1e-9) return std::numeric_limits<double>::infinity();
  return tn;
}

struct RayHit {
  double range = std::numeric_limits<double>::infinity();
  ClassId class_id = kUnlabeled;
  std::int32_t instance = 0;  ///< mover index + 1, 0 for static geometry
};

/// The scene frozen at one time instant.
struct SceneSnapshot {
  const SceneSpec* spec;
  std::vector<Box3D> movers;

  SceneSnapshot(const SceneSpec& s, double seconds) : spec(&s) {
    for (const auto& m : s.movers) movers.push_back(m.box_at(seconds));
  }

  RayHit cast(const Point3& o, const Eigen::Vector3d& d) const {
    RayHit best;
    auto consider = [&](double t, ClassId cls, std::int32_t inst) {
      if (t < best.range) best = {t, cls, inst};
    };
    for (const auto& p : spec->planes) consider(intersect_plane(o, d, p), p.class_id, 0);
    for (const auto& b : spec->boxes) consider(intersect_cuboid(o, d, b.center, b.dims, b.yaw), b.class_id, 0);
    for (std::size_t k = 0; k < movers.size(); ++k)
      consider(intersect_cuboid(o, d, movers[k].center, movers[k].dims, movers[k].yaw), spec->movers[k].class_id,
               static_cast<std::int32_t>(k + 1));
    return best;
  }

  bool inside_any_mover(const Point3& p) const {
    for (const auto& b : movers)
      if (b.contains(p)) return true;
    return false;
  }
};

/// Unit ray directions in the sensor frame, beam-major.
inline std::vector<Eigen::Vector3d> sensor_rays(const SensorSpec& s) {
  std::vector<Eigen::Vector3d> rays;
  rays.reserve(static_cast<std::size_t>(s.beams) * s.azimuth_columns);
  for (int b = 0; b < s.beams; ++b) {
    const double e = (s.beams == 1 ? s.elevation_min_deg
                                   : s.elevation_min_deg + (s.elevation_max_deg - s.elevation_min_deg) * b / (s.beams - 1)) *
                     kDegToRad;
    for (int c = 0; c < s.azimuth_columns; ++c) {
      const double a = -M_PI + 2.0 * M_PI * (c + 0.5) / s.azimuth_columns;
      rays.emplace_back(std::cos(e) * std::cos(a), std::cos(e) * std::sin(a), std::sin(e));
    }
  }
  return rays;
}

struct FrameTruth {
  std::vector<ClassId> classes;
  std::vector<std::int32_t> instances;
  std::vector<Box3D> boxes;               ///< one per mover, track_id = mover index
  std::vector<std::size_t> box_points;    ///< scan points on each mover
  std::vector<double> true_ranges;        ///< pre-noise

  bool moving(std::size_t i) const { return instances[i] != 0; }
};

struct SyntheticFrame {
  Scan scan;
  Pose pose;
  std::vector<LabelImage> images;  ///< aligned with the spec's cameras, flip noise applied
  FrameTruth truth;
};

/// Each labeled pixel is replaced, with probability `flip_prob`, by a
/// uniformly drawn different class of `palette`.
inline void perturb_labels(std::span<LabelImage> images, double flip_prob, std::uint64_t seed,
                           std::span<const ClassId> palette, std::uint64_t stream = 0) {
  if (!(flip_prob >= 0.0 && flip_prob < 1.0)) throw ParameterError("flip_prob must be in [0,1)");
  if (flip_prob == 0.0 || palette.size() < 2) return;
  for (std::size_t k = 0; k < images.size(); ++k) {
    Rng rng(seed, 0x1abe1 + stream, k);
    for (auto& c : images[k].classes) {
      if (c == kUnlabeled) continue;
      const bool flip = rng.uniform() < flip_prob;
      const std::uint64_t pick = rng.below(palette.size() - 1);
      if (!flip) continue;
      std::size_t idx = 0;
      std::size_t skip = palette.size();
      for (std::size_t p = 0; p < palette.size(); ++p)
        if (palette[p] == c) skip = p;
      if (skip == palette.size()) {
        idx = static_cast<std::size_t>(rng.below(palette.size()));
      } else {
        idx = pick < skip ? pick : pick + 1;
      }
      c = palette[idx];
    }
  }
}

/// Label image seen by `cam` from `pose`: class of the nearest surface
/// through each pixel center, 0 where the ray escapes.
inline LabelImage render_label_image(const SceneSnapshot& scene, const CameraSpec& cam, const Pose& pose,
                                     double max_range) {
  LabelImage img(cam.width, cam.height);
  const Eigen::Matrix3d cam_to_world = pose.rotation * cam.sensor_to_camera().transpose();
  for (int v = 0; v < cam.height; ++v)
    for (int u = 0; u < cam.width; ++u) {
      const Eigen::Vector3d dc((u + 0.5 - cam.cx) / cam.f, (v + 0.5 - cam.cy) / cam.f, 1.0);
      const Eigen::Vector3d d = (cam_to_world * dc).normalized();
      const RayHit h = scene.cast(pose.translation, d);
      if (h.range <= max_range) img.at(u, v) = h.class_id;
    }
  return img;
}

/// Simulates frame `k`: LiDAR ray casting with range noise, label images
/// with flip noise, and exact pre-noise ground truth.
inline SyntheticFrame generate_frame(const SceneSpec& spec, int k, std::span<const Eigen::Vector3d> rays,
                                     bool render_images = true) {
  SyntheticFrame f;
  f.pose = spec.sensor.pose_at(k);
  const SceneSnapshot scene(spec, k * spec.sensor.dt);
  if (scene.inside_any_mover(f.pose.translation))
    throw ParameterError("mover overlaps the sensor origin at frame " + std::to_string(k));
  for (const auto& b : spec.boxes)
    if (Box3D{b.center, b.dims, b.yaw}.contains(f.pose.translation))
      throw ParameterError("static box contains the sensor origin at frame " + std::to_string(k));

  Rng rng(spec.seed, 0x5ca7, static_cast<std::uint64_t>(k));
  f.scan.timestamp_index = k;
  f.truth.box_points.assign(spec.movers.size(), 0);
  for (const auto& dir : rays) {
    const RayHit h = scene.cast(f.pose.translation, f.pose.rotation * dir);
    if (!(h.range <= spec.sensor.max_range)) continue;
    const double r = std::max(h.range + rng.normal(0.0, spec.range_sigma), 1e-3);
    f.scan.points.push_back(dir * r);
    f.scan.intensities.push_back(0.0f);
    f.truth.classes.push_back(h.class_id);
    f.truth.instances.push_back(h.instance);
    f.truth.true_ranges.push_back(h.range);
    if (h.instance > 0) ++f.truth.box_points[h.instance - 1];
  }
  for (std::size_t m = 0; m < scene.movers.size(); ++m) {
    Box3D b = scene.movers[m];
    b.timestamp_index = k;
    b.track_id = static_cast<std::int64_t>(m);
    f.truth.boxes.push_back(b);
  }
  if (render_images) {
    for (const auto& c : spec.cameras) f.images.push_back(render_label_image(scene, c, f.pose, spec.sensor.max_range));
    const auto pal = spec.palette();
    perturb_labels(f.images, spec.label_flip, spec.seed, pal, static_cast<std::uint64_t>(k) + 1);
  }
  return f;
}

/// All frames of the scene.
inline std::vector<SyntheticFrame> generate_scene(const SceneSpec& spec, bool render_images = true) {
  spec.validate();
  const auto rays = sensor_rays(spec.sensor);
  std::vector<SyntheticFrame> frames;
  frames.reserve(spec.sensor.frames);
  for (int k = 0; k < spec.sensor.frames; ++k) frames.push_back(generate_frame(spec, k, rays, render_images));
  return frames;
}

/// Regular samples on the static cuboid faces and on planes clipped to the
/// xy rectangle [lo, hi].
inline std::vector<Point3> sample_static_surfaces(const SceneSpec& spec, double spacing, const Eigen::Vector2d& lo,
                                                  const Eigen::Vector2d& hi) {
  if (!(spacing > 0.0)) throw ParameterError("spacing must be positive");
  std::vector<Point3> out;
  for (const auto& p : spec.planes) {
    const Eigen::Vector3d n = p.normal.normalized();
    if (std::abs(n.z()) < 1e-9) continue;  // vertical planes have no xy footprint
    for (double x = lo.x(); x <= hi.x(); x += spacing)
      for (double y = lo.y(); y <= hi.y(); y += spacing) {
        const double z = p.point.z() - (n.x() * (x - p.point.x()) + n.y() * (y - p.point.y())) / n.z();
        out.emplace_back(x, y, z);
      }
  }
  for (const auto& b : spec.boxes) {
    const double c = std::cos(b.yaw), s = std::sin(b.yaw);
    const Eigen::Vector3d h = b.dims / 2;
    for (int axis = 0; axis < 3; ++axis)
      for (int sign = -1; sign <= 1; sign += 2) {
        const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
        for (double u = -h[a1]; u <= h[a1]; u += spacing)
          for (double v = -h[a2]; v <= h[a2]; v += spacing) {
            Eigen::Vector3d l;
            l[axis] = sign * h[axis];
            l[a1] = u;
            l[a2] = v;
            out.emplace_back(b.center.x() + c * l.x() - s * l.y(), b.center.y() + s * l.x() + c * l.y(),
                             b.center.z() + l.z());
          }
      }
  }
  return out;
}

}  // namespace geolabel
