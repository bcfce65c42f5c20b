#pragma once

#include "geolabel/spline.hpp"

#include <Eigen/Dense>

namespace geolabel {

struct Box3D {
  Point3 center = Point3::Zero();
  Eigen::Vector3d dims = Eigen::Vector3d::Ones();  ///< length (along yaw), width, height
  double yaw = 0.0;                                ///< (-pi, pi]
  std::int64_t timestamp_index = 0;
  std::int64_t track_id = -1;
  double score = 1.0;

  /// True when p lies inside the box, with `tol` slack per face.
  bool contains(const Point3& p, double tol = 1e-9) const {
    const Eigen::Vector2d d = (p - center).head<2>();
    const double c = std::cos(yaw), s = std::sin(yaw);
    const double u = c * d.x() + s * d.y(), v = -s * d.x() + c * d.y();
    return std::abs(u) <= dims.x() / 2 + tol && std::abs(v) <= dims.y() / 2 + tol &&
           std::abs(p.z() - center.z()) <= dims.z() / 2 + tol;
  }
};

// ---------------------------------------------------------------------------
// Cuboid fitting
// ---------------------------------------------------------------------------

struct PcaYaw {
  double yaw = 0.0;  ///< [0, pi)
  bool degenerate = false;  ///< all points coincide in xy
  bool ambiguous = false;   ///< principal axes indistinguishable
};

inline double mod_pi(double a) {
  a = std::fmod(a, M_PI);
  if (a < 0) a += M_PI;
  if (a >= M_PI) a -= M_PI;
  return a;
}

/// Heading of the principal axis of the xy covariance, modulo pi.
inline PcaYaw pca_yaw(std::span<const Point3> points) {
  if (points.size() < 3) throw ParameterError("pca_yaw needs at least 3 points");
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : points) mean += p.head<2>();
  mean /= static_cast<double>(points.size());
  double sxx = 0, syy = 0, sxy = 0;
  for (const auto& p : points) {
    const Eigen::Vector2d d = p.head<2>() - mean;
    sxx += d.x() * d.x();
    syy += d.y() * d.y();
    sxy += d.x() * d.y();
  }
  const double n = static_cast<double>(points.size());
  sxx /= n, syy /= n, sxy /= n;
  const double trace = sxx + syy;
  PcaYaw out;
  if (trace <= 1e-18) {
    out.degenerate = true;
    return out;
  }
  const double gap = std::hypot(sxx - syy, 2 * sxy);  // lambda1 - lambda2
  if (gap <= 1e-9 * trace) {
    out.ambiguous = true;
    out.yaw = 0.0;  // any axis is principal; report the smaller of {0, pi/2}
    return out;
  }
  out.yaw = mod_pi(0.5 * std::atan2(2 * sxy, sxx - syy));
  return out;
}

/// Oriented bounding box at `yaw`, each extent floored at `min_dims`.
inline Box3D fit_cuboid(std::span<const Point3> points, double yaw, const Eigen::Vector3d& min_dims) {
  if (points.empty()) throw ParameterError("fit_cuboid needs points");
  const double c = std::cos(yaw), s = std::sin(yaw);
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
  for (const auto& p : points) {
    const Eigen::Vector3d q(c * p.x() + s * p.y(), -s * p.x() + c * p.y(), p.z());
    lo = lo.cwiseMin(q);
    hi = hi.cwiseMax(q);
  }
  const Eigen::Vector3d mid = 0.5 * (lo + hi);
  Box3D box;
  box.center = Point3(c * mid.x() - s * mid.y(), s * mid.x() + c * mid.y(), mid.z());
  box.dims = (hi - lo).cwiseMax(min_dims);
  box.yaw = wrap_angle(yaw);
  return box;
}

// ---------------------------------------------------------------------------
// Kalman tracking
// ---------------------------------------------------------------------------

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

/// State order: x, y, vx, vy, psi, omega.
struct TrackState {
  Vector6d mean = Vector6d::Zero();
  Matrix6d covariance = Matrix6d::Zero();

  double x() const { return mean[0]; }
  double y() const { return mean[1]; }
  double vx() const { return mean[2]; }
  double vy() const { return mean[3]; }
  double psi() const { return mean[4]; }
  double omega() const { return mean[5]; }
};

struct KalmanNoise {
  /// Process noise standard deviations per sqrt(second).
  double q_pos = 0.1, q_yaw = 0.05, q_vel = 0.5, q_omega = 0.1;
  /// Measurement noise standard deviations.
  double r_pos = 0.3, r_yaw = 0.2;

  Matrix6d process() const {
    Vector6d d;
    d << q_pos, q_pos, q_vel, q_vel, q_yaw, q_omega;
    return d.cwiseAbs2().asDiagonal();
  }
  Eigen::Matrix3d measurement() const {
    return Eigen::Vector3d(r_pos * r_pos, r_pos * r_pos, r_yaw * r_yaw).asDiagonal();
  }
};

inline TrackState kalman_predict(const TrackState& s, double dt, const Matrix6d& q_per_second) {
  if (!(dt > 0.0)) throw ParameterError("dt must be positive");
  Matrix6d f = Matrix6d::Identity();
  f(0, 2) = dt;
  f(1, 3) = dt;
  f(4, 5) = dt;
  TrackState out;
  out.mean = f * s.mean;
  out.mean[4] = wrap_angle(out.mean[4]);
  out.covariance = f * s.covariance * f.transpose() + q_per_second * dt;
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  return out;
}

/// Of `measured` and `measured + pi`, the one nearer to `reference`.
inline double resolve_yaw_flip(double measured, double reference) {
  const double a = wrap_angle(measured), b = wrap_angle(measured + M_PI);
  return std::abs(wrap_angle(a - reference)) <= std::abs(wrap_angle(b - reference)) ? a : b;
}

/// Linear correction with (x, y, psi). The heading residual is wrapped after
/// resolving the measurement's pi ambiguity against the state heading.
inline TrackState kalman_update(const TrackState& s, const Eigen::Vector3d& z, const Eigen::Matrix3d& r) {
  const Eigen::Matrix3d rs = 0.5 * (r + r.transpose());
  if ((r - rs).cwiseAbs().maxCoeff() > 1e-12 || Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(rs).eigenvalues().minCoeff() < -1e-12)
    throw ParameterError("measurement noise must be symmetric positive semi-definite");
  Eigen::Matrix<double, 3, 6> h = Eigen::Matrix<double, 3, 6>::Zero();
  h(0, 0) = 1;
  h(1, 1) = 1;
  h(2, 4) = 1;
  Eigen::Vector3d innov = z - h * s.mean;
  innov[2] = wrap_angle(resolve_yaw_flip(z[2], s.mean[4]) - s.mean[4]);
  const Eigen::Matrix3d sm = h * s.covariance * h.transpose() + rs;
  const Eigen::Matrix<double, 6, 3> k = s.covariance * h.transpose() * sm.ldlt().solve(Eigen::Matrix3d::Identity());
  TrackState out;
  out.mean = s.mean + k * innov;
  out.mean[4] = wrap_angle(out.mean[4]);
  const Matrix6d ikh = Matrix6d::Identity() - k * h;
  out.covariance = ikh * s.covariance * ikh.transpose() + k * rs * k.transpose();  // Joseph form
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  return out;
}

struct TrackerConfig {
  double gate = 3.0;  ///< m, after prediction
  int max_age = 3;    ///< consecutive missed frames before termination
  int min_track_length = 3;
  double dt = 0.1;    ///< s per frame
  double flip_speed = 1.0;  ///< m/s above which velocity heading resolves the pi ambiguity
  KalmanNoise noise;
  /// Initial standard deviations for velocity and yaw rate.
  double init_vel_sigma = 15.0, init_omega_sigma = 1.0;
};

struct Detection {
  Box3D box;  ///< yaw from PCA, modulo pi
};

struct Track {
  std::int64_t id = 0;
  std::vector<Box3D> boxes;  ///< one per matched frame, time-ordered
};

namespace detail {

struct LiveTrack {
  Track track;
  TrackState state;
  std::int64_t born = 0, last_seen = 0;
  int hits = 0;
};

}  // namespace detail

/// Greedy nearest-center association against Kalman predictions.
/// `frames[k]` holds the detections at timestamp `frame_times[k]`.
inline std::vector<Track> track_clusters(std::span<const std::vector<Detection>> frames,
                                         std::span<const std::int64_t> frame_times, const TrackerConfig& cfg) {
  if (frames.size() != frame_times.size()) throw AlignmentError("frame times do not match frames", frames.size(), frame_times.size());
  const Matrix6d q = cfg.noise.process();
  const Eigen::Matrix3d r = cfg.noise.measurement();
  std::vector<detail::LiveTrack> live;
  std::vector<Track> finished;
  std::int64_t next_id = 0;
  std::int64_t prev_t = frame_times.empty() ? 0 : frame_times.front();

  auto retire = [&](detail::LiveTrack& lt) { finished.push_back(std::move(lt.track)); };

  for (std::size_t k = 0; k < frames.size(); ++k) {
    const std::int64_t t = frame_times[k];
    if (k > 0 && t <= prev_t) throw ParameterError("frames must be strictly time-ordered");
    const double dt = (k == 0 ? 1 : static_cast<double>(t - prev_t)) * cfg.dt;
    if (k > 0)
      for (auto& lt : live) lt.state = kalman_predict(lt.state, dt, q);
    prev_t = t;

    const auto& dets = frames[k];
    struct Pair {
      double d;
      std::size_t track, det;
    };
    std::vector<Pair> pairs;
    for (std::size_t a = 0; a < live.size(); ++a)
      for (std::size_t b = 0; b < dets.size(); ++b) {
        const double d = std::hypot(dets[b].box.center.x() - live[a].state.x(), dets[b].box.center.y() - live[a].state.y());
        if (d <= cfg.gate) pairs.push_back({d, a, b});
      }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& u, const Pair& v) {
      return std::tie(u.d, u.track, u.det) < std::tie(v.d, v.track, v.det);
    });
    std::vector<char> track_used(live.size(), 0), det_used(dets.size(), 0);
    for (const auto& p : pairs) {
      if (track_used[p.track] || det_used[p.det]) continue;
      track_used[p.track] = det_used[p.det] = 1;
      auto& lt = live[p.track];
      const Box3D& m = dets[p.det].box;
      const double speed = std::hypot(lt.state.vx(), lt.state.vy());
      double reference = lt.state.psi();
      if (speed > cfg.flip_speed) {
        reference = std::atan2(lt.state.vy(), lt.state.vx());
        if (std::abs(wrap_angle(lt.state.mean[4] - reference)) > M_PI / 2)
          lt.state.mean[4] = wrap_angle(lt.state.mean[4] + M_PI);
      }
      const double yaw = resolve_yaw_flip(m.yaw, reference);
      lt.state = kalman_update(lt.state, Eigen::Vector3d(m.center.x(), m.center.y(), yaw), r);
      ++lt.hits;
      lt.last_seen = t;
      Box3D out = m;
      out.yaw = yaw;
      out.timestamp_index = t;
      out.score = static_cast<double>(lt.hits) / static_cast<double>(t - lt.born + 1);
      lt.track.boxes.push_back(out);
    }

    for (std::size_t a = 0; a < live.size();) {
      if (!track_used[a] && t - live[a].last_seen > cfg.max_age) {
        retire(live[a]);
        live.erase(live.begin() + static_cast<std::ptrdiff_t>(a));
        track_used.erase(track_used.begin() + static_cast<std::ptrdiff_t>(a));
      } else {
        ++a;
      }
    }

    for (std::size_t b = 0; b < dets.size(); ++b) {
      if (det_used[b]) continue;
      detail::LiveTrack lt;
      lt.track.id = next_id++;
      lt.born = lt.last_seen = t;
      lt.hits = 1;
      const Box3D& m = dets[b].box;
      lt.state.mean << m.center.x(), m.center.y(), 0, 0, wrap_angle(m.yaw), 0;
      Vector6d sd;
      sd << cfg.noise.r_pos, cfg.noise.r_pos, cfg.init_vel_sigma, cfg.init_vel_sigma, cfg.noise.r_yaw, cfg.init_omega_sigma;
      lt.state.covariance = sd.cwiseAbs2().asDiagonal();
      Box3D out = m;
      out.yaw = wrap_angle(m.yaw);
      out.timestamp_index = t;
      out.score = 1.0;
      lt.track.boxes.push_back(out);
      live.push_back(std::move(lt));
    }
  }
  for (auto& lt : live) retire(lt);

  std::sort(finished.begin(), finished.end(), [](const Track& a, const Track& b) { return a.id < b.id; });
  std::vector<Track> out;
  for (auto& tr : finished) {
    if (static_cast<int>(tr.boxes.size()) < cfg.min_track_length) continue;
    tr.id = static_cast<std::int64_t>(out.size());
    for (auto& b : tr.boxes) b.track_id = tr.id;
    out.push_back(std::move(tr));
  }
  return out;
}

namespace detail {
inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}
}  // namespace detail

/// Replaces per-frame (x, y, yaw) by spline evaluations and z / dims by
/// per-track medians. Tracks shorter than 4 boxes are returned unchanged.
inline Track refine_track(const Track& track, double knot_spacing) {
  if (track.boxes.size() < 4) return track;
  std::vector<YawSample> ys;
  std::vector<PositionSample> ps;
  std::vector<double> zs, ls, ws, hs;
  for (const auto& b : track.boxes) {
    const auto t = static_cast<double>(b.timestamp_index);
    ys.push_back({t, b.yaw});
    ps.push_back({t, b.center.x(), b.center.y()});
    zs.push_back(b.center.z());
    ls.push_back(b.dims.x());
    ws.push_back(b.dims.y());
    hs.push_back(b.dims.z());
  }
  const TrajectorySpline yaw = spline_fit_yaw(ys, knot_spacing);
  const TrajectorySpline pos = spline_fit_position(ps, knot_spacing);
  const double z = detail::median(zs);
  const Eigen::Vector3d dims(detail::median(ls), detail::median(ws), detail::median(hs));
  Track out = track;
  for (auto& b : out.boxes) {
    const auto t = static_cast<double>(b.timestamp_index);
    b.center = Point3(pos.fx(t), pos.fy(t), z);
    b.yaw = wrap_angle(yaw.yaw(t));
    b.dims = dims;
  }
  return out;
}

}  // namespace geolabel
