#pragma once

#include "geolabel/core.hpp"

#include <Eigen/Dense>

namespace geolabel {

/// Uniform cubic B-spline on [t0, t0 + n*h] with n + 3 control coefficients.
/// Outside the knot range the end segments are extrapolated.
class UniformCubicBSpline {
 public:
  UniformCubicBSpline() = default;
  UniformCubicBSpline(double t0, double spacing, int intervals)
      : t0_(t0), h_(spacing), n_(intervals), coeffs_(Eigen::VectorXd::Zero(intervals + 3)) {
    if (!(spacing > 0.0) || intervals < 1) throw ParameterError("spline needs a positive spacing and >= 1 interval");
  }

  double t0() const noexcept { return t0_; }
  double spacing() const noexcept { return h_; }
  int intervals() const noexcept { return n_; }
  int num_coefficients() const noexcept { return n_ + 3; }

  const Eigen::VectorXd& coefficients() const noexcept { return coeffs_; }
  void set_coefficients(const Eigen::VectorXd& c) {
    if (c.size() != num_coefficients()) throw ParameterError("coefficient count mismatch");
    coeffs_ = c;
  }

  /// Index of the first active coefficient and the four basis values at t.
  std::pair<int, Eigen::Vector4d> basis(double t) const {
    const double u = (t - t0_) / h_;
    const int k = std::clamp(static_cast<int>(std::floor(u)), 0, n_ - 1);
    const double s = u - k;
    const double s2 = s * s, s3 = s2 * s;
    Eigen::Vector4d b;
    b << (1 - s) * (1 - s) * (1 - s) / 6.0, (3 * s3 - 6 * s2 + 4) / 6.0, (-3 * s3 + 3 * s2 + 3 * s + 1) / 6.0,
        s3 / 6.0;
    return {k, b};
  }

  double operator()(double t) const { return evaluate(coeffs_, t); }

  double evaluate(const Eigen::VectorXd& c, double t) const {
    const auto [k, b] = basis(t);
    return b.dot(c.segment<4>(k));
  }

  /// Rows: samples, columns: coefficients.
  Eigen::MatrixXd design_matrix(std::span<const double> ts) const {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ts.size()), num_coefficients());
    for (std::size_t r = 0; r < ts.size(); ++r) {
      const auto [k, b] = basis(ts[r]);
      a.block<1, 4>(static_cast<Eigen::Index>(r), k) = b.transpose();
    }
    return a;
  }

 private:
  double t0_ = 0.0, h_ = 1.0;
  int n_ = 1;
  Eigen::VectorXd coeffs_;
};

/// Knot layout covering [min t, max t] with spacing close to `knot_spacing`.
inline UniformCubicBSpline make_knots(std::span<const double> ts, double knot_spacing) {
  if (ts.empty()) throw ParameterError("no samples");
  if (!(knot_spacing > 0.0)) throw ParameterError("knot spacing must be positive");
  const auto [lo, hi] = std::minmax_element(ts.begin(), ts.end());
  const double span = *hi - *lo;
  if (!(span > 0.0)) throw ParameterError("samples must span a positive time range");
  const int n = std::max(1, static_cast<int>(std::lround(span / knot_spacing)));
  return UniformCubicBSpline(*lo, span / n, n);
}

struct LeastSquaresFit {
  Eigen::VectorXd coefficients;
  bool rank_deficient = false;
};

/// Minimum-norm linear least squares via complete orthogonal decomposition.
inline LeastSquaresFit solve_least_squares(const Eigen::MatrixXd& a, const Eigen::VectorXd& y) {
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
  return {cod.solve(y), cod.rank() < a.cols()};
}

struct TrajectorySpline {
  UniformCubicBSpline fc, fs, fx, fy;
  bool rank_deficient = false;

  double yaw(double t) const { return std::atan2(fs(t), fc(t)); }
  Eigen::Vector2d position(double t) const { return {fx(t), fy(t)}; }
};

struct YawSample {
  double t, psi;
};
struct PositionSample {
  double t, x, y;
};

inline double e_yaw(const UniformCubicBSpline& knots, const Eigen::VectorXd& c_cos, const Eigen::VectorXd& c_sin,
                    std::span<const YawSample> samples) {
  double e = 0.0;
  for (const auto& s : samples) {
    const double dc = knots.evaluate(c_cos, s.t) - std::cos(s.psi);
    const double ds = knots.evaluate(c_sin, s.t) - std::sin(s.psi);
    e += dc * dc + ds * ds;
  }
  return 0.5 * e;
}

inline double e_position(const UniformCubicBSpline& knots, const Eigen::VectorXd& c_x, const Eigen::VectorXd& c_y,
                         std::span<const PositionSample> samples) {
  double e = 0.0;
  for (const auto& s : samples) {
    const double dx = knots.evaluate(c_x, s.t) - s.x;
    const double dy = knots.evaluate(c_y, s.t) - s.y;
    e += dx * dx + dy * dy;
  }
  return 0.5 * e;
}

/// Fits cosine and sine components of the heading separately; the result
/// has no wrap discontinuity.
inline TrajectorySpline spline_fit_yaw(std::span<const YawSample> samples, double knot_spacing) {
  if (samples.size() < 4) throw ParameterError("yaw spline needs at least 4 samples");
  std::vector<double> ts;
  Eigen::VectorXd yc(samples.size()), ys(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    ts.push_back(samples[i].t);
    yc[i] = std::cos(samples[i].psi);
    ys[i] = std::sin(samples[i].psi);
  }
  TrajectorySpline out;
  out.fc = out.fs = make_knots(ts, knot_spacing);
  const Eigen::MatrixXd a = out.fc.design_matrix(ts);
  const auto c = solve_least_squares(a, yc);
  const auto s = solve_least_squares(a, ys);
  out.fc.set_coefficients(c.coefficients);
  out.fs.set_coefficients(s.coefficients);
  out.rank_deficient = c.rank_deficient || s.rank_deficient;
  return out;
}

inline TrajectorySpline spline_fit_position(std::span<const PositionSample> samples, double knot_spacing) {
  if (samples.size() < 4) throw ParameterError("position spline needs at least 4 samples");
  std::vector<double> ts;
  Eigen::VectorXd yx(samples.size()), yy(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    ts.push_back(samples[i].t);
    yx[i] = samples[i].x;
    yy[i] = samples[i].y;
  }
  TrajectorySpline out;
  out.fx = out.fy = make_knots(ts, knot_spacing);
  const Eigen::MatrixXd a = out.fx.design_matrix(ts);
  const auto x = solve_least_squares(a, yx);
  const auto y = solve_least_squares(a, yy);
  out.fx.set_coefficients(x.coefficients);
  out.fy.set_coefficients(y.coefficients);
  out.rank_deficient = x.rank_deficient || y.rank_deficient;
  return out;
}

}  // namespace geolabel
