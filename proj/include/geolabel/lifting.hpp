#pragma once

#include "geolabel/core.hpp"

#include <limits>

namespace geolabel {

/// Pinhole camera: `projection` maps homogeneous sensor-frame points to
/// homogeneous pixels, so the third component is the forward depth.
struct CameraModel {
  Eigen::Matrix<double, 3, 4> projection = Eigen::Matrix<double, 3, 4>::Zero();
  int width = 0;
  int height = 0;

  /// K * [R | t] from intrinsics and a sensor-to-camera transform.
  static CameraModel pinhole(double fx, double fy, double cx, double cy, int width, int height,
                             const Eigen::Matrix3d& sensor_to_cam = Eigen::Matrix3d::Identity(),
                             const Eigen::Vector3d& t = Eigen::Vector3d::Zero()) {
    Eigen::Matrix3d k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    Eigen::Matrix<double, 3, 4> rt;
    rt << sensor_to_cam, t;
    return CameraModel{k * rt, width, height};
  }
};

struct LabelImage {
  int width = 0;
  int height = 0;
  std::vector<ClassId> classes;  ///< row-major, index v * width + u

  LabelImage() = default;
  LabelImage(int w, int h, ClassId fill = kUnlabeled)
      : width(w), height(h), classes(static_cast<std::size_t>(w) * h, fill) {}

  ClassId at(int u, int v) const { return classes[static_cast<std::size_t>(v) * width + u]; }
  ClassId& at(int u, int v) { return classes[static_cast<std::size_t>(v) * width + u]; }
};

struct Projection {
  std::uint32_t id;
  int u, v;
  double depth;
};

struct ProjectionStats {
  std::size_t behind = 0;
  std::size_t out_of_bounds = 0;
};

inline std::vector<Projection> project_points(std::span<const Point3> points, const CameraModel& cam,
                                              ProjectionStats* stats = nullptr) {
  std::vector<Projection> out;
  out.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Eigen::Vector3d h = cam.projection * points[i].homogeneous();
    if (!(h.z() > 0.0)) {
      if (stats) ++stats->behind;
      continue;
    }
    const double uf = std::floor(h.x() / h.z());
    const double vf = std::floor(h.y() / h.z());
    if (uf < 0 || vf < 0 || uf >= cam.width || vf >= cam.height) {
      if (stats) ++stats->out_of_bounds;
      continue;
    }
    out.push_back({static_cast<std::uint32_t>(i), static_cast<int>(uf), static_cast<int>(vf), h.z()});
  }
  return out;
}

/// Per-pixel minimum depth of the projected points; +inf where nothing lands.
class DepthBuffer {
 public:
  DepthBuffer(int width, int height, std::span<const Projection> projected)
      : width_(width), height_(height),
        depth_(static_cast<std::size_t>(width) * height, std::numeric_limits<double>::infinity()) {
    for (const auto& p : projected) {
      double& d = depth_[static_cast<std::size_t>(p.v) * width_ + p.u];
      d = std::min(d, p.depth);
    }
  }

  double at(int u, int v) const { return depth_[static_cast<std::size_t>(v) * width_ + u]; }
  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

  /// Minimum over the (2w+1)^2 window clipped to the image.
  double window_min(int u, int v, int half_width) const {
    double m = std::numeric_limits<double>::infinity();
    const int u0 = std::max(0, u - half_width), u1 = std::min(width_ - 1, u + half_width);
    const int v0 = std::max(0, v - half_width), v1 = std::min(height_ - 1, v + half_width);
    for (int vv = v0; vv <= v1; ++vv)
      for (int uu = u0; uu <= u1; ++uu) m = std::min(m, at(uu, vv));
    return m;
  }

 private:
  int width_, height_;
  std::vector<double> depth_;
};

inline constexpr double kVisibilitySlack = 0.5;

/// One flag per entry of `projected`: visible iff its depth is within `slack`
/// of the smallest depth in its pixel neighborhood.
inline std::vector<std::uint8_t> visibility_mask(std::span<const Projection> projected, int width, int height,
                                                 int window_half_width, double slack = kVisibilitySlack) {
  if (window_half_width < 0) throw ParameterError("window half width must be >= 0");
  const DepthBuffer buffer(width, height, projected);
  std::vector<std::uint8_t> visible(projected.size(), 0);
  for (std::size_t k = 0; k < projected.size(); ++k) {
    const auto& p = projected[k];
    visible[k] = p.depth <= buffer.window_min(p.u, p.v, window_half_width) + slack;
  }
  return visible;
}

/// Initial per-point class from a label image; 0 for points that are
/// occluded, outside the image, or over unlabeled pixels.
inline std::vector<ClassId> lift_labels(const Scan& scan, const CameraModel& cam, const LabelImage& img,
                                        int window_half_width, double slack = kVisibilitySlack) {
  if (img.width != cam.width || img.height != cam.height)
    throw ParameterError("label image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                         " does not match camera " + std::to_string(cam.width) + "x" +
                         std::to_string(cam.height));
  std::vector<ClassId> labels(scan.size(), kUnlabeled);
  const auto projected = project_points(scan.points, cam);
  const auto visible = visibility_mask(projected, cam.width, cam.height, window_half_width, slack);
  for (std::size_t k = 0; k < projected.size(); ++k)
    if (visible[k]) labels[projected[k].id] = img.at(projected[k].u, projected[k].v);
  return labels;
}

/// Lifts through several cameras; the first camera with a nonzero label wins.
inline std::vector<ClassId> lift_labels_multi(const Scan& scan, std::span<const CameraModel> cams,
                                              std::span<const LabelImage> imgs, int window_half_width,
                                              double slack = kVisibilitySlack) {
  if (cams.size() != imgs.size()) throw AlignmentError("label images do not match cameras", cams.size(), imgs.size());
  std::vector<ClassId> labels(scan.size(), kUnlabeled);
  for (std::size_t c = 0; c < cams.size(); ++c) {
    const auto lc = lift_labels(scan, cams[c], imgs[c], window_half_width, slack);
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == kUnlabeled) labels[i] = lc[i];
  }
  return labels;
}

}  // namespace geolabel
