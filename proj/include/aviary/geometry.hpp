#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aviary/errors.hpp"

namespace aviary {

using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;
using Mat3 = Eigen::Matrix3d;

struct Pixel {
  double u = 0.0;
  double v = 0.0;
  int camera_id = -1;
};

// Ideal pinhole camera, world-to-camera convention x_cam = R * x_world + t.
// No distortion model.
struct CameraModel {
  int id = -1;
  double fx = 0.0, fy = 0.0;
  double cx = 0.0, cy = 0.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  int image_width = 1920;
  int image_height = 1200;

  // Throws ConfigError on a non-orthonormal rotation or out-of-range
  // intrinsics.
  void validate() const;

  Vec3 center() const { return -rotation.transpose() * translation; }

  Vec3 to_camera(const Vec3& p) const { return rotation * p + translation; }

  // Perspective projection; nullopt when camera-frame depth <= 1e-9 m.
  std::optional<Pixel> project(const Vec3& p) const;

  // Raw projection used for residuals; depth is sign-preserved and clamped
  // away from zero so points behind the camera land far from any real pixel.
  Vec2 project_unchecked(const Vec3& p) const;

  bool in_bounds(double u, double v) const {
    return u >= 0.0 && u < image_width && v >= 0.0 && v < image_height;
  }

  bool sees(const Vec3& p) const {
    auto px = project(p);
    return px && in_bounds(px->u, px->v);
  }
};

// World-to-camera rotation for a camera at `center` looking at `target`,
// image u toward world-right of the view direction and v downward (z-up
// world). Falls back to a y-up reference when the view is vertical.
Mat3 look_at_rotation(const Vec3& center, const Vec3& target);

// Fundamental matrix with x_b^T F x_a = 0 for pixel homogeneous coords.
// Throws DegenerateGeometry when the camera centers coincide within 1e-9 m.
Mat3 fundamental_matrix(const CameraModel& cam_a, const CameraModel& cam_b);

// Symmetric epipolar distance: mean of point-to-epipolar-line distances in
// both images, in pixels.
double epipolar_distance(const CameraModel& cam_a, const CameraModel& cam_b,
                         const Pixel& pix_a, const Pixel& pix_b);

// Same, with a precomputed fundamental matrix (hot path).
double epipolar_distance(const Mat3& f_ab, double ua, double va, double ub,
                         double vb);

struct Triangulation {
  Vec3 point = Vec3::Zero();
  double rms_px = 0.0;
};

// Homogeneous linear least-squares triangulation (smallest singular vector of
// the stacked DLT system built in normalized camera coordinates). Throws
// DegenerateGeometry when the two smallest singular values are relatively
// closer than 1e-12 or the homogeneous scale vanishes.
Triangulation triangulate_dlt(
    std::span<const std::pair<const CameraModel*, Vec2>> observations);

Triangulation triangulate_dlt(
    const std::vector<std::pair<const CameraModel*, Vec2>>& observations);

// Two-view fast path used by the per-frame matcher.
Triangulation triangulate_pair(const CameraModel& cam_a, const Vec2& pix_a,
                               const CameraModel& cam_b, const Vec2& pix_b);

// Trifocal consistency realized as pair-triangulate-then-reproject: true iff
// the {A,B} triangulation projects into C within tol pixels of some active
// pixel. Propagates DegenerateGeometry from the triangulation.
bool trifocal_check(const CameraModel& cam_a, const CameraModel& cam_b,
                    const CameraModel& cam_c, const Pixel& pix_a,
                    const Pixel& pix_b, std::span<const Pixel> active_pixels_c,
                    double tol_px);

// Calibration file: JSON array of cameras with fields
// id, fx, fy, cx, cy, R (row-major 9), t (3), width, height.
std::vector<CameraModel> load_calibration(const std::string& path);
void save_calibration(const std::string& path,
                      const std::vector<CameraModel>& cameras);

}  // namespace aviary
