#include "aviary/geometry.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace aviary {

namespace {

constexpr double kMinDepth = 1e-9;

double signed_depth_clamp(double z) {
  if (std::abs(z) < 1e-12) return z < 0.0 ? -1e-12 : 1e-12;
  return z;
}

}  // namespace

void CameraModel::validate() const {
  const Mat3 rtr = rotation.transpose() * rotation;
  if ((rtr - Mat3::Identity()).norm() >= 1e-9)
    throw ConfigError("camera " + std::to_string(id) +
                      ": rotation is not orthonormal");
  if (rotation.determinant() <= 0.0)
    throw ConfigError("camera " + std::to_string(id) +
                      ": rotation determinant must be +1");
  if (fx <= 0.0 || fy <= 0.0)
    throw ConfigError("camera " + std::to_string(id) +
                      ": focal lengths must be positive");
  if (cx < 0.0 || cx >= image_width || cy < 0.0 || cy >= image_height)
    throw ConfigError("camera " + std::to_string(id) +
                      ": principal point outside image");
}

std::optional<Pixel> CameraModel::project(const Vec3& p) const {
  const Vec3 pc = to_camera(p);
  if (pc.z() <= kMinDepth) return std::nullopt;
  Pixel px;
  px.u = fx * pc.x() / pc.z() + cx;
  px.v = fy * pc.y() / pc.z() + cy;
  px.camera_id = id;
  return px;
}

Vec2 CameraModel::project_unchecked(const Vec3& p) const {
  const Vec3 pc = to_camera(p);
  const double z = signed_depth_clamp(pc.z());
  return {fx * pc.x() / z + cx, fy * pc.y() / z + cy};
}

Mat3 look_at_rotation(const Vec3& center, const Vec3& target) {
  const Vec3 forward = target - center;
  if (forward.norm() < 1e-12)
    throw ConfigError("look_at_rotation: target coincides with center");
  const Vec3 z = forward.normalized();
  Vec3 up(0.0, 0.0, 1.0);
  if (std::abs(z.dot(up)) > 1.0 - 1e-9) up = Vec3(0.0, 1.0, 0.0);
  const Vec3 x = z.cross(up).normalized();  // u toward view-right
  const Vec3 y = z.cross(x);                // v downward
  Mat3 r;
  r.row(0) = x;
  r.row(1) = y;
  r.row(2) = z;
  return r;
}

Mat3 fundamental_matrix(const CameraModel& cam_a, const CameraModel& cam_b) {
  if ((cam_a.center() - cam_b.center()).norm() < 1e-9)
    throw DegenerateGeometry("coincident camera centers");
  const Mat3 r_rel = cam_b.rotation * cam_a.rotation.transpose();
  const Vec3 t_rel = cam_b.translation - r_rel * cam_a.translation;
  Mat3 tx;
  tx << 0, -t_rel.z(), t_rel.y(), t_rel.z(), 0, -t_rel.x(), -t_rel.y(),
      t_rel.x(), 0;
  Mat3 k_a_inv = Mat3::Identity();
  k_a_inv(0, 0) = 1.0 / cam_a.fx;
  k_a_inv(1, 1) = 1.0 / cam_a.fy;
  k_a_inv(0, 2) = -cam_a.cx / cam_a.fx;
  k_a_inv(1, 2) = -cam_a.cy / cam_a.fy;
  Mat3 k_b_inv = Mat3::Identity();
  k_b_inv(0, 0) = 1.0 / cam_b.fx;
  k_b_inv(1, 1) = 1.0 / cam_b.fy;
  k_b_inv(0, 2) = -cam_b.cx / cam_b.fx;
  k_b_inv(1, 2) = -cam_b.cy / cam_b.fy;
  return k_b_inv.transpose() * (tx * r_rel) * k_a_inv;
}

double epipolar_distance(const Mat3& f_ab, double ua, double va, double ub,
                         double vb) {
  const Vec3 xa(ua, va, 1.0);
  const Vec3 xb(ub, vb, 1.0);
  const Vec3 lb = f_ab * xa;       // line in image B
  const Vec3 la = f_ab.transpose() * xb;  // line in image A
  const double num = std::abs(xb.dot(lb));
  const double nb = std::hypot(lb.x(), lb.y());
  const double na = std::hypot(la.x(), la.y());
  if (nb < 1e-15 || na < 1e-15) return std::numeric_limits<double>::infinity();
  return 0.5 * (num / nb + num / na);
}

double epipolar_distance(const CameraModel& cam_a, const CameraModel& cam_b,
                         const Pixel& pix_a, const Pixel& pix_b) {
  const Mat3 f = fundamental_matrix(cam_a, cam_b);
  return epipolar_distance(f, pix_a.u, pix_a.v, pix_b.u, pix_b.v);
}

namespace {

Triangulation solve_dlt(
    std::span<const std::pair<const CameraModel*, Vec2>> obs) {
  const int n = static_cast<int>(obs.size());
  if (n < 2) throw DataError("triangulation requires >= 2 observations");

  // Rows are built in normalized camera coordinates (pixel normalization by
  // the intrinsics); unnormalized pixel-scale DLT is ill-conditioned at
  // 1920x1200.
  Eigen::Matrix<double, Eigen::Dynamic, 4> a(2 * n, 4);
  for (int i = 0; i < n; ++i) {
    const CameraModel& cam = *obs[i].first;
    const Vec2& px = obs[i].second;
    const double xn = (px.x() - cam.cx) / cam.fx;
    const double yn = (px.y() - cam.cy) / cam.fy;
    Eigen::Matrix<double, 3, 4> p;
    p.leftCols<3>() = cam.rotation;
    p.col(3) = cam.translation;
    a.row(2 * i) = xn * p.row(2) - p.row(0);
    a.row(2 * i + 1) = yn * p.row(2) - p.row(1);
  }

  Eigen::Matrix4d ata = a.transpose() * a;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(ata);
  const Eigen::Vector4d evals = eig.eigenvalues();  // ascending
  const double s0 = std::sqrt(std::max(evals[0], 0.0));
  const double s1 = std::sqrt(std::max(evals[1], 0.0));
  const double smax = std::sqrt(std::max(evals[3], 0.0));
  // Two vanishing singular values mean the observations pin down a ray, not
  // a point. Values below sqrt(machine eps) of the system scale are
  // indistinguishable from zero here, so the tie test includes that floor.
  if (smax < 1e-300 || s1 <= 1e-8 * smax || (s1 - s0) < 1e-12 * s1)
    throw DegenerateGeometry("DLT system has a (near) 2-dim null space");

  Eigen::Vector4d x = eig.eigenvectors().col(0);
  if (std::abs(x[3]) < 1e-12 * x.norm())
    throw DegenerateGeometry("triangulated point at infinity");
  Triangulation out;
  out.point = x.head<3>() / x[3];

  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vec2 rp = obs[i].first->project_unchecked(out.point);
    sq += (rp - obs[i].second).squaredNorm();
  }
  out.rms_px = std::sqrt(sq / n);
  return out;
}

}  // namespace

Triangulation triangulate_dlt(
    std::span<const std::pair<const CameraModel*, Vec2>> observations) {
  return solve_dlt(observations);
}

Triangulation triangulate_dlt(
    const std::vector<std::pair<const CameraModel*, Vec2>>& observations) {
  return solve_dlt(std::span(observations.data(), observations.size()));
}

Triangulation triangulate_pair(const CameraModel& cam_a, const Vec2& pix_a,
                               const CameraModel& cam_b, const Vec2& pix_b) {
  const std::pair<const CameraModel*, Vec2> obs[2] = {{&cam_a, pix_a},
                                                      {&cam_b, pix_b}};
  return solve_dlt(std::span(obs, 2));
}

bool trifocal_check(const CameraModel& cam_a, const CameraModel& cam_b,
                    const CameraModel& cam_c, const Pixel& pix_a,
                    const Pixel& pix_b, std::span<const Pixel> active_pixels_c,
                    double tol_px) {
  const Triangulation tri =
      triangulate_pair(cam_a, Vec2(pix_a.u, pix_a.v), cam_b,
                       Vec2(pix_b.u, pix_b.v));
  const auto px = cam_c.project(tri.point);
  if (!px) return false;
  const double tol_sq = tol_px * tol_px;
  for (const Pixel& q : active_pixels_c) {
    const double du = q.u - px->u;
    const double dv = q.v - px->v;
    if (du * du + dv * dv <= tol_sq) return true;
  }
  return false;
}

std::vector<CameraModel> load_calibration(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open calibration file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw DataError("calibration parse error in " + path + ": " + e.what());
  }
  if (!doc.is_array()) throw DataError("calibration must be a JSON array");
  std::vector<CameraModel> cams;
  for (const auto& j : doc) {
    CameraModel c;
    c.id = j.at("id").get<int>();
    c.fx = j.at("fx").get<double>();
    c.fy = j.at("fy").get<double>();
    c.cx = j.at("cx").get<double>();
    c.cy = j.at("cy").get<double>();
    const auto r = j.at("R");
    const auto t = j.at("t");
    if (r.size() != 9 || t.size() != 3)
      throw DataError("calibration camera " + std::to_string(c.id) +
                      ": R must have 9 entries and t 3");
    for (int k = 0; k < 9; ++k) c.rotation(k / 3, k % 3) = r[k].get<double>();
    for (int k = 0; k < 3; ++k) c.translation[k] = t[k].get<double>();
    c.image_width = j.at("width").get<int>();
    c.image_height = j.at("height").get<int>();
    c.validate();
    cams.push_back(c);
  }
  return cams;
}

void save_calibration(const std::string& path,
                      const std::vector<CameraModel>& cameras) {
  nlohmann::json doc = nlohmann::json::array();
  for (const CameraModel& c : cameras) {
    nlohmann::json j;
    j["id"] = c.id;
    j["fx"] = c.fx;
    j["fy"] = c.fy;
    j["cx"] = c.cx;
    j["cy"] = c.cy;
    std::vector<double> r(9);
    for (int k = 0; k < 9; ++k) r[k] = c.rotation(k / 3, k % 3);
    j["R"] = r;
    j["t"] = std::vector<double>{c.translation.x(), c.translation.y(),
                                 c.translation.z()};
    j["width"] = c.image_width;
    j["height"] = c.image_height;
    doc.push_back(std::move(j));
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write calibration file: " + path);
  out << doc.dump(2) << "\n";
}

}  // namespace aviary
