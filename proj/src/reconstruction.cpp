#include "aviary/reconstruction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "aviary/errors.hpp"
#include "aviary/seeding.hpp"

namespace aviary {

void ReconstructionConfig::validate() const {
  if (!(eps_px > 0.0)) throw ConfigError("eps_px must be positive");
  if (trifocal_tol_px < 0.0) throw ConfigError("trifocal_tol must be >= 0");
  if (ghost_window < 1) throw ConfigError("ghost_window must be >= 1");
  if (!(ghost_radius_m > 0.0)) throw ConfigError("ghost_radius must be > 0");
  if (!(cluster_eps_m > 0.0)) throw ConfigError("cluster_eps must be > 0");
  if (min_pts < 1) throw ConfigError("min_pts must be >= 1");
  if (mask_cap_px < 1) throw ConfigError("mask_cap must be >= 1");
}

namespace {

// Row-indexed view of all masks of one camera; answers "is any mask pixel
// within tol of (u, v)" against the full (not subsampled) masks.
class MaskIndex {
 public:
  MaskIndex(const DetectionSet& set, int image_height) {
    rows_.assign(std::max(image_height, 0), {});
    for (const Mask& mask : set.masks)
      for (const MaskRun& run : mask.runs)
        if (run.y >= 0 && run.y < image_height)
          rows_[run.y].push_back({run.x0, run.x0 + run.len - 1});
    for (auto& row : rows_) std::sort(row.begin(), row.end());
  }

  // True iff some mask pixel center lies within tol of (u, v).
  bool any_within(double u, double v, double tol) const {
    const int y0 = static_cast<int>(std::ceil(v - tol));
    const int y1 = static_cast<int>(std::floor(v + tol));
    for (int y = std::max(y0, 0);
         y <= std::min<int>(y1, static_cast<int>(rows_.size()) - 1); ++y) {
      const double dy = y - v;
      const double budget = tol * tol - dy * dy;
      const double dx = std::sqrt(std::max(0.0, budget));
      for (const auto& [x0, x1] : rows_[y]) {
        if (x0 > u + dx) break;
        if (x1 < u - dx) continue;
        const double xn = std::clamp(std::round(u), static_cast<double>(x0),
                                     static_cast<double>(x1));
        if ((xn - u) * (xn - u) <= budget) return true;
      }
    }
    return false;
  }

 private:
  std::vector<std::vector<std::pair<int, int>>> rows_;
};

struct CameraDetections {
  const CameraModel* cam = nullptr;
  const DetectionSet* set = nullptr;
  std::vector<std::vector<Vec2>> mask_pixels;  // subsampled, per mask
  std::vector<Eigen::AlignedBox2d> mask_boxes;
  MaskIndex index;

  CameraDetections(const CameraModel& c, const DetectionSet& s,
                   const ReconstructionConfig& cfg, int frame)
      : cam(&c), set(&s), index(s, c.image_height) {
    mask_pixels.reserve(s.masks.size());
    mask_boxes.reserve(s.masks.size());
    for (std::size_t m = 0; m < s.masks.size(); ++m) {
      const std::uint64_t seed =
          derive_seed(cfg.rng_seed, "subsample", static_cast<std::uint64_t>(frame),
                      (static_cast<std::uint64_t>(c.id) << 20) | m);
      mask_pixels.push_back(subsample_mask_pixels(
          s.masks[m], static_cast<std::size_t>(cfg.mask_cap_px), seed));
      Eigen::AlignedBox2d box;
      for (const MaskRun& run : s.masks[m].runs) {
        box.extend(Vec2(run.x0, run.y));
        box.extend(Vec2(run.x0 + run.len - 1, run.y));
      }
      mask_boxes.push_back(box);
    }
  }
};

// Distance from an axis-aligned box to the line n.p + c = 0 (n unit).
double box_line_distance(const Eigen::AlignedBox2d& box, const Vec2& n,
                         double c) {
  double lo = 1e300, hi = -1e300;
  for (int corner = 0; corner < 4; ++corner) {
    const Vec2 p((corner & 1) ? box.max().x() : box.min().x(),
                 (corner & 2) ? box.max().y() : box.min().y());
    const double d = n.dot(p) + c;
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  if (lo <= 0.0 && hi >= 0.0) return 0.0;
  return std::min(std::abs(lo), std::abs(hi));
}

// Cell coordinates packed injectively into the map key (21 bits per axis,
// clamped): an XOR-folded hash can alias two cells of the same query
// neighborhood, which would double-count neighbors.
struct CellKeys {
  static constexpr std::int64_t kBits = 21;
  static constexpr std::int64_t kMax = (1LL << (kBits - 1)) - 1;

  static std::int64_t index(double x, double cell) {
    const double q = std::floor(x / cell);
    if (!(q > -static_cast<double>(kMax))) return -kMax;  // also catches NaN
    if (q > static_cast<double>(kMax)) return kMax;
    return static_cast<std::int64_t>(q);
  }

  static std::int64_t pack(std::int64_t x, std::int64_t y, std::int64_t z) {
    constexpr std::int64_t bias = 1LL << (kBits - 1);
    return ((x + bias) << (2 * kBits)) | ((y + bias) << kBits) | (z + bias);
  }

  // Distinct clamped cell indices covering [i-1, i+1].
  static int probes(std::int64_t i, std::int64_t out[3]) {
    int n = 0;
    for (std::int64_t d = -1; d <= 1; ++d) {
      const std::int64_t c = std::clamp(i + d, -kMax, kMax);
      if (n == 0 || out[n - 1] != c) out[n++] = c;
    }
    return n;
  }
};

// Spatial hash over 3D points, cell size = query radius.
class Grid3 {
 public:
  explicit Grid3(double cell) : cell_(cell) {}

  void insert(const Vec3& p) { buckets_[key(p)].push_back(p); }

  bool any_within(const Vec3& p, double r) const {
    const double r2 = r * r;
    std::int64_t xs[3], ys[3], zs[3];
    const int nx = CellKeys::probes(CellKeys::index(p.x(), cell_), xs);
    const int ny = CellKeys::probes(CellKeys::index(p.y(), cell_), ys);
    const int nz = CellKeys::probes(CellKeys::index(p.z(), cell_), zs);
    for (int a = 0; a < nx; ++a)
      for (int b = 0; b < ny; ++b)
        for (int c = 0; c < nz; ++c) {
          const auto it = buckets_.find(CellKeys::pack(xs[a], ys[b], zs[c]));
          if (it == buckets_.end()) continue;
          for (const Vec3& q : it->second)
            if ((q - p).squaredNorm() <= r2) return true;
        }
    return false;
  }

 private:
  std::int64_t key(const Vec3& p) const {
    return CellKeys::pack(CellKeys::index(p.x(), cell_),
                          CellKeys::index(p.y(), cell_),
                          CellKeys::index(p.z(), cell_));
  }

  double cell_;
  std::unordered_map<std::int64_t, std::vector<Vec3>> buckets_;
};

// Same spatial hash, over indices into an external position array.
class IndexGrid3 {
 public:
  IndexGrid3(const std::vector<Vec3>& pts, double cell)
      : pts_(pts), cell_(cell) {
    for (std::uint32_t i = 0; i < pts.size(); ++i)
      buckets_[key(pts[i])].push_back(i);
  }

  template <typename Fn>
  void for_each_within(const Vec3& p, double r, Fn&& fn) const {
    const double r2 = r * r;
    std::int64_t xs[3], ys[3], zs[3];
    const int nx = CellKeys::probes(CellKeys::index(p.x(), cell_), xs);
    const int ny = CellKeys::probes(CellKeys::index(p.y(), cell_), ys);
    const int nz = CellKeys::probes(CellKeys::index(p.z(), cell_), zs);
    for (int a = 0; a < nx; ++a)
      for (int b = 0; b < ny; ++b)
        for (int c = 0; c < nz; ++c) {
          const auto it = buckets_.find(CellKeys::pack(xs[a], ys[b], zs[c]));
          if (it == buckets_.end()) continue;
          for (const std::uint32_t i : it->second)
            if ((pts_[i] - p).squaredNorm() <= r2) fn(i);
        }
  }

 private:
  std::int64_t key(const Vec3& p) const {
    return CellKeys::pack(CellKeys::index(p.x(), cell_),
                          CellKeys::index(p.y(), cell_),
                          CellKeys::index(p.z(), cell_));
  }

  const std::vector<Vec3>& pts_;
  double cell_;
  std::unordered_map<std::int64_t, std::vector<std::uint32_t>> buckets_;
};

}  // namespace

RawPointSet match_and_triangulate(const FrameDetections& detections,
                                  std::span<const CameraModel> cameras,
                                  const ReconstructionConfig& cfg) {
  cfg.validate();
  RawPointSet out;
  out.frame = detections.frame;

  // Pair detection sets with their camera models, in detection order.
  std::vector<CameraDetections> views;
  views.reserve(detections.cameras.size());
  for (const DetectionSet& set : detections.cameras) {
    const CameraModel* cam = nullptr;
    for (const CameraModel& c : cameras)
      if (c.id == set.camera_id) cam = &c;
    if (!cam)
      throw DataError("detections reference unknown camera " +
                      std::to_string(set.camera_id));
    views.emplace_back(*cam, set, cfg, detections.frame);
  }

  const double band = 2.0 * cfg.eps_px;  // symmetric gate implies line
                                         // distance below twice the gate
  for (std::size_t vi = 0; vi < views.size(); ++vi) {
    for (std::size_t vj = vi + 1; vj < views.size(); ++vj) {
      const CameraDetections& a = views[vi];
      const CameraDetections& b = views[vj];
      if (a.set->masks.empty() || b.set->masks.empty()) continue;
      Mat3 f_ab;
      try {
        f_ab = fundamental_matrix(*a.cam, *b.cam);
      } catch (const DegenerateGeometry&) {
        continue;  // coincident centers: no epipolar constraint
      }

      for (std::size_t ma = 0; ma < a.mask_pixels.size(); ++ma) {
        for (const Vec2& pa : a.mask_pixels[ma]) {
          const Vec3 line = f_ab * Vec3(pa.x(), pa.y(), 1.0);
          const double nrm = std::hypot(line.x(), line.y());
          if (nrm < 1e-15) continue;
          const Vec2 n(line.x() / nrm, line.y() / nrm);
          const double c0 = line.z() / nrm;

          for (std::size_t mb = 0; mb < b.mask_pixels.size(); ++mb) {
            if (box_line_distance(b.mask_boxes[mb], n, c0) > band) continue;
            for (const Vec2& pb : b.mask_pixels[mb]) {
              if (std::abs(n.dot(pb) + c0) > band) continue;
              if (epipolar_distance(f_ab, pa.x(), pa.y(), pb.x(), pb.y()) >=
                  cfg.eps_px)
                continue;

              Triangulation tri;
              try {
                tri = triangulate_pair(*a.cam, pa, *b.cam, pb);
              } catch (const DegenerateGeometry&) {
                continue;
              }

              // The point must reproject onto both contributing pixels.
              const auto ra = a.cam->project(tri.point);
              const auto rb = b.cam->project(tri.point);
              if (!ra || !rb) continue;
              if ((Vec2(ra->u, ra->v) - pa).norm() > cfg.eps_px) continue;
              if ((Vec2(rb->u, rb->v) - pb).norm() > cfg.eps_px) continue;

              // Third-view support: required as soon as one covering third
              // camera exists, satisfied by any covering camera with a mask
              // pixel near the reprojection.
              bool covered = false, supported = false;
              for (std::size_t vk = 0; vk < views.size() && !supported; ++vk) {
                if (vk == vi || vk == vj) continue;
                const CameraDetections& c = views[vk];
                if (!c.cam->sees(tri.point)) continue;
                covered = true;
                const auto rc = c.cam->project(tri.point);
                if (rc && c.index.any_within(rc->u, rc->v, cfg.trifocal_tol_px))
                  supported = true;
              }
              if (covered && !supported) continue;

              RawPoint point;
              point.position = tri.point;
              point.views = {Pixel{pa.x(), pa.y(), a.cam->id},
                             Pixel{pb.x(), pb.y(), b.cam->id}};
              out.points.push_back(std::move(point));
            }
          }
        }
      }
    }
  }
  return out;
}

RawPointSet filter_ghosts(std::span<const RawPointSet> window,
                          std::size_t center, double radius_m) {
  if (window.empty() || center >= window.size())
    throw DataError("ghost filter window does not contain the center frame");
  if (!(radius_m > 0.0)) throw ConfigError("ghost_radius must be > 0");

  std::vector<Grid3> grids;
  grids.reserve(window.size());
  for (const RawPointSet& set : window) {
    Grid3 g(radius_m);
    for (const RawPoint& p : set.points) g.insert(p.position);
    grids.push_back(std::move(g));
  }

  RawPointSet out;
  out.frame = window[center].frame;
  for (const RawPoint& p : window[center].points) {
    bool keep = false;
    for (std::size_t t = 0; t < window.size() && !keep; ++t) {
      if (t == center) continue;
      keep = grids[t].any_within(p.position, radius_m);
    }
    if (keep) out.points.push_back(p);
  }
  return out;
}

std::vector<Cluster> cluster_points(const RawPointSet& set, double eps_m,
                                    int min_pts) {
  if (!(eps_m > 0.0)) throw ConfigError("cluster eps must be > 0");
  if (min_pts < 1) throw ConfigError("min_pts must be >= 1");

  const std::size_t n = set.points.size();
  std::vector<Vec3> pos(n);
  for (std::size_t i = 0; i < n; ++i) pos[i] = set.points[i].position;
  IndexGrid3 grid(pos, eps_m);

  // Core points: at least min_pts neighbors within eps (self included).
  std::vector<bool> core(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    int count = 0;
    grid.for_each_within(pos[i], eps_m, [&](std::uint32_t) { ++count; });
    core[i] = count >= min_pts;
  }

  // Connected components of the core-core reachability graph, seeded in
  // index order so labels are a pure function of the input.
  constexpr std::int32_t kUnlabeled = -1;
  std::vector<std::int32_t> label(n, kUnlabeled);
  std::int32_t n_clusters = 0;
  std::vector<std::uint32_t> stack;
  for (std::size_t i = 0; i < n; ++i) {
    if (!core[i] || label[i] != kUnlabeled) continue;
    const std::int32_t id = n_clusters++;
    label[i] = id;
    stack.assign(1, static_cast<std::uint32_t>(i));
    while (!stack.empty()) {
      const std::uint32_t j = stack.back();
      stack.pop_back();
      grid.for_each_within(pos[j], eps_m, [&](std::uint32_t m) {
        if (core[m] && label[m] == kUnlabeled) {
          label[m] = id;
          stack.push_back(m);
        }
      });
    }
  }

  // Border points join the cluster of their lowest-indexed core neighbor.
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) continue;
    std::uint32_t best = std::numeric_limits<std::uint32_t>::max();
    grid.for_each_within(pos[i], eps_m, [&](std::uint32_t m) {
      if (core[m] && m < best) best = m;
    });
    if (best != std::numeric_limits<std::uint32_t>::max())
      label[i] = label[best];
  }

  std::vector<Cluster> clusters(n_clusters);
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] == kUnlabeled) continue;  // noise
    Cluster& c = clusters[label[i]];
    c.members.push_back(static_cast<std::uint32_t>(i));
    c.center += pos[i];
  }
  for (Cluster& c : clusters) {
    c.frame = set.frame;
    c.center /= static_cast<double>(c.members.size());
  }
  std::sort(clusters.begin(), clusters.end(),
            [](const Cluster& a, const Cluster& b) {
              return a.members.front() < b.members.front();
            });
  return clusters;
}

std::vector<std::vector<Cluster>> reconstruct_sequence(
    std::span<const FrameDetections> frames,
    std::span<const CameraModel> cameras, const ReconstructionConfig& cfg) {
  cfg.validate();
  const int n = static_cast<int>(frames.size());
  std::vector<std::vector<Cluster>> out(n);
  if (n == 0) return out;

  // Sliding window of raw point sets: [f - w, f + w] clipped to range.
  const int w = cfg.ghost_window;
  std::vector<RawPointSet> window;
  int first_in_window = 0;
  for (int f = 0; f < std::min(n, w + 1); ++f)
    window.push_back(match_and_triangulate(frames[f], cameras, cfg));

  for (int f = 0; f < n; ++f) {
    while (first_in_window < f - w) {
      window.erase(window.begin());
      ++first_in_window;
    }
    const int next = first_in_window + static_cast<int>(window.size());
    if (next <= f + w && next < n)
      window.push_back(match_and_triangulate(frames[next], cameras, cfg));

    RawPointSet filtered =
        filter_ghosts(window, static_cast<std::size_t>(f - first_in_window),
                      cfg.ghost_radius_m);
    out[f] = cluster_points(filtered, cfg.cluster_eps_m, cfg.min_pts);
  }
  return out;
}

}  // namespace aviary
