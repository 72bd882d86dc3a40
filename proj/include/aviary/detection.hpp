#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "aviary/geometry.hpp"

namespace aviary {

// One horizontal run of active pixels: columns [x0, x0+len) on row y.
struct MaskRun {
  std::int32_t y = 0;
  std::int32_t x0 = 0;
  std::int32_t len = 0;
};

// Silhouette mask as run-length rows plus the derived centroid/area. Runs are
// sorted by (y, x0) and non-overlapping per row.
struct Mask {
  std::vector<MaskRun> runs;
  Vec2 centroid = Vec2::Zero();
  std::int64_t area = 0;

  void recompute_stats();
  bool overlaps(const Mask& other) const;
  static Mask merge(const Mask& a, const Mask& b);
};

// Detections of a single (frame, camera).
struct DetectionSet {
  int frame = 0;
  int camera_id = -1;
  std::vector<Mask> masks;
};

// All detections for one frame, indexed by camera order of the rig.
struct FrameDetections {
  int frame = 0;
  std::vector<DetectionSet> cameras;
};

// All pixel coordinates of a mask, row by row. Intended for small masks.
std::vector<Vec2> enumerate_pixels(const Mask& mask);

// Deterministic sample of at most `cap` distinct pixels. The full pixel set
// is returned when it fits the cap; otherwise Floyd's algorithm drawn from
// `seed` picks the subset, emitted in raster order.
std::vector<Vec2> subsample_mask_pixels(const Mask& mask, std::size_t cap,
                                        std::uint64_t seed);

// Uniform-cell spatial hash over 2D points; supports radius and segment
// queries. Insertion order is preserved, so query results are deterministic.
class PixelGrid {
 public:
  explicit PixelGrid(double cell_px = 8.0) : cell_(cell_px) {}

  void reserve(std::size_t n) { pts_.reserve(n); }
  void insert(double u, double v);
  std::size_t size() const { return pts_.size(); }
  const std::vector<Vec2>& points() const { return pts_; }

  // Indices of points within radius of (u, v).
  void query_radius(double u, double v, double radius,
                    std::vector<std::uint32_t>& out) const;

  bool any_within(double u, double v, double radius) const;

  // Indices of points within `radius` of the segment (u0,v0)-(u1,v1).
  void query_segment(double u0, double v0, double u1, double v1, double radius,
                     std::vector<std::uint32_t>& out) const;

 private:
  std::int64_t key(std::int64_t ix, std::int64_t iy) const {
    return (ix << 21) ^ (iy & ((1 << 21) - 1));
  }

  double cell_;
  std::vector<Vec2> pts_;
  // open addressing would be faster but a flat map keeps this simple
  std::unordered_map<std::int64_t, std::vector<std::uint32_t>> buckets_;
};

}  // namespace aviary
