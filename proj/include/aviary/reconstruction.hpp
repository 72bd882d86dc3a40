#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "aviary/detection.hpp"
#include "aviary/geometry.hpp"

namespace aviary {

struct ReconstructionConfig {
  double eps_px = 3.0;           // symmetric epipolar gate
  double trifocal_tol_px = 3.0;  // third-view support distance
  int ghost_window = 2;          // +- frames searched for temporal support
  double ghost_radius_m = 0.15;
  double cluster_eps_m = 0.12;
  int min_pts = 4;
  int mask_cap_px = 400;  // masks above this pixel count are subsampled
  // Subsample streams are pinned per mask: derive_seed(rng_seed, "subsample",
  // frame, (camera_id << 20) | mask_index). Reruns and replays are identical.
  std::uint64_t rng_seed = 1;

  void validate() const;  // throws ConfigError
};

// One triangulated point with its two contributing pixel observations.
struct RawPoint {
  Vec3 position = Vec3::Zero();
  std::vector<Pixel> views;
};

struct RawPointSet {
  int frame = 0;
  std::vector<RawPoint> points;
};

struct Cluster {
  int frame = 0;
  Vec3 center = Vec3::Zero();           // mean of member positions
  std::vector<std::uint32_t> members;   // indices into the clustered set

  int n_points() const { return static_cast<int>(members.size()); }
};

// Cross-view matching and triangulation for one frame. Every cross-camera
// pair of active (subsampled) pixels whose symmetric epipolar distance is
// below eps_px is triangulated; the result is kept when it reprojects into
// both contributing views within eps_px and, if a third camera covers the
// point, at least one covering view has a mask pixel within trifocal_tol_px
// of the reprojection. Points covered by exactly the two contributing
// cameras pass on the epipolar gate alone.
RawPointSet match_and_triangulate(const FrameDetections& detections,
                                  std::span<const CameraModel> cameras,
                                  const ReconstructionConfig& cfg);

// Temporal ghost filter: keeps a point of window[center] iff some other
// frame of the window has a point within radius_m.
RawPointSet filter_ghosts(std::span<const RawPointSet> window,
                          std::size_t center, double radius_m);

// DBSCAN over point positions. Border points reachable from several
// clusters go to the cluster of their lowest-indexed core neighbor, making
// the labeling a pure function of the indexed input. Noise is dropped.
// Clusters are ordered by their lowest member index.
std::vector<Cluster> cluster_points(const RawPointSet& points, double eps_m,
                                    int min_pts);

// Full reconstruction: match, ghost-filter with a sliding window, cluster.
// Streams internally; member indices refer to the per-frame filtered sets.
std::vector<std::vector<Cluster>> reconstruct_sequence(
    std::span<const FrameDetections> frames,
    std::span<const CameraModel> cameras, const ReconstructionConfig& cfg);

}  // namespace aviary
