#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "aviary/geometry.hpp"
#include "aviary/tracking.hpp"

namespace aviary {

struct RetrackConfig {
  double dt = 1.0 / 40.0;      // seconds per frame
  int max_gap = 20;            // frames bridged by a join
  double join_dist_m = 0.3;    // midpoint projection agreement
  double vel_tol_mps = 1e3;    // endpoint velocity dissimilarity cap
  int min_track_frames = 10;   // shorter tracks are dropped after joining

  void validate() const;  // throws ConfigError
};

struct TrackState {
  int frame = 0;
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  bool gap_filled = false;
};

struct Track {
  std::int64_t id = -1;
  std::vector<std::int64_t> tracklet_ids;  // temporal order
  std::vector<TrackState> states;          // contiguous frames

  int first_frame() const { return states.front().frame; }
  int last_frame() const { return states.back().frame; }
  int length() const { return static_cast<int>(states.size()); }
};

// All feasible joins kept as branches. `children` spans exactly the
// tracklets reachable from the root; `n_paths` counts root-to-leaf paths of
// the unrolled tree (saturating), which equals its leaf count.
struct HypothesisTree {
  std::int64_t root = -1;
  std::map<std::int64_t, std::vector<std::int64_t>> children;
  std::vector<std::int64_t> leaves;  // ascending, no duplicates
  std::uint64_t n_paths = 1;
};

// The velocity stored on a tracklet's first state is zero (undefined by the
// finite-difference convention); the physical start velocity is the first
// defined one.
Vec3 tracklet_start_velocity(const Tracklet& t);

// Constant-velocity blend for a gap frame between two joined tracklets:
// linear mix of the forward extrapolation of a's end state and the backward
// extrapolation of b's start. Requires a.last_frame() < frame <
// b.first_frame().
Vec3 gap_blend(const Tracklet& a, const Tracklet& b, int frame, double dt);

// Join feasibility for A ending at tA and B starting at tB needs
// 1 <= tB - tA <= max_gap, endpoint constant-velocity projections of both
// tracklets to the midpoint time within join_dist_m, and endpoint velocity
// dissimilarity within vel_tol_mps. Tracklets are expected smoothed. The
// start velocity of B is its first defined one (states[1]); the stored
// zero of the first state is a finite-difference artifact.
//
// Joins are chosen globally greedily by ascending (velocity dissimilarity,
// midpoint distance, id pair); each tracklet end and each tracklet start is
// used at most once. Gaps are filled by linearly blending the two endpoint
// extrapolations and flagged. Tracks shorter than min_track_frames are
// dropped after joining.
std::vector<Track> link_tracklets(std::span<const Tracklet> tracklets,
                                  const RetrackConfig& cfg);

// Same feasibility, but every feasible child is kept as a branch and
// nothing is consumed. Trees are rooted at tracklets with no feasible
// parent, in input order.
std::vector<HypothesisTree> build_hypothesis_tree(
    std::span<const Tracklet> tracklets, const RetrackConfig& cfg);

}  // namespace aviary
