#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "aviary/geometry.hpp"
#include "aviary/reconstruction.hpp"

namespace aviary {

struct TrackerConfig {
  double dt = 1.0 / 40.0;    // seconds per frame
  double gate_m = 0.25;      // max association cost for established tracklets
  double init_gate_m = 0.3;  // distance cap while a tracklet has no velocity
  double smooth_sigma = 1.5;  // frames
  int smooth_radius = 4;      // frames

  void validate() const;  // throws ConfigError
};

enum class TrackletStatus { Active, StoppedAmbiguous, StoppedLost };

const char* to_string(TrackletStatus status);

struct TrackletState {
  int frame = 0;
  Vec3 position = Vec3::Zero();
  // (position[k] - position[k-1]) / dt; zero (undefined) on the first state.
  Vec3 velocity = Vec3::Zero();
};

struct Tracklet {
  std::int64_t id = -1;
  std::vector<TrackletState> states;  // frames strictly increasing by 1
  TrackletStatus status = TrackletStatus::Active;

  int first_frame() const { return states.front().frame; }
  int last_frame() const { return states.back().frame; }
  int length() const { return static_cast<int>(states.size()); }
  bool has_velocity() const { return states.size() >= 2; }
};

// Constant-velocity prediction one frame ahead.
Vec3 predict(const TrackletState& state, double dt);

// Velocity implied by two consecutive positions.
Vec3 init_velocity(const Vec3& x1, const Vec3& x2, double dt);

// Min-cost matching between rows and columns among pairs with cost < gate;
// cardinality is maximized first, cost minimized among maximal matchings.
struct Assignment {
  std::vector<int> row_to_col;  // -1 when unmatched
  std::vector<int> col_to_row;
  double total_cost = 0.0;
  int n_matched = 0;
};

Assignment hungarian(const Eigen::MatrixXd& cost, double gate);

// Advance the tracker by one frame. Active tracklets (all at frame - 1) are
// extended by Hungarian matching against the cluster centers, tracklets with
// two or more in-gate candidates stop as ambiguous, tracklets with none (or
// whose only candidate is taken) stop as lost, and every unconsumed cluster
// seeds a new tracklet. Tracklets without a velocity yet are matched on raw
// distance under init_gate_m instead of the prediction under gate_m.
// Clusters are processed in canonical center order, so the outcome does not
// depend on their input order.
void track_step(std::vector<Tracklet>& tracklets, int frame,
                std::span<const Cluster> clusters, const TrackerConfig& cfg,
                std::int64_t& next_id);

// Gaussian-smooth positions and velocities per coordinate with a truncated
// normalized kernel; boundary kernels renormalize over the valid support.
// The undefined first-state velocity is left untouched and excluded from the
// velocity convolution window.
Tracklet smooth_tracklet(Tracklet tracklet, const TrackerConfig& cfg);

// Drive the tracker over consecutive frames (frames[i] holds the clusters of
// first_frame + i) and smooth every finished tracklet.
std::vector<Tracklet> track_sequence(
    std::span<const std::vector<Cluster>> frames, int first_frame,
    const TrackerConfig& cfg);

}  // namespace aviary
