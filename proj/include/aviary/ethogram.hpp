#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aviary/geometry.hpp"
#include "aviary/retracking.hpp"
#include "aviary/simulator.hpp"

namespace aviary {

struct EthogramConfig {
  double fps = 40.0;
  double d_int_m = 0.5;          // interaction radius
  double stay_wait_s = 1.0;      // grace period before a stay is confirmed
  double flight_speed_mps = 0.8; // sustained speed separating flight from rest
  int min_flight_frames = 6;     // shorter fast runs are perch jitter
  double dyad_window_s = 60.0;   // max gap chained into a transition

  void validate() const;  // throws ConfigError
};

enum class InteractionKind { Approach, Leave, Stay, SingTo };

const char* kind_name(InteractionKind k);

// actor != target; sing_to actors are male.
struct InteractionEvent {
  double time_s = 0.0;
  int actor = -1;
  int target = -1;
  InteractionKind kind = InteractionKind::Approach;
};

// One bird's position per frame over a contiguous frame range.
struct BirdTimeline {
  int bird_id = -1;
  int first_frame = 0;
  std::vector<Vec3> positions;

  int last_frame() const {
    return first_frame + static_cast<int>(positions.size()) - 1;
  }
  bool covers(int frame) const {
    return frame >= first_frame && frame <= last_frame();
  }
  const Vec3& at(int frame) const { return positions[frame - first_frame]; }
};

// Maximal runs of at least min_flight_frames consecutive frames whose
// per-frame speed exceeds flight_speed_mps. A segment's frames are the
// moving ones: the state at first_frame - 1 is the last at rest, the state
// at last_frame is the landing.
struct FlightSegment {
  int first_frame = 0;
  int last_frame = 0;
};

std::vector<FlightSegment> segment_flights(const BirdTimeline& timeline,
                                           const EthogramConfig& cfg);

// Timeline extraction: ground-truth centers, or tracks whose ids are bird
// ids (identity assignment is upstream of this stage).
std::vector<BirdTimeline> scene_timelines(const GroundTruthScene& scene);
std::vector<BirdTimeline> track_timelines(std::span<const Track> tracks);

// Interaction extraction:
//  - approach: a flight of the actor lands within d_int of the target;
//  - leave: the actor takes off within d_int of the target and its flight
//    ends beyond d_int (one leave per such neighbor);
//  - sing_to: a song event broadcasts to every bird within d_int of the
//    (male) singer at the song frame;
//  - stay: the approached bird recorded no leave back toward the approacher
//    within stay_wait (inclusive), and its timeline covers the full wait.
// Events are returned sorted by (time, actor, target, kind).
std::vector<InteractionEvent> extract_interactions(
    std::span<const BirdTimeline> timelines, std::span<const SongEvent> songs,
    std::span<const BirdMeta> birds, const EthogramConfig& cfg);

// Per-kind actor x target counts, rows and columns in roster order.
struct PairwiseMatrices {
  std::vector<int> bird_ids;
  std::array<std::vector<std::vector<std::int64_t>>, 4> counts;
};

PairwiseMatrices pairwise_matrices(std::span<const InteractionEvent> events,
                                   std::span<const BirdMeta> birds);

// (male, female) pairs where the male sang strictly more than half of all
// sing_to events the female received. Sorted ascending.
std::vector<std::pair<int, int>> infer_pair_bonds(
    std::span<const InteractionEvent> events, std::span<const BirdMeta> birds);

// Transition states: actor role (male first) crossed with interaction kind.
inline constexpr int kTransitionStates = 8;

int transition_state(bool actor_is_male, InteractionKind k);
std::string transition_state_label(int state);

struct TransitionMatrix {
  std::array<std::array<std::int64_t, kTransitionStates>, kTransitionStates>
      counts{};
  std::array<std::array<double, kTransitionStates>, kTransitionStates>
      probs{};
  std::int64_t n_transitions = 0;
};

struct TransitionAnalysis {
  TransitionMatrix bonded;
  TransitionMatrix nonbonded;
  // bonded minus nonbonded row-normalized probabilities, cells in [-1, 1].
  std::array<std::array<double, kTransitionStates>, kTransitionStates>
      difference{};
};

// Within every male-female dyad, consecutive events no further apart than
// dyad_window chain into transitions, split by the dyad's bond status.
TransitionAnalysis transition_analysis(
    std::span<const InteractionEvent> events,
    std::span<const std::pair<int, int>> bonds,
    std::span<const BirdMeta> birds, const EthogramConfig& cfg);

}  // namespace aviary
