#include "aviary/ethogram.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>
#include <unordered_map>

#include "aviary/errors.hpp"

namespace aviary {
namespace {

struct Roster {
  std::unordered_map<int, char> sex;  // id -> 'M' / 'F'
  std::vector<int> ids;               // roster order
};

Roster index_roster(std::span<const BirdMeta> birds) {
  Roster r;
  for (const BirdMeta& b : birds) {
    if (!r.sex.emplace(b.id, b.sex).second)
      throw DataError("ethogram: duplicate bird id in roster");
    r.ids.push_back(b.id);
  }
  return r;
}

void check_timelines(std::span<const BirdTimeline> timelines,
                     const Roster& roster) {
  std::set<int> seen;
  for (const BirdTimeline& t : timelines) {
    if (t.positions.empty())
      throw DataError("ethogram: timeline without positions");
    if (!roster.sex.count(t.bird_id))
      throw DataError("ethogram: timeline bird id not in roster");
    if (!seen.insert(t.bird_id).second)
      throw DataError("ethogram: duplicate timeline bird id");
  }
}

bool canonical_before(const InteractionEvent& a, const InteractionEvent& b) {
  return std::tie(a.time_s, a.actor, a.target, a.kind) <
         std::tie(b.time_s, b.actor, b.target, b.kind);
}

void normalize(TransitionMatrix& m) {
  for (int i = 0; i < kTransitionStates; ++i) {
    std::int64_t row = 0;
    for (int j = 0; j < kTransitionStates; ++j) row += m.counts[i][j];
    for (int j = 0; j < kTransitionStates; ++j)
      m.probs[i][j] =
          row == 0 ? 0.0 : static_cast<double>(m.counts[i][j]) / row;
  }
}

}  // namespace

void EthogramConfig::validate() const {
  if (!(fps > 0.0) || !std::isfinite(fps))
    throw ConfigError("ethogram: fps must be positive");
  if (!(d_int_m > 0.0) || !std::isfinite(d_int_m))
    throw ConfigError("ethogram: interaction distance must be positive");
  if (stay_wait_s < 0.0 || !std::isfinite(stay_wait_s))
    throw ConfigError("ethogram: stay wait must be >= 0");
  if (!(flight_speed_mps > 0.0) || !std::isfinite(flight_speed_mps))
    throw ConfigError("ethogram: flight speed must be positive");
  if (min_flight_frames < 1)
    throw ConfigError("ethogram: min flight frames must be >= 1");
  if (dyad_window_s < 0.0 || !std::isfinite(dyad_window_s))
    throw ConfigError("ethogram: dyad window must be >= 0");
}

const char* kind_name(InteractionKind k) {
  switch (k) {
    case InteractionKind::Approach: return "approach";
    case InteractionKind::Leave: return "leave";
    case InteractionKind::Stay: return "stay";
    case InteractionKind::SingTo: return "sing_to";
  }
  return "?";
}

std::vector<FlightSegment> segment_flights(const BirdTimeline& timeline,
                                           const EthogramConfig& cfg) {
  cfg.validate();
  std::vector<FlightSegment> out;
  const int n = static_cast<int>(timeline.positions.size());
  int run_start = -1;
  for (int k = 1; k <= n; ++k) {
    const bool flying =
        k < n && (timeline.positions[k] - timeline.positions[k - 1]).norm() *
                         cfg.fps >
                     cfg.flight_speed_mps;
    if (flying && run_start < 0) run_start = k;
    if (!flying && run_start >= 0) {
      if (k - run_start >= cfg.min_flight_frames)
        out.push_back({timeline.first_frame + run_start,
                       timeline.first_frame + k - 1});
      run_start = -1;
    }
  }
  return out;
}

std::vector<BirdTimeline> scene_timelines(const GroundTruthScene& scene) {
  std::vector<BirdTimeline> out;
  out.reserve(scene.birds.size());
  for (const BirdTruth& bird : scene.birds)
    out.push_back({bird.meta.id, 0, bird.center});
  return out;
}

std::vector<BirdTimeline> track_timelines(std::span<const Track> tracks) {
  std::vector<BirdTimeline> out;
  out.reserve(tracks.size());
  for (const Track& t : tracks) {
    BirdTimeline tl;
    tl.bird_id = static_cast<int>(t.id);
    tl.first_frame = t.first_frame();
    tl.positions.reserve(t.states.size());
    for (const TrackState& s : t.states) tl.positions.push_back(s.position);
    out.push_back(std::move(tl));
  }
  return out;
}

std::vector<InteractionEvent> extract_interactions(
    std::span<const BirdTimeline> timelines, std::span<const SongEvent> songs,
    std::span<const BirdMeta> birds, const EthogramConfig& cfg) {
  cfg.validate();
  const Roster roster = index_roster(birds);
  check_timelines(timelines, roster);

  std::unordered_map<int, const BirdTimeline*> by_id;
  for (const BirdTimeline& t : timelines) by_id.emplace(t.bird_id, &t);

  std::vector<InteractionEvent> events;

  // Approaches and leaves from flight segments.
  struct ApproachRec {
    int frame;
    int actor;  // the bird that flew in
    int target;
  };
  std::vector<ApproachRec> approaches;
  // Leave frames per (leaver, neighbor), for the stay rule.
  std::map<std::pair<int, int>, std::vector<int>> leave_frames;

  for (const BirdTimeline& tl : timelines) {
    for (const FlightSegment& seg : segment_flights(tl, cfg)) {
      const int rest = seg.first_frame - 1;
      const int land = seg.last_frame;
      for (const BirdTimeline& other : timelines) {
        if (other.bird_id == tl.bird_id) continue;
        if (other.covers(land) &&
            (tl.at(land) - other.at(land)).norm() <= cfg.d_int_m) {
          events.push_back({land / cfg.fps, tl.bird_id, other.bird_id,
                            InteractionKind::Approach});
          approaches.push_back({land, tl.bird_id, other.bird_id});
        }
        if (other.covers(rest) && other.covers(land) &&
            (tl.at(rest) - other.at(rest)).norm() <= cfg.d_int_m &&
            (tl.at(land) - other.at(land)).norm() > cfg.d_int_m) {
          events.push_back({seg.first_frame / cfg.fps, tl.bird_id,
                            other.bird_id, InteractionKind::Leave});
          leave_frames[{tl.bird_id, other.bird_id}].push_back(
              seg.first_frame);
        }
      }
    }
  }

  // Song broadcasts.
  for (const SongEvent& song : songs) {
    const auto sex = roster.sex.find(song.male_id);
    if (sex == roster.sex.end() || sex->second != 'M')
      throw DataError("ethogram: song from unknown or non-male bird");
    if (song.time_s < 0.0 || !std::isfinite(song.time_s))
      throw DataError("ethogram: song time must be non-negative");
    const auto singer = by_id.find(song.male_id);
    if (singer == by_id.end()) continue;
    const int frame = static_cast<int>(std::lround(song.time_s * cfg.fps));
    if (!singer->second->covers(frame)) continue;
    const Vec3& at_song = singer->second->at(frame);
    for (const BirdTimeline& other : timelines) {
      if (other.bird_id == song.male_id || !other.covers(frame)) continue;
      if ((at_song - other.at(frame)).norm() <= cfg.d_int_m)
        events.push_back({song.time_s, song.male_id, other.bird_id,
                          InteractionKind::SingTo});
    }
  }

  // Stays: the approached bird never left back toward the approacher within
  // the wait, and its timeline covers the whole wait.
  const double wait_frames = cfg.stay_wait_s * cfg.fps;
  for (const ApproachRec& ap : approaches) {
    const BirdTimeline& stayer = *by_id.at(ap.target);
    const int confirm =
        ap.frame + static_cast<int>(std::ceil(wait_frames - 1e-9));
    if (!stayer.covers(confirm)) continue;
    bool left = false;
    const auto it = leave_frames.find({ap.target, ap.actor});
    if (it != leave_frames.end())
      for (int lf : it->second)
        if (lf >= ap.frame && lf - ap.frame <= wait_frames) left = true;
    if (!left)
      events.push_back({ap.frame / cfg.fps + cfg.stay_wait_s, ap.target,
                        ap.actor, InteractionKind::Stay});
  }

  std::sort(events.begin(), events.end(), canonical_before);
  return events;
}

PairwiseMatrices pairwise_matrices(std::span<const InteractionEvent> events,
                                   std::span<const BirdMeta> birds) {
  const Roster roster = index_roster(birds);
  std::unordered_map<int, int> col;
  for (std::size_t i = 0; i < roster.ids.size(); ++i)
    col.emplace(roster.ids[i], static_cast<int>(i));

  PairwiseMatrices out;
  out.bird_ids = roster.ids;
  const std::size_t n = roster.ids.size();
  for (auto& m : out.counts)
    m.assign(n, std::vector<std::int64_t>(n, 0));

  for (const InteractionEvent& e : events) {
    const auto a = col.find(e.actor);
    const auto t = col.find(e.target);
    if (a == col.end() || t == col.end())
      throw DataError("ethogram: event references a bird not in the roster");
    if (e.actor == e.target)
      throw DataError("ethogram: event with actor == target");
    ++out.counts[static_cast<int>(e.kind)][a->second][t->second];
  }
  return out;
}

std::vector<std::pair<int, int>> infer_pair_bonds(
    std::span<const InteractionEvent> events,
    std::span<const BirdMeta> birds) {
  const Roster roster = index_roster(birds);
  std::map<int, std::int64_t> received;              // female -> total songs
  std::map<std::pair<int, int>, std::int64_t> from;  // (male, female) -> songs
  for (const InteractionEvent& e : events) {
    if (e.kind != InteractionKind::SingTo) continue;
    const auto actor = roster.sex.find(e.actor);
    const auto target = roster.sex.find(e.target);
    if (actor == roster.sex.end() || target == roster.sex.end())
      throw DataError("ethogram: event references a bird not in the roster");
    if (actor->second != 'M')
      throw DataError("ethogram: sing_to event from a non-male bird");
    if (target->second != 'F') continue;
    ++received[e.target];
    ++from[{e.actor, e.target}];
  }

  std::vector<std::pair<int, int>> bonds;
  for (const auto& [pair, count] : from)
    if (2 * count > received.at(pair.second)) bonds.push_back(pair);
  std::sort(bonds.begin(), bonds.end());
  return bonds;
}

int transition_state(bool actor_is_male, InteractionKind k) {
  return (actor_is_male ? 0 : 4) + static_cast<int>(k);
}

std::string transition_state_label(int state) {
  return std::string(state < 4 ? "male_" : "female_") +
         kind_name(static_cast<InteractionKind>(state % 4));
}

TransitionAnalysis transition_analysis(
    std::span<const InteractionEvent> events,
    std::span<const std::pair<int, int>> bonds,
    std::span<const BirdMeta> birds, const EthogramConfig& cfg) {
  cfg.validate();
  const Roster roster = index_roster(birds);
  const std::set<std::pair<int, int>> bonded(bonds.begin(), bonds.end());

  // Group events by male-female dyad; same-sex events have no dyad.
  std::map<std::pair<int, int>, std::vector<InteractionEvent>> dyads;
  for (const InteractionEvent& e : events) {
    const auto a = roster.sex.find(e.actor);
    const auto t = roster.sex.find(e.target);
    if (a == roster.sex.end() || t == roster.sex.end())
      throw DataError("ethogram: event references a bird not in the roster");
    if (a->second == t->second) continue;
    const int male = a->second == 'M' ? e.actor : e.target;
    const int female = a->second == 'M' ? e.target : e.actor;
    dyads[{male, female}].push_back(e);
  }

  TransitionAnalysis out;
  for (auto& [pair, list] : dyads) {
    std::sort(list.begin(), list.end(), canonical_before);
    TransitionMatrix& m =
        bonded.count(pair) ? out.bonded : out.nonbonded;
    for (std::size_t i = 0; i + 1 < list.size(); ++i) {
      if (list[i + 1].time_s - list[i].time_s > cfg.dyad_window_s) continue;
      const int a = transition_state(list[i].actor == pair.first,
                                     list[i].kind);
      const int b = transition_state(list[i + 1].actor == pair.first,
                                     list[i + 1].kind);
      ++m.counts[a][b];
      ++m.n_transitions;
    }
  }
  normalize(out.bonded);
  normalize(out.nonbonded);
  for (int i = 0; i < kTransitionStates; ++i)
    for (int j = 0; j < kTransitionStates; ++j)
      out.difference[i][j] = out.bonded.probs[i][j] - out.nonbonded.probs[i][j];
  return out;
}

}  // namespace aviary
