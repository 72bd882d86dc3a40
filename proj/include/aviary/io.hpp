#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aviary/detection.hpp"
#include "aviary/ethogram.hpp"
#include "aviary/evaluation.hpp"
#include "aviary/reconstruction.hpp"
#include "aviary/retracking.hpp"
#include "aviary/simulator.hpp"
#include "aviary/tracking.hpp"

// Stage artifact serialization. Every saver writes a canonical byte stream
// (fixed key order, %.17g floats in CSV), so identical inputs produce
// identical files. Loaders throw IoError when the file cannot be opened and
// DataError (with path and line) on malformed content.
namespace aviary {

// Detections: line-delimited JSON, one record per (frame, camera, mask) with
// keys frame, camera, runs (array of [y, x0, len]), centroid, area. Centroid
// and area are derived; the loader recomputes them from the runs. Cameras
// without masks on a frame emit nothing, so the loader needs the rig size to
// rebuild the per-frame camera slots.
void save_detections(const std::string& path,
                     std::span<const FrameDetections> frames);
std::vector<FrameDetections> load_detections(const std::string& path,
                                              int n_cameras);

// Clusters: line-delimited JSON with keys frame, cluster_id, center,
// n_points. cluster_id is the index within its frame. Member indices are not
// serialized; loaded clusters carry placeholder members 0..n_points-1.
void save_clusters(const std::string& path,
                   const std::vector<std::vector<Cluster>>& per_frame);
std::vector<std::vector<Cluster>> load_clusters(const std::string& path);

// Tracklets: line-delimited JSON, one line per state, keys tracklet_id,
// frame, pos, vel, status. Lines of one tracklet are consecutive with frames
// increasing by 1 and a constant status.
void save_tracklets(const std::string& path,
                    std::span<const Tracklet> tracklets);
std::vector<Tracklet> load_tracklets(const std::string& path);

// Tracks: line-delimited JSON, one line per state, keys track_id, frame,
// pos, vel, gap_filled. The source tracklet ids are carried by the tree
// file, not by track lines.
void save_tracks(const std::string& path, std::span<const Track> tracks);
std::vector<Track> load_tracks(const std::string& path);

// Hypothesis trees: one JSON array, one object per root with keys root,
// children (adjacency list, node id -> child ids), leaves, n_paths.
void save_trees(const std::string& path,
                std::span<const HypothesisTree> trees);
std::vector<HypothesisTree> load_trees(const std::string& path);

// Identified positions: CSV `frame,bird_id,x,y,z,head_x,head_y,head_z`,
// sorted by (frame, bird_id). The loader returns one centre timeline per
// bird (contiguous frames required); head columns are annotation passthrough.
void save_ground_truth(const std::string& path,
                       const GroundTruthScene& scene);
std::vector<BirdTimeline> load_position_table(const std::string& path);

// Songs: CSV `time_s,male_id` in file order.
void save_songs(const std::string& path, std::span<const SongEvent> songs);
std::vector<SongEvent> load_songs(const std::string& path);

// Roster: JSON array with keys id, label, code, sex ("M"/"F").
void save_roster(const std::string& path, std::span<const BirdMeta> birds);
std::vector<BirdMeta> load_roster(const std::string& path);

// Events: CSV `time_s,actor,target,kind` in event order.
void save_events(const std::string& path,
                 std::span<const InteractionEvent> events);
std::vector<InteractionEvent> load_events(const std::string& path);

// Pairwise interaction matrices: one CSV per kind at
// <dir>/pairwise_<kind>.csv (header row/column of bird ids) plus a combined
// JSON with keys bird_ids and one count matrix per kind.
void save_pairwise_csv(const std::string& dir, const PairwiseMatrices& m);
void save_pairwise_json(const std::string& path, const PairwiseMatrices& m);

// Pair bonds: CSV `male_id,female_id`, sorted.
void save_bonds(const std::string& path,
                std::span<const std::pair<int, int>> bonds);

// Transition analysis: <dir>/transition_{bonded,nonbonded}.csv (probability
// matrices with state labels), <dir>/transition_difference.csv, plus a JSON
// with counts, probabilities and n_transitions per split.
void save_transitions_csv(const std::string& dir,
                          const TransitionAnalysis& t);
void save_transitions_json(const std::string& path,
                           const TransitionAnalysis& t);

// Evaluation report as JSON, and as the aligned per-bucket text table.
void save_report_json(const std::string& path, const EvalReport& report);
std::string format_report_table(const EvalReport& report);

}  // namespace aviary
