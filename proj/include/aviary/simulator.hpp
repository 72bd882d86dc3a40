#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "aviary/detection.hpp"
#include "aviary/geometry.hpp"
#include "aviary/seeding.hpp"
#include "aviary/wild.hpp"

namespace aviary {

struct PerchSegment {
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::Zero();
};

// Piecewise log-linear quantile knots (u in [0,1], value in seconds) for
// dwell/flight durations, plus kinematic bounds for flight realization.
struct MotionStats {
  std::vector<std::pair<double, double>> stationary_quantile;
  std::vector<std::pair<double, double>> flight_quantile;
  double speed_min = 2.3;       // lowest allowed peak speed per leg, m/s
  double speed_max = 9.0;       // highest allowed peak speed per leg, m/s
  double pause_min_s = 0.10;    // touch-down pause between legs
  double pause_max_s = 0.60;
  double curve_prob = 0.5;      // chance a long leg arcs through a waypoint

  static MotionStats defaults();
  double sample_stationary_s(std::mt19937_64& rng) const;
  double sample_flight_s(std::mt19937_64& rng) const;
};

struct SceneConfig {
  int n_birds = 15;
  double fps = 40.0;
  double duration_s = 60.0;
  Vec3 volume = Vec3(6.0, 2.4, 2.4);
  std::vector<PerchSegment> perch_graph;  // default layout via defaults()
  MotionStats motion_stats;
  double min_separation_m = 0.3;  // enforced between birds at every frame
  double floor_prob = 0.2;        // rest on the floor instead of a perch
  double jitter_sigma_m = 0.01;   // stationary micro-motion amplitude
  std::uint64_t rng_seed = 1;

  static SceneConfig defaults();
  void validate() const;  // throws ConfigError
};

// Detector noise. false_positive_rate is the expected number of shadow
// objects per frame; each shadow is a flattened floor ellipsoid rendered in
// every camera that sees it, so spurious masks are cross-view consistent and
// can triangulate into ghost points.
struct NoiseModel {
  double miss_rate = 0.0;
  double false_positive_rate = 0.0;
  double centroid_jitter_px = 0.0;
  bool merge_occlusions = true;

  void validate() const;  // throws ConfigError
};

enum class SequenceKind { Stationary, Motion };

// Closed frame interval; consecutive records of a bird share their boundary
// frame (the landing frame ends the flight and starts the next dwell).
struct SequenceRecord {
  SequenceKind kind = SequenceKind::Stationary;
  int frame_start = 0;
  int frame_end = 0;
  Vec3 start_point = Vec3::Zero();
  Vec3 end_point = Vec3::Zero();
};

struct BirdMeta {
  int id = -1;
  std::string label;  // leg band colors, e.g. "Pink+Yellow"
  std::string code;   // short form, e.g. "PY_M"
  char sex = 'F';
};

// The default 15-bird roster: ids 0..5 are males, 6..14 females.
std::vector<BirdMeta> default_roster();

struct BirdTruth {
  BirdMeta meta;
  std::vector<SequenceRecord> sequences;
  std::vector<Vec3> center;   // per frame
  std::vector<Vec3> heading;  // unit, body axis per frame

  Vec3 head(int frame) const { return center[frame] + 0.1 * heading[frame]; }
  Vec3 tail(int frame) const { return center[frame] - 0.1 * heading[frame]; }
};

struct GroundTruthScene {
  SceneConfig config;  // with the perch graph actually used
  int n_frames = 0;
  std::vector<BirdTruth> birds;

  double dt() const { return 1.0 / config.fps; }
};

GroundTruthScene generate_scene(const SceneConfig& cfg);

// Body ellipsoid: semi-axes along heading / lateral / vertical, meters.
inline constexpr double kBodyHalfLength = 0.1;
inline constexpr double kBodyHalfWidth = 0.04;
inline constexpr double kBodyHalfHeight = 0.04;

// Fills `out` with the run-length mask of the given ellipsoid in `cam`;
// returns false (empty mask) when the body is behind the camera, outside the
// frame, or too close for a stable conic.
bool rasterize_ellipsoid(const CameraModel& cam, const Vec3& center,
                         const Vec3& axis_dir, double half_len,
                         double half_width, double half_height, Mask& out);

struct RenderedFrame {
  FrameDetections detections;
  // Per camera, per mask: contributing entities (bird ids; -1 for shadows).
  // Test/debug aid, not serialized.
  std::vector<std::vector<std::vector<int>>> contributors;
};

RenderedFrame render_frame(const GroundTruthScene& scene,
                           std::span<const CameraModel> cameras,
                           const NoiseModel& noise, int frame);

std::vector<FrameDetections> render_detections(
    const GroundTruthScene& scene, std::span<const CameraModel> cameras,
    const NoiseModel& noise);

WildManifest export_wild(const GroundTruthScene& scene);

struct SongEvent {
  double time_s = 0.0;
  int male_id = -1;
};

// Poisson song process per male, emitted only while the male is stationary.
std::vector<SongEvent> generate_songs(const GroundTruthScene& scene,
                                      double songs_per_male_per_min,
                                      std::uint64_t seed);

// The eight-corner rig: every point of the aviary with 0.1 m wall clearance
// is covered by at least three cameras.
std::vector<CameraModel> default_rig(const Vec3& volume = Vec3(6.0, 2.4, 2.4));

}  // namespace aviary
