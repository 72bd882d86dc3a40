#pragma once

#include <optional>
#include <span>
#include <vector>

#include "aviary/geometry.hpp"
#include "aviary/retracking.hpp"
#include "aviary/wild.hpp"

namespace aviary {

struct EvalConfig {
  std::vector<double> thresholds = {0.1, 0.3, 0.5, 1.0};  // metres, ascending
  bool head_scoring = false;  // reference = head annotation instead of the
                              // head/tail midpoint

  void validate() const;  // throws ConfigError
};

struct BucketScore {
  LengthBucket bucket = LengthBucket::Short;
  int n_examples = 0;
  std::vector<int> hits;   // per threshold
  std::vector<double> ac;  // hits / n_examples, 0 when the bucket is empty
};

// Bucketed accuracy table. `example_distance` is indexed like the manifest's
// example list; -1 marks a Miss (no hypothesis, or none reaching frame_end).
struct EvalReport {
  std::vector<double> thresholds;
  std::vector<BucketScore> buckets;  // Short, Medium, Long
  int n_examples = 0;
  int n_miss = 0;
  std::vector<double> example_distance;
};

// Nearest hypothesis state at frame_start (ties -> lower index); -1 when no
// track covers that frame.
int associate_start(std::span<const Track> tracks, const Vec3& start,
                    int frame_start);

// Euclidean distance from the hypothesis endpoint to the example's end
// reference point; empty = Miss (fails every threshold).
std::optional<double> score_example(const WildExample& example,
                                    const std::optional<Vec3>& hypothesis_end,
                                    bool head_scoring = false);

// Greedy scoring: associate the nearest track at the start, measure where
// that same track is at the end.
EvalReport evaluate(const WildManifest& manifest, std::span<const Track> tracks,
                    const EvalConfig& cfg = {});

// Oracle scoring: associate the nearest tracklet at the start, succeed on the
// best endpoint over every branch reachable from it in the hypothesis trees
// (gap frames between joined tracklets are blended the same way retracking
// fills them).
EvalReport oracle_evaluate(const WildManifest& manifest,
                           std::span<const Tracklet> tracklets,
                           std::span<const HypothesisTree> trees,
                           const EvalConfig& cfg = {});

// Survival extrapolation under independent per-100-frame failure:
// ac100^(horizon/100).
double survival_projection(double ac100, double horizon_frames);

}  // namespace aviary
