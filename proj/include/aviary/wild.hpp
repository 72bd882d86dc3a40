#pragma once

#include <string>
#include <vector>

#include "aviary/geometry.hpp"

namespace aviary {

// Length buckets for challenge examples, by frame count n:
// n <= 100, 100 < n <= 300, n > 300.
enum class LengthBucket { Short, Medium, Long };

std::string bucket_name(LengthBucket b);
LengthBucket bucket_for_frames(int n_frames);

// One where-did-it-land challenge: given the start annotation, predict where
// the target bird ends up at frame_end.
struct WildExample {
  int index = 0;
  int target_id = 0;
  int frame_start = 0;
  int frame_end = 0;
  Vec3 start_head = Vec3::Zero();
  Vec3 start_tail = Vec3::Zero();
  Vec3 end_head = Vec3::Zero();
  Vec3 end_tail = Vec3::Zero();
  LengthBucket bucket = LengthBucket::Short;

  int n_frames() const { return frame_end - frame_start; }
  Vec3 start_mid() const { return 0.5 * (start_head + start_tail); }
  Vec3 end_mid() const { return 0.5 * (end_head + end_tail); }
};

struct WildManifest {
  double fps = 40.0;
  std::vector<WildExample> examples;
};

WildManifest load_wild_manifest(const std::string& path);
void save_wild_manifest(const std::string& path, const WildManifest& manifest);

}  // namespace aviary
