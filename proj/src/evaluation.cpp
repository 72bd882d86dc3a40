#include "aviary/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>
#include <unordered_set>

#include "aviary/errors.hpp"

namespace aviary {
namespace {

void check_manifest(const WildManifest& manifest) {
  if (!(manifest.fps > 0.0) || !std::isfinite(manifest.fps))
    throw ManifestError("evaluate: fps must be positive");
  for (const WildExample& ex : manifest.examples) {
    if (ex.frame_end <= ex.frame_start)
      throw ManifestError("evaluate: example " + std::to_string(ex.index) +
                          " has frame_end <= frame_start");
    if (ex.bucket != bucket_for_frames(ex.n_frames()))
      throw ManifestError("evaluate: example " + std::to_string(ex.index) +
                          " bucket disagrees with its frame count");
  }
}

Vec3 start_ref(const WildExample& ex, bool head_scoring) {
  return head_scoring ? ex.start_head : ex.start_mid();
}

EvalReport make_report(const WildManifest& manifest, const EvalConfig& cfg) {
  EvalReport report;
  report.thresholds = cfg.thresholds;
  report.buckets.resize(3);
  const LengthBucket order[3] = {LengthBucket::Short, LengthBucket::Medium,
                                 LengthBucket::Long};
  for (int b = 0; b < 3; ++b) {
    report.buckets[b].bucket = order[b];
    report.buckets[b].hits.assign(cfg.thresholds.size(), 0);
    report.buckets[b].ac.assign(cfg.thresholds.size(), 0.0);
  }
  report.example_distance.reserve(manifest.examples.size());
  return report;
}

void record(EvalReport& report, const WildExample& ex,
            const std::optional<double>& dist) {
  BucketScore& bucket = report.buckets[static_cast<int>(ex.bucket)];
  ++bucket.n_examples;
  ++report.n_examples;
  if (dist) {
    report.example_distance.push_back(*dist);
    for (std::size_t k = 0; k < report.thresholds.size(); ++k)
      if (*dist <= report.thresholds[k]) ++bucket.hits[k];
  } else {
    report.example_distance.push_back(-1.0);
    ++report.n_miss;
  }
}

void finalize(EvalReport& report) {
  for (BucketScore& bucket : report.buckets)
    for (std::size_t k = 0; k < report.thresholds.size(); ++k)
      bucket.ac[k] = bucket.n_examples == 0
                         ? 0.0
                         : static_cast<double>(bucket.hits[k]) /
                               bucket.n_examples;
}

}  // namespace

void EvalConfig::validate() const {
  if (thresholds.empty())
    throw ConfigError("eval: thresholds must not be empty");
  double prev = 0.0;
  for (double t : thresholds) {
    if (!std::isfinite(t) || t <= prev)
      throw ConfigError("eval: thresholds must be positive and ascending");
    prev = t;
  }
}

int associate_start(std::span<const Track> tracks, const Vec3& start,
                    int frame_start) {
  if (!start.allFinite())
    throw DataError("evaluate: start reference is not finite");
  int best = -1;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    const Track& t = tracks[i];
    if (frame_start < t.first_frame() || frame_start > t.last_frame())
      continue;
    const Vec3& pos = t.states[frame_start - t.first_frame()].position;
    const double d = (pos - start).norm();
    if (d < best_dist) {
      best_dist = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

std::optional<double> score_example(const WildExample& example,
                                    const std::optional<Vec3>& hypothesis_end,
                                    bool head_scoring) {
  if (!hypothesis_end) return std::nullopt;
  const Vec3 ref = head_scoring ? example.end_head : example.end_mid();
  return (*hypothesis_end - ref).norm();
}

EvalReport evaluate(const WildManifest& manifest, std::span<const Track> tracks,
                    const EvalConfig& cfg) {
  cfg.validate();
  check_manifest(manifest);
  EvalReport report = make_report(manifest, cfg);
  for (const WildExample& ex : manifest.examples) {
    const int hyp = associate_start(tracks, start_ref(ex, cfg.head_scoring),
                                    ex.frame_start);
    std::optional<Vec3> end;
    if (hyp >= 0) {
      const Track& t = tracks[hyp];
      if (ex.frame_end >= t.first_frame() && ex.frame_end <= t.last_frame())
        end = t.states[ex.frame_end - t.first_frame()].position;
    }
    record(report, ex, score_example(ex, end, cfg.head_scoring));
  }
  finalize(report);
  return report;
}

EvalReport oracle_evaluate(const WildManifest& manifest,
                           std::span<const Tracklet> tracklets,
                           std::span<const HypothesisTree> trees,
                           const EvalConfig& cfg) {
  cfg.validate();
  check_manifest(manifest);
  const double dt = 1.0 / manifest.fps;

  std::unordered_map<std::int64_t, int> by_id;
  for (std::size_t i = 0; i < tracklets.size(); ++i) {
    if (tracklets[i].states.empty())
      throw DataError("evaluate: tracklet without states");
    if (!by_id.emplace(tracklets[i].id, static_cast<int>(i)).second)
      throw DataError("evaluate: duplicate tracklet id");
  }

  // Merge the per-root adjacency into one continuation DAG; trees that share
  // a node agree on its children.
  std::unordered_map<int, std::vector<int>> children;
  for (const HypothesisTree& tree : trees) {
    for (const auto& [parent, kids] : tree.children) {
      const auto pit = by_id.find(parent);
      if (pit == by_id.end())
        throw DataError("evaluate: tree references unknown tracklet");
      std::vector<int>& slot = children[pit->second];
      if (!slot.empty()) continue;
      for (std::int64_t kid : kids) {
        const auto kit = by_id.find(kid);
        if (kit == by_id.end())
          throw DataError("evaluate: tree references unknown tracklet");
        slot.push_back(kit->second);
      }
    }
  }

  EvalReport report = make_report(manifest, cfg);
  for (const WildExample& ex : manifest.examples) {
    const Vec3 start = start_ref(ex, cfg.head_scoring);
    if (!start.allFinite())
      throw DataError("evaluate: start reference is not finite");

    int root = -1;
    double best_start = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < tracklets.size(); ++i) {
      const Tracklet& t = tracklets[i];
      if (ex.frame_start < t.first_frame() || ex.frame_start > t.last_frame())
        continue;
      const Vec3& pos = t.states[ex.frame_start - t.first_frame()].position;
      const double d = (pos - start).norm();
      if (d < best_start) {
        best_start = d;
        root = static_cast<int>(i);
      }
    }

    double best_end = std::numeric_limits<double>::infinity();
    if (root >= 0) {
      const Vec3 end_target = cfg.head_scoring ? ex.end_head : ex.end_mid();
      std::vector<int> stack = {root};
      std::unordered_set<int> seen = {root};
      while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        const Tracklet& t = tracklets[cur];
        if (ex.frame_end >= t.first_frame() &&
            ex.frame_end <= t.last_frame()) {
          const Vec3& pos =
              t.states[ex.frame_end - t.first_frame()].position;
          best_end = std::min(best_end, (pos - end_target).norm());
        }
        const auto it = children.find(cur);
        if (it == children.end()) continue;
        for (int kid : it->second) {
          // A branch whose gap spans the end frame answers with its blend.
          if (t.last_frame() < ex.frame_end &&
              ex.frame_end < tracklets[kid].first_frame()) {
            const Vec3 pos = gap_blend(t, tracklets[kid], ex.frame_end, dt);
            best_end = std::min(best_end, (pos - end_target).norm());
          }
          if (seen.insert(kid).second) stack.push_back(kid);
        }
      }
    }

    std::optional<double> dist;
    if (std::isfinite(best_end)) dist = best_end;
    record(report, ex, dist);
  }
  finalize(report);
  return report;
}

double survival_projection(double ac100, double horizon_frames) {
  if (!std::isfinite(ac100) || ac100 < 0.0 || ac100 > 1.0)
    throw DataError("evaluate: ac100 must lie in [0, 1]");
  if (!std::isfinite(horizon_frames) || horizon_frames < 0.0)
    throw DataError("evaluate: horizon must be non-negative");
  return std::pow(ac100, horizon_frames / 100.0);
}

}  // namespace aviary
