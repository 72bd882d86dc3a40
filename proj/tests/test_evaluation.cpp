#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <doctest.h>

#include "aviary/errors.hpp"
#include "aviary/evaluation.hpp"
#include "aviary/reconstruction.hpp"
#include "aviary/retracking.hpp"
#include "aviary/simulator.hpp"
#include "aviary/tracking.hpp"

using namespace aviary;

namespace {

const double kDt = 0.025;

// Constant-velocity track anchored at frame 0: pos(f) = p0 + f * v * dt.
Track line_track(std::int64_t id, int first_frame, int length, const Vec3& p0,
                 const Vec3& v) {
  Track t;
  t.id = id;
  t.tracklet_ids = {id};
  for (int k = 0; k < length; ++k) {
    const int f = first_frame + k;
    t.states.push_back({f, p0 + f * (v * kDt), v, false});
  }
  return t;
}

// Same line sampled as a smoothed tracklet (first velocity is the zero
// placeholder).
Tracklet line_tracklet(std::int64_t id, int first_frame, int length,
                       const Vec3& p0, const Vec3& v) {
  Tracklet t;
  t.id = id;
  t.status = TrackletStatus::StoppedLost;
  for (int k = 0; k < length; ++k) {
    const int f = first_frame + k;
    TrackletState s;
    s.frame = f;
    s.position = p0 + f * (v * kDt);
    s.velocity = k == 0 ? Vec3::Zero() : v;
    t.states.push_back(s);
  }
  return t;
}

WildExample point_example(int index, int frame_start, int frame_end,
                          const Vec3& start, const Vec3& end) {
  WildExample ex;
  ex.index = index;
  ex.target_id = 0;
  ex.frame_start = frame_start;
  ex.frame_end = frame_end;
  ex.start_head = ex.start_tail = start;
  ex.end_head = ex.end_tail = end;
  ex.bucket = bucket_for_frames(ex.n_frames());
  return ex;
}

// Structural invariants every report must satisfy.
void check_report(const EvalReport& r, int n_expected) {
  REQUIRE(r.buckets.size() == 3);
  REQUIRE(r.example_distance.size() == static_cast<std::size_t>(n_expected));
  int sum = 0;
  int miss = 0;
  for (const BucketScore& b : r.buckets) {
    sum += b.n_examples;
    REQUIRE(b.hits.size() == r.thresholds.size());
    REQUIRE(b.ac.size() == r.thresholds.size());
    for (std::size_t k = 0; k < b.hits.size(); ++k) {
      REQUIRE(b.hits[k] >= 0);
      REQUIRE(b.hits[k] <= b.n_examples);
      const double expect =
          b.n_examples == 0 ? 0.0
                            : static_cast<double>(b.hits[k]) / b.n_examples;
      REQUIRE(b.ac[k] == expect);
      if (k > 0) REQUIRE(b.ac[k] >= b.ac[k - 1]);
    }
  }
  for (double d : r.example_distance)
    if (d < 0.0) ++miss;
  REQUIRE(sum == n_expected);
  REQUIRE(r.n_examples == n_expected);
  REQUIRE(r.n_miss == miss);
}

void check_dominance(const EvalReport& oracle, const EvalReport& greedy) {
  for (int b = 0; b < 3; ++b) {
    REQUIRE(oracle.buckets[b].n_examples == greedy.buckets[b].n_examples);
    for (std::size_t k = 0; k < greedy.thresholds.size(); ++k)
      REQUIRE(oracle.buckets[b].ac[k] >= greedy.buckets[b].ac[k]);
  }
}

}  // namespace

TEST_CASE("eval config validation rejects bad values") {
  REQUIRE_NOTHROW(EvalConfig{}.validate());
  EvalConfig c;
  c.thresholds = {};
  REQUIRE_THROWS_AS(c.validate(), ConfigError);
  c.thresholds = {0.3, 0.1};
  REQUIRE_THROWS_AS(c.validate(), ConfigError);
  c.thresholds = {0.1, 0.1};
  REQUIRE_THROWS_AS(c.validate(), ConfigError);
  c.thresholds = {0.0, 0.1};
  REQUIRE_THROWS_AS(c.validate(), ConfigError);
  c.thresholds = {0.1, std::numeric_limits<double>::quiet_NaN()};
  REQUIRE_THROWS_AS(c.validate(), ConfigError);
  c.thresholds = {0.25};
  REQUIRE_NOTHROW(c.validate());
}

TEST_CASE("start association picks the nearest live track") {
  std::vector<Track> tracks;
  tracks.push_back(line_track(0, 0, 50, Vec3(0.1, 0.0, 1.0), Vec3::Zero()));
  tracks.push_back(line_track(1, 0, 50, Vec3(0.4, 0.0, 1.0), Vec3::Zero()));

  const Vec3 start(0.0, 0.0, 1.0);
  REQUIRE(associate_start(tracks, start, 0) == 0);
  REQUIRE(associate_start(tracks, Vec3(0.38, 0.0, 1.0), 10) == 1);

  // No track alive at the frame.
  REQUIRE(associate_start(tracks, start, 50) == -1);
  REQUIRE(associate_start(std::vector<Track>{}, start, 0) == -1);

  // Exact tie goes to the lower index.
  REQUIRE(associate_start(tracks, Vec3(0.25, 0.0, 1.0), 5) == 0);

  REQUIRE_THROWS_AS(
      associate_start(tracks,
                      Vec3(std::numeric_limits<double>::quiet_NaN(), 0, 0), 0),
      DataError);
}

TEST_CASE("example scoring measures the end distance") {
  const WildExample ex =
      point_example(0, 0, 40, Vec3(0, 0, 1), Vec3(2, 0, 1));
  REQUIRE(!score_example(ex, std::nullopt).has_value());
  REQUIRE(*score_example(ex, Vec3(2, 0, 1)) == 0.0);
  REQUIRE(*score_example(ex, Vec3(2, 0.25, 1)) == doctest::Approx(0.25));

  // Head scoring references the head annotation instead of the midpoint.
  WildExample off = ex;
  off.end_head = Vec3(2, 0, 1);
  off.end_tail = Vec3(2, 0.16, 1);
  REQUIRE(*score_example(off, Vec3(2, 0, 1), false) ==
          doctest::Approx(0.08).epsilon(1e-12));
  REQUIRE(*score_example(off, Vec3(2, 0, 1), true) == 0.0);
}

TEST_CASE("accuracy counting reproduces the documented fractions") {
  const double dists[4] = {0.05, 0.2, 0.4, 2.0};
  std::vector<Track> tracks;
  WildManifest manifest;
  for (int i = 0; i < 4; ++i) {
    const Vec3 p0(0.0, 3.0 * i, 1.0);
    const Vec3 v(1.0, 0.0, 0.0);
    tracks.push_back(line_track(i, 0, 61, p0, v));
    const Vec3 end = tracks.back().states.back().position;
    manifest.examples.push_back(
        point_example(i, 0, 60, p0, end + Vec3(dists[i], 0.0, 0.0)));
  }

  const EvalReport r = evaluate(manifest, tracks);
  check_report(r, 4);
  const BucketScore& s = r.buckets[0];
  REQUIRE(s.n_examples == 4);
  REQUIRE(s.hits == std::vector<int>{1, 2, 3, 3});
  REQUIRE(s.ac == std::vector<double>{0.25, 0.50, 0.75, 0.75});
  REQUIRE(r.n_miss == 0);
  for (int i = 0; i < 4; ++i)
    REQUIRE(r.example_distance[i] ==
            doctest::Approx(dists[i]).epsilon(1e-12));
}

TEST_CASE("misses fail every threshold and the buckets replay the table") {
  WildManifest manifest;
  int index = 0;
  auto add = [&](int count, int n_frames) {
    for (int i = 0; i < count; ++i)
      manifest.examples.push_back(point_example(
          index++, 0, n_frames, Vec3(0, 0, 1), Vec3(1, 0, 1)));
  };
  add(741, 50);
  add(186, 200);
  add(25, 400);

  const EvalReport r = evaluate(manifest, std::vector<Track>{});
  check_report(r, 952);
  REQUIRE(r.buckets[0].n_examples == 741);
  REQUIRE(r.buckets[1].n_examples == 186);
  REQUIRE(r.buckets[2].n_examples == 25);
  REQUIRE(r.n_miss == 952);
  for (const BucketScore& b : r.buckets)
    for (double a : b.ac) REQUIRE(a == 0.0);
  for (double d : r.example_distance) REQUIRE(d == -1.0);

  const EvalReport empty = evaluate(WildManifest{}, std::vector<Track>{});
  check_report(empty, 0);
}

TEST_CASE("manifest inconsistencies are rejected") {
  std::vector<Track> tracks = {
      line_track(0, 0, 400, Vec3(0, 0, 1), Vec3::Zero())};

  WildManifest m;
  m.examples.push_back(point_example(0, 10, 10, Vec3(0, 0, 1), Vec3(0, 0, 1)));
  REQUIRE_THROWS_AS(evaluate(m, tracks), ManifestError);
  m.examples[0].frame_end = 5;
  REQUIRE_THROWS_AS(evaluate(m, tracks), ManifestError);

  // Stored bucket must agree with the frame count.
  m.examples[0] = point_example(0, 0, 200, Vec3(0, 0, 1), Vec3(0, 0, 1));
  m.examples[0].bucket = LengthBucket::Short;
  REQUIRE_THROWS_AS(evaluate(m, tracks), ManifestError);
  REQUIRE_THROWS_AS(
      oracle_evaluate(m, std::vector<Tracklet>{},
                      std::vector<HypothesisTree>{}),
      ManifestError);

  WildManifest bad_fps;
  bad_fps.fps = 0.0;
  REQUIRE_THROWS_AS(evaluate(bad_fps, tracks), ManifestError);

  // Boundary frame counts sit in the documented buckets.
  WildManifest edges;
  edges.examples.push_back(point_example(0, 0, 100, Vec3(0, 0, 1), Vec3(0, 0, 1)));
  edges.examples.push_back(point_example(1, 0, 101, Vec3(0, 0, 1), Vec3(0, 0, 1)));
  edges.examples.push_back(point_example(2, 0, 300, Vec3(0, 0, 1), Vec3(0, 0, 1)));
  edges.examples.push_back(point_example(3, 0, 301, Vec3(0, 0, 1), Vec3(0, 0, 1)));
  REQUIRE(edges.examples[0].bucket == LengthBucket::Short);
  REQUIRE(edges.examples[1].bucket == LengthBucket::Medium);
  REQUIRE(edges.examples[2].bucket == LengthBucket::Medium);
  REQUIRE(edges.examples[3].bucket == LengthBucket::Long);
  const EvalReport r = evaluate(edges, tracks);
  check_report(r, 4);
  REQUIRE(r.buckets[0].n_examples == 1);
  REQUIRE(r.buckets[1].n_examples == 2);
  REQUIRE(r.buckets[2].n_examples == 1);
}

TEST_CASE("greedy scoring follows the associated track to the end") {
  const Vec3 v(2.0, 0.0, 0.0);
  std::vector<Track> tracks = {line_track(0, 0, 61, Vec3(0, 0, 1), v)};

  WildManifest m;
  m.examples.push_back(point_example(
      0, 10, 50, tracks[0].states[10].position,
      tracks[0].states[50].position + Vec3(0.0, 0.07, 0.0)));
  EvalReport r = evaluate(m, tracks);
  check_report(r, 1);
  REQUIRE(r.example_distance[0] == doctest::Approx(0.07).epsilon(1e-12));
  REQUIRE(r.buckets[0].ac == std::vector<double>{1.0, 1.0, 1.0, 1.0});

  // The associated track dies before the end frame: a miss, not a rescue
  // by some other live track.
  tracks.push_back(line_track(1, 0, 80, Vec3(0, 5, 1), Vec3::Zero()));
  tracks[0].states.resize(31);
  r = evaluate(m, tracks);
  check_report(r, 1);
  REQUIRE(r.n_miss == 1);
  REQUIRE(r.example_distance[0] == -1.0);
}

TEST_CASE("gap frames score through the blend on both routes") {
  const Vec3 p0(0.0, 0.0, 1.0);
  const Vec3 v(2.0, 0.4, 0.0);
  std::vector<Tracklet> tracklets = {line_tracklet(0, 0, 11, p0, v),
                                     line_tracklet(1, 15, 16, p0, v)};
  const RetrackConfig rc;
  const auto tracks = link_tracklets(tracklets, rc);
  const auto trees = build_hypothesis_tree(tracklets, rc);
  REQUIRE(tracks.size() == 1);
  REQUIRE(tracks[0].tracklet_ids == std::vector<std::int64_t>{0, 1});

  // End frame falls inside the bridged gap; the reference point is the
  // underlying line, which the collinear blend reproduces.
  WildManifest m;
  m.examples.push_back(
      point_example(0, 0, 12, p0, p0 + 12 * (v * kDt)));
  const EvalReport greedy = evaluate(m, tracks);
  const EvalReport oracle = oracle_evaluate(m, tracklets, trees);
  check_report(greedy, 1);
  check_report(oracle, 1);
  REQUIRE(greedy.example_distance[0] <= 1e-12);
  REQUIRE(oracle.example_distance[0] == greedy.example_distance[0]);
  check_dominance(oracle, greedy);
}

TEST_CASE("oracle explores branches the greedy join discarded") {
  // A ends at frame 10. Two continuations start at frame 13: a straight
  // decoy (id 2, perfect velocity agreement) and the bent true path (id 1).
  // Greedy commits to the decoy; only the tree keeps the true branch.
  const Vec3 va(2.0, 0.0, 0.0);
  const Vec3 vb(2.0, 0.8, 0.0);
  std::vector<Tracklet> tracklets = {
      line_tracklet(0, 0, 11, Vec3(0.0, 0.0, 1.0), va),
      line_tracklet(1, 13, 28, Vec3(0.0, -0.22, 1.0), vb),
      line_tracklet(2, 13, 28, Vec3(0.0, 0.0, 1.0), va)};

  const RetrackConfig rc;
  const auto tracks = link_tracklets(tracklets, rc);
  const auto trees = build_hypothesis_tree(tracklets, rc);
  REQUIRE(tracks.size() == 2);
  REQUIRE(tracks[0].tracklet_ids == std::vector<std::int64_t>{0, 2});
  REQUIRE(tracks[1].tracklet_ids == std::vector<std::int64_t>{1});
  REQUIRE(trees.size() == 1);
  REQUIRE(trees[0].root == 0);
  REQUIRE(trees[0].children.at(0) == std::vector<std::int64_t>{1, 2});

  WildManifest m;
  m.examples.push_back(point_example(0, 0, 40, Vec3(0.0, 0.0, 1.0),
                                     tracklets[1].states.back().position));
  const EvalReport greedy = evaluate(m, tracks);
  const EvalReport oracle = oracle_evaluate(m, tracklets, trees);
  check_report(greedy, 1);
  check_report(oracle, 1);
  REQUIRE(greedy.example_distance[0] == doctest::Approx(0.58).epsilon(1e-12));
  REQUIRE(greedy.buckets[0].ac == std::vector<double>{0.0, 0.0, 0.0, 1.0});
  REQUIRE(oracle.example_distance[0] == 0.0);
  REQUIRE(oracle.buckets[0].ac == std::vector<double>{1.0, 1.0, 1.0, 1.0});
  check_dominance(oracle, greedy);
}

TEST_CASE("head scoring references the head annotations") {
  // The stationary real bird sits at the head annotation; a moving decoy
  // sits nearest to the head/tail midpoint at the start.
  const Vec3 head(0.0, 0.0, 1.0);
  const Vec3 tail(0.16, 0.0, 1.0);
  std::vector<Track> tracks;
  tracks.push_back(line_track(0, 0, 41, head, Vec3::Zero()));
  tracks.push_back(line_track(1, 0, 41, Vec3(0.09, 0.0, 1.0),
                              Vec3(1.2, 0.0, 0.0)));

  WildExample ex;
  ex.index = 0;
  ex.frame_start = 0;
  ex.frame_end = 40;
  ex.start_head = ex.end_head = head;
  ex.start_tail = ex.end_tail = tail;
  ex.bucket = bucket_for_frames(ex.n_frames());
  WildManifest m;
  m.examples.push_back(ex);

  EvalConfig cfg;
  const EvalReport mid = evaluate(m, tracks, cfg);
  cfg.head_scoring = true;
  const EvalReport by_head = evaluate(m, tracks, cfg);
  // Midpoint association picks the decoy, which flies over a metre away.
  REQUIRE(mid.buckets[0].ac == std::vector<double>{0.0, 0.0, 0.0, 0.0});
  // Head association picks the real bird, which never moves.
  REQUIRE(by_head.example_distance[0] == 0.0);
  REQUIRE(by_head.buckets[0].ac == std::vector<double>{1.0, 1.0, 1.0, 1.0});
}

TEST_CASE("oracle input validation") {
  WildManifest m;
  m.examples.push_back(point_example(0, 0, 40, Vec3(0, 0, 1), Vec3(1, 0, 1)));

  std::vector<Tracklet> dup = {
      line_tracklet(3, 0, 20, Vec3(0, 0, 1), Vec3::Zero()),
      line_tracklet(3, 30, 20, Vec3(0, 0, 1), Vec3::Zero())};
  REQUIRE_THROWS_AS(
      oracle_evaluate(m, dup, std::vector<HypothesisTree>{}), DataError);

  std::vector<Tracklet> hollow(1);
  hollow[0].id = 0;
  REQUIRE_THROWS_AS(
      oracle_evaluate(m, hollow, std::vector<HypothesisTree>{}), DataError);

  std::vector<Tracklet> ok = {
      line_tracklet(0, 0, 20, Vec3(0, 0, 1), Vec3::Zero())};
  HypothesisTree tree;
  tree.root = 0;
  tree.children[0] = {99};
  REQUIRE_THROWS_AS(
      oracle_evaluate(m, ok, std::vector<HypothesisTree>{tree}), DataError);
}

TEST_CASE("survival projection follows the documented arithmetic") {
  REQUIRE(survival_projection(0.44, 200.0) ==
          doctest::Approx(0.1936).epsilon(1e-12));
  const double s300 = survival_projection(0.44, 300.0);
  REQUIRE(s300 == doctest::Approx(0.085184).epsilon(1e-12));
  REQUIRE(std::abs(s300 - 0.0852) < 5e-5);
  REQUIRE(survival_projection(1.0, 12345.6) == 1.0);
  REQUIRE(survival_projection(0.5, 100.0) == doctest::Approx(0.5));
  REQUIRE(survival_projection(0.0, 0.0) == 1.0);

  REQUIRE_THROWS_AS(survival_projection(1.2, 100.0), DataError);
  REQUIRE_THROWS_AS(survival_projection(-0.1, 100.0), DataError);
  REQUIRE_THROWS_AS(
      survival_projection(std::numeric_limits<double>::quiet_NaN(), 100.0),
      DataError);
  REQUIRE_THROWS_AS(survival_projection(0.5, -1.0), DataError);
}

TEST_CASE("noiseless scenes evaluate perfectly end to end") {
  struct Expect {
    std::uint64_t seed;
    int n_examples;
    int n_short;
    int n_medium;
    double dist_bound;
  };
  const Expect cases[] = {{7, 3, 2, 1, 0.05}, {12, 2, 1, 1, 0.02}};

  for (const Expect& c : cases) {
    SceneConfig sc = SceneConfig::defaults();
    sc.n_birds = 4;
    sc.duration_s = 15.0;
    sc.min_separation_m = 0.8;
    sc.rng_seed = c.seed;
    const GroundTruthScene scene = generate_scene(sc);
    const auto rig = default_rig();
    const auto frames = render_detections(scene, rig, NoiseModel{});
    ReconstructionConfig rc;
    rc.mask_cap_px = 20;
    rc.min_pts = 10;
    const auto clusters = reconstruct_sequence(frames, rig, rc);
    const auto tracklets = track_sequence(clusters, 0, TrackerConfig{});
    const RetrackConfig xc;
    const auto tracks = link_tracklets(tracklets, xc);
    const auto trees = build_hypothesis_tree(tracklets, xc);
    const WildManifest manifest = export_wild(scene);

    const EvalReport greedy = evaluate(manifest, tracks);
    const EvalReport oracle = oracle_evaluate(manifest, tracklets, trees);
    check_report(greedy, c.n_examples);
    check_report(oracle, c.n_examples);
    check_dominance(oracle, greedy);

    REQUIRE(greedy.buckets[0].n_examples == c.n_short);
    REQUIRE(greedy.buckets[1].n_examples == c.n_medium);
    REQUIRE(greedy.n_miss == 0);
    REQUIRE(oracle.n_miss == 0);
    for (const EvalReport* r : {&greedy, &oracle}) {
      for (const BucketScore& b : r->buckets)
        if (b.n_examples > 0)
          for (double a : b.ac) REQUIRE(a == 1.0);
      for (double d : r->example_distance) {
        REQUIRE(d >= 0.0);
        REQUIRE(d <= c.dist_bound);
      }
    }
  }
}

TEST_CASE("track id relabeling leaves reports unchanged") {
  SceneConfig sc = SceneConfig::defaults();
  sc.n_birds = 4;
  sc.duration_s = 15.0;
  sc.min_separation_m = 0.8;
  sc.rng_seed = 7;
  const GroundTruthScene scene = generate_scene(sc);
  const auto rig = default_rig();
  const auto frames = render_detections(scene, rig, NoiseModel{});
  ReconstructionConfig rc;
  rc.mask_cap_px = 20;
  rc.min_pts = 10;
  const auto clusters = reconstruct_sequence(frames, rig, rc);
  const auto tracklets = track_sequence(clusters, 0, TrackerConfig{});
  const RetrackConfig xc;
  const auto tracks = link_tracklets(tracklets, xc);
  const auto trees = build_hypothesis_tree(tracklets, xc);
  const WildManifest manifest = export_wild(scene);

  const EvalReport base = evaluate(manifest, tracks);
  std::vector<Track> shuffled(tracks.rbegin(), tracks.rend());
  for (std::size_t i = 0; i < shuffled.size(); ++i)
    shuffled[i].id = 100 + static_cast<std::int64_t>(i);
  const EvalReport relabeled = evaluate(manifest, shuffled);
  REQUIRE(relabeled.example_distance == base.example_distance);
  for (int b = 0; b < 3; ++b) {
    REQUIRE(relabeled.buckets[b].hits == base.buckets[b].hits);
    REQUIRE(relabeled.buckets[b].ac == base.buckets[b].ac);
  }

  const EvalReport obase = oracle_evaluate(manifest, tracklets, trees);
  const std::vector<Tracklet> reversed(tracklets.rbegin(), tracklets.rend());
  const EvalReport oflip = oracle_evaluate(manifest, reversed, trees);
  REQUIRE(oflip.example_distance == obase.example_distance);
  for (int b = 0; b < 3; ++b)
    REQUIRE(oflip.buckets[b].ac == obase.buckets[b].ac);
}
