#include "aviary/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace aviary {

namespace {

constexpr double kRestHeight = 0.05;   // body center above perch/floor
constexpr double kJitterClamp = 0.03;  // hard cap on micro-motion excursion
constexpr int kJitterTaper = 8;        // frames to fade jitter at junctions
constexpr int kShadowBlock = 48;       // frames per shadow on/off block
constexpr int kMinLegFrames = 4;
constexpr int kMinFlightFrames = 8;

double sample_quantile(const std::vector<std::pair<double, double>>& knots,
                       double u) {
  if (knots.size() < 2) throw ConfigError("quantile needs >= 2 knots");
  u = std::clamp(u, 0.0, 1.0);
  for (std::size_t i = 1; i < knots.size(); ++i) {
    if (u <= knots[i].first || i + 1 == knots.size()) {
      const auto& [u0, v0] = knots[i - 1];
      const auto& [u1, v1] = knots[i];
      if (u1 <= u0 || v0 <= 0.0 || v1 <= 0.0)
        throw ConfigError("quantile knots must increase in u with values > 0");
      const double t = std::clamp((u - u0) / (u1 - u0), 0.0, 1.0);
      return std::exp(std::log(v0) + t * (std::log(v1) - std::log(v0)));
    }
  }
  return knots.back().second;
}

}  // namespace

MotionStats MotionStats::defaults() {
  MotionStats s;
  // Dwell and flight duration quantiles (u, seconds). Medians: 17.6 s
  // stationary, 1.575 s (63 frames at 40 Hz) in flight, with heavy upper
  // tails so a few sequences run into the hundreds of frames.
  s.stationary_quantile = {
      {0.0, 0.9}, {0.1, 3.7}, {0.5, 17.6}, {0.9, 165.0}, {1.0, 600.0}};
  s.flight_quantile = {{0.0, 0.45},  {0.1, 0.875}, {0.5, 1.575}, {0.778, 2.5},
                       {0.9, 4.5},   {0.974, 7.5}, {1.0, 12.0}};
  return s;
}

double MotionStats::sample_stationary_s(std::mt19937_64& rng) const {
  return sample_quantile(stationary_quantile,
                         std::uniform_real_distribution<double>(0.0, 1.0)(rng));
}

double MotionStats::sample_flight_s(std::mt19937_64& rng) const {
  return sample_quantile(flight_quantile,
                         std::uniform_real_distribution<double>(0.0, 1.0)(rng));
}

SceneConfig SceneConfig::defaults() {
  SceneConfig cfg;
  cfg.motion_stats = MotionStats::defaults();
  // 12 central perches crossing the width, 40 cm below the ceiling; 8 side
  // perches along the long walls, 50 cm below.
  for (int i = 0; i < 12; ++i) {
    const double x = 0.5 + i * (5.0 / 11.0);
    cfg.perch_graph.push_back({{x, 0.6, 2.0}, {x, 1.8, 2.0}});
  }
  for (const double y : {0.18, 2.22}) {
    for (int i = 0; i < 4; ++i) {
      const double x = 1.0 + i * (4.0 / 3.0);
      cfg.perch_graph.push_back({{x - 0.4, y, 1.9}, {x + 0.4, y, 1.9}});
    }
  }
  return cfg;
}

void SceneConfig::validate() const {
  if (n_birds < 1) throw ConfigError("n_birds must be >= 1");
  if (!(fps > 0.0)) throw ConfigError("fps must be positive");
  if (duration_s < 0.0) throw ConfigError("duration must be >= 0");
  if (!(volume.minCoeff() > 0.0)) throw ConfigError("volume must be positive");
  for (const PerchSegment& seg : perch_graph)
    for (const Vec3& p : {seg.a, seg.b})
      if (p.x() < 0.0 || p.x() > volume.x() || p.y() < 0.0 ||
          p.y() > volume.y() || p.z() <= 0.0 || p.z() >= volume.z())
        throw ConfigError("perch endpoint outside the aviary volume");
  if (min_separation_m < 0.0) throw ConfigError("min_separation must be >= 0");
  if (floor_prob < 0.0 || floor_prob > 1.0)
    throw ConfigError("floor_prob must be in [0,1]");
  if (jitter_sigma_m < 0.0) throw ConfigError("jitter sigma must be >= 0");
  // Planning bounds are continuous-time peaks; frame sampling and curved
  // detours move the realized peak by up to ~9%, so the config window is
  // kept inside the hard [2, 10] m/s envelope.
  if (!(motion_stats.speed_min >= 2.2 && motion_stats.speed_max <= 9.6 &&
        motion_stats.speed_min < motion_stats.speed_max))
    throw ConfigError("peak speed bounds must satisfy 2.2 <= min < max <= 9.6");
}

void NoiseModel::validate() const {
  if (miss_rate < 0.0 || miss_rate > 1.0)
    throw ConfigError("miss_rate must be in [0,1]");
  if (false_positive_rate < 0.0 || false_positive_rate > 1.0)
    throw ConfigError("false_positive_rate must be in [0,1]");
  if (centroid_jitter_px < 0.0)
    throw ConfigError("centroid_jitter must be >= 0");
}

std::vector<BirdMeta> default_roster() {
  // Six males then nine females, leg band colors as labels.
  return {
      {0, "Pink+Yellow", "PY_M", 'M'},  {1, "Blue+Green", "BG_M", 'M'},
      {2, "Red+Green", "RG_M", 'M'},    {3, "Teal+Red", "TR_M", 'M'},
      {4, "Blue+Red", "BR_M", 'M'},     {5, "Green+Teal", "GT_M", 'M'},
      {6, "Blue+Pink", "BP_F", 'F'},    {7, "Yellow+Teal", "YT_F", 'F'},
      {8, "Pink+Green", "PG_F", 'F'},   {9, "Yellow+Blue", "YB_F", 'F'},
      {10, "Red+Yellow", "RY_F", 'F'},  {11, "Pink+Red", "PR_F", 'F'},
      {12, "Teal+Pink", "TP_F", 'F'},   {13, "Blue+Teal", "BT_F", 'F'},
      {14, "Green+Pink", "GP_F", 'F'},
  };
}

namespace {

// ---- scene generation -------------------------------------------------

struct RestSampler {
  const SceneConfig& cfg;
  std::vector<double> cum_len;  // cumulative perch lengths
  double total_len = 0.0;

  explicit RestSampler(const SceneConfig& c) : cfg(c) {
    cum_len.reserve(c.perch_graph.size());
    for (const PerchSegment& s : c.perch_graph) {
      total_len += (s.b - s.a).norm();
      cum_len.push_back(total_len);
    }
  }

  Vec3 sample(std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (unit(rng) < cfg.floor_prob || cfg.perch_graph.empty()) {
      const double mx = 0.3, my = 0.3;
      return {mx + unit(rng) * (cfg.volume.x() - 2 * mx),
              my + unit(rng) * (cfg.volume.y() - 2 * my), kRestHeight};
    }
    const double pick = unit(rng) * total_len;
    const std::size_t i =
        std::lower_bound(cum_len.begin(), cum_len.end(), pick) -
        cum_len.begin();
    const PerchSegment& s = cfg.perch_graph[std::min(i, cum_len.size() - 1)];
    const double t = 0.08 + 0.84 * unit(rng);
    return s.a + t * (s.b - s.a) + Vec3(0.0, 0.0, kRestHeight);
  }
};

// One flight leg; when curved, the path arcs through `waypoint` with a
// shared tangent so the whole flight stays C1.
struct Leg {
  Vec3 p0, p1;
  int frames = 0;
  bool curved = false;
  Vec3 waypoint = Vec3::Zero();
};

Vec3 eval_leg(const Leg& leg, double s) {
  if (!leg.curved) {
    const double w = s * s * (3.0 - 2.0 * s);
    return leg.p0 + w * (leg.p1 - leg.p0);
  }
  // Two Hermite halves: rest -> waypoint -> rest, tangent at the waypoint
  // along the chord (in d position / d s over the full leg).
  const Vec3 m = 1.35 * (leg.p1 - leg.p0);
  if (s <= 0.5) {
    const double t = 2.0 * s;
    const double h00 = 2 * t * t * t - 3 * t * t + 1;
    const double h01 = -2 * t * t * t + 3 * t * t;
    const double h11 = t * t * t - t * t;
    return h00 * leg.p0 + h01 * leg.waypoint + h11 * (0.5 * m);
  }
  const double t = 2.0 * s - 1.0;
  const double h00 = 2 * t * t * t - 3 * t * t + 1;
  const double h10 = t * t * t - 2 * t * t + t;
  const double h01 = -2 * t * t * t + 3 * t * t;
  return h00 * leg.waypoint + h10 * (0.5 * m) + h01 * leg.p1;
}

struct FlightPlan {
  std::vector<Leg> legs;
  std::vector<int> pause_frames;  // between legs, size legs.size()-1
  Vec3 dest = Vec3::Zero();

  // Positions over the closed interval [0, total_frames].
  std::vector<Vec3> positions() const {
    std::vector<Vec3> out;
    int total = 0;
    for (const Leg& l : legs) total += l.frames;
    for (int p : pause_frames) total += p;
    out.reserve(total + 1);
    out.push_back(legs.front().p0);
    for (std::size_t i = 0; i < legs.size(); ++i) {
      const Leg& l = legs[i];
      for (int f = 1; f <= l.frames; ++f)
        out.push_back(eval_leg(l, static_cast<double>(f) / l.frames));
      if (i + 1 < legs.size())
        for (int f = 0; f < pause_frames[i]; ++f) out.push_back(l.p1);
    }
    return out;
  }
};

class SceneBuilder {
 public:
  SceneBuilder(const SceneConfig& cfg, int n_frames)
      : cfg_(cfg), n_frames_(n_frames), rest_(cfg) {}

  GroundTruthScene build() {
    GroundTruthScene scene;
    scene.config = cfg_;
    scene.n_frames = n_frames_;
    const auto roster = default_roster();
    for (int b = 0; b < cfg_.n_birds; ++b) {
      BirdMeta meta;
      if (b < static_cast<int>(roster.size())) {
        meta = roster[b];
      } else {
        meta.id = b;
        meta.label = "Bird" + std::to_string(b);
        meta.code = "B" + std::to_string(b) + "_F";
        meta.sex = 'F';
      }
      meta.id = b;
      scene.birds.push_back(build_bird(meta, scene));
    }
    return scene;
  }

 private:
  const SceneConfig& cfg_;
  int n_frames_;
  RestSampler rest_;

  double dt() const { return 1.0 / cfg_.fps; }

  bool separated_from_others(const GroundTruthScene& scene, const Vec3& p,
                             int f0, int f1) const {
    const double d2 = cfg_.min_separation_m * cfg_.min_separation_m;
    f1 = std::min(f1, n_frames_ - 1);
    for (const BirdTruth& other : scene.birds)
      for (int f = f0; f <= f1; ++f)
        if ((other.center[f] - p).squaredNorm() < d2) return false;
    return true;
  }

  bool path_separated(const GroundTruthScene& scene,
                      const std::vector<Vec3>& path, int f0) const {
    const double d2 = cfg_.min_separation_m * cfg_.min_separation_m;
    for (const BirdTruth& other : scene.birds)
      for (std::size_t k = 0; k < path.size(); ++k) {
        const int f = f0 + static_cast<int>(k);
        if (f >= n_frames_) break;
        if ((other.center[f] - path[k]).squaredNorm() < d2) return false;
      }
    return true;
  }

  int sample_dwell_frames(std::mt19937_64& rng) const {
    const double s = cfg_.motion_stats.sample_stationary_s(rng);
    return std::max(1, static_cast<int>(std::lround(s * cfg_.fps)));
  }

  int sample_flight_frames(std::mt19937_64& rng) const {
    const double s = cfg_.motion_stats.sample_flight_s(rng);
    return std::max(kMinFlightFrames,
                    static_cast<int>(std::lround(s * cfg_.fps)));
  }

  // A route for exactly m frames whose path and landing dwell stay clear of
  // the birds generated so far; empty plan when none is found.
  FlightPlan try_flight(const GroundTruthScene& scene, const Vec3& from,
                        int takeoff, int m, int next_dwell, int attempts,
                        std::mt19937_64& rng) const {
    for (int attempt = 0; attempt < attempts; ++attempt) {
      FlightPlan candidate = plan_route(from, m, rng);
      if (candidate.legs.empty()) continue;
      if (!path_separated(scene, candidate.positions(), takeoff)) continue;
      if (!separated_from_others(scene, candidate.dest, takeoff + m,
                                 takeoff + m + next_dwell))
        continue;
      return candidate;
    }
    return {};
  }

  // A leg may arc only when long enough to look like a real detour and when
  // its nominal peak leaves headroom: the detour shifts the realized peak by
  // up to +8.4% / -10%, which must stay inside the [2, 10] m/s envelope.
  bool may_curve(double length, int frames, std::mt19937_64& rng) const {
    if (length <= 1.2) return false;
    const double nominal = 1.5 * length / (frames * dt());
    if (nominal < 2.3 || nominal > 9.0) return false;
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng) <
           cfg_.motion_stats.curve_prob;
  }

  void make_curved(Leg& leg, std::mt19937_64& rng) const {
    leg.curved = true;
    leg.waypoint = curve_waypoint(leg.p0, leg.p1, rng);
  }

  // Lateral-and-up arc waypoint for a curved leg.
  Vec3 curve_waypoint(const Vec3& a, const Vec3& b, std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const Vec3 chord = b - a;
    Vec3 side = chord.cross(Vec3(0, 0, 1));
    if (side.norm() < 1e-9) side = Vec3(1, 0, 0);
    side.normalize();
    const double amp = (0.04 + 0.06 * unit(rng)) * chord.norm();
    const double lateral = (unit(rng) < 0.5 ? -1.0 : 1.0) * unit(rng);
    Vec3 w = 0.5 * (a + b) + amp * (lateral * side + Vec3(0, 0, 1.0));
    const double margin = 0.12;
    for (int i = 0; i < 3; ++i)
      w[i] = std::clamp(w[i], margin, cfg_.volume[i] - margin);
    return w;
  }

  // Builds legs + pauses spanning exactly m frames from `a`, or empty on
  // failure. Peak speed per leg is 1.5 * length / duration, kept within the
  // configured bounds.
  FlightPlan plan_route(const Vec3& a, int m, std::mt19937_64& rng) const {
    const MotionStats& ms = cfg_.motion_stats;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double lo_len = m * dt() * ms.speed_min / 1.5;
    const double hi_len = m * dt() * ms.speed_max / 1.5;

    for (int attempt = 0; attempt < 24; ++attempt) {
      const Vec3 dest = rest_.sample(rng);
      const double direct = (dest - a).norm();
      if (direct < 0.35) continue;

      // Single smooth leg whenever the distance supports it.
      if (direct >= lo_len && direct <= hi_len) {
        Leg leg{a, dest, m};
        if (leg.frames >= kMinLegFrames) {
          FlightPlan plan;
          if (may_curve(direct, m, rng))
            make_curved(leg, rng);
          plan.legs = {leg};
          plan.dest = dest;
          return plan;
        }
      }

      // Otherwise route through intermediate rest points with touch-down
      // pauses soaking up the leftover frames.
      for (int k = 2; k <= 5; ++k) {
        std::vector<Vec3> pts{a};
        bool ok = true;
        for (int i = 1; i < k; ++i) {
          Vec3 mid;
          int tries = 0;
          do {
            mid = rest_.sample(rng);
          } while ((mid - pts.back()).norm() < 0.6 && ++tries < 20);
          if ((mid - pts.back()).norm() < 0.6) {
            ok = false;
            break;
          }
          pts.push_back(mid);
        }
        if (!ok || (dest - pts.back()).norm() < 0.6) continue;
        pts.push_back(dest);

        double total_len = 0.0;
        for (std::size_t i = 1; i < pts.size(); ++i)
          total_len += (pts[i] - pts[i - 1]).norm();

        const int pause_lo =
            std::max(1, static_cast<int>(ms.pause_min_s * cfg_.fps));
        const int pause_hi =
            std::max(pause_lo, static_cast<int>(ms.pause_max_s * cfg_.fps));
        const int f_lo = static_cast<int>(
            std::ceil(1.5 * total_len / (ms.speed_max * dt())));
        const int f_hi = static_cast<int>(
            std::floor(1.5 * total_len / (ms.speed_min * dt())));
        const int fly_lo = std::max({f_lo, kMinLegFrames * k, m - pause_hi * (k - 1)});
        const int fly_hi = std::min(f_hi, m - pause_lo * (k - 1));
        if (fly_lo > fly_hi) continue;
        const int fly =
            fly_lo + static_cast<int>(unit(rng) * (fly_hi - fly_lo + 1));

        // Leg frames proportional to length.
        FlightPlan plan;
        plan.dest = dest;
        std::vector<int> leg_frames(k, 0);
        int used = 0;
        for (int i = 0; i < k; ++i) {
          const double len = (pts[i + 1] - pts[i]).norm();
          leg_frames[i] = std::max(
              kMinLegFrames, static_cast<int>(std::lround(fly * len / total_len)));
          used += leg_frames[i];
        }
        leg_frames[k - 1] += fly - used;
        if (leg_frames[k - 1] < kMinLegFrames) continue;

        // Pauses: spread the remaining frames evenly-ish.
        int pause_total = m - fly;
        std::vector<int> pauses(k - 1, pause_lo);
        pause_total -= pause_lo * (k - 1);
        if (pause_total < 0) continue;
        for (int i = 0; pause_total > 0; i = (i + 1) % (k - 1)) {
          const int add = std::min(pause_total, pause_hi - pauses[i]);
          if (add <= 0) {
            bool saturated = true;
            for (int j = 0; j < k - 1; ++j) saturated &= pauses[j] >= pause_hi;
            if (saturated) break;
            continue;
          }
          pauses[i] += add;
          pause_total -= add;
        }
        if (pause_total != 0) continue;

        bool speeds_ok = true;
        for (int i = 0; i < k; ++i) {
          const double len = (pts[i + 1] - pts[i]).norm();
          const double peak = 1.5 * len / (leg_frames[i] * dt());
          if (peak < 2.2 || peak > 9.6) speeds_ok = false;
        }
        if (!speeds_ok) continue;

        for (int i = 0; i < k; ++i) {
          Leg leg{pts[i], pts[i + 1], leg_frames[i]};
          const double len = (pts[i + 1] - pts[i]).norm();
          if (may_curve(len, leg_frames[i], rng))
            make_curved(leg, rng);
          plan.legs.push_back(leg);
        }
        plan.pause_frames = pauses;
        return plan;
      }
    }
    return {};
  }

  BirdTruth build_bird(const BirdMeta& meta, const GroundTruthScene& scene) {
    BirdTruth bird;
    bird.meta = meta;
    bird.center.assign(std::max(n_frames_, 0), Vec3::Zero());
    auto rng = make_rng(derive_seed(cfg_.rng_seed, "bird", meta.id));

    // Initial dwell.
    int dwell = sample_dwell_frames(rng);
    Vec3 anchor = pick_rest_spot(scene, 0, dwell, rng);

    if (n_frames_ <= 0) {
      bird.sequences.push_back(
          {SequenceKind::Stationary, 0, 0, anchor, anchor});
      apply_headings(bird, rng);
      return bird;
    }

    int f = 0;
    while (true) {
      int dwell_end = f + dwell;
      if (dwell_end >= n_frames_ - 1 - kMinFlightFrames) {
        dwell_end = n_frames_ - 1;
        fill_constant(bird, f, dwell_end, anchor);
        bird.sequences.push_back(
            {SequenceKind::Stationary, f, dwell_end, anchor, anchor});
        break;
      }
      fill_constant(bird, f, dwell_end, anchor);
      bird.sequences.push_back(
          {SequenceKind::Stationary, f, dwell_end, anchor, anchor});
      SequenceRecord& dwell_rec = bird.sequences.back();

      // Plan the flight plus the following dwell; extend the current dwell
      // when no conflict-free route exists yet.
      bool committed = false;
      while (!committed) {
        const int takeoff = dwell_rec.frame_end;
        const int remaining = n_frames_ - 1 - takeoff;
        if (remaining < kMinFlightFrames) break;

        const int m = std::min(sample_flight_frames(rng), remaining);
        const int next_dwell = sample_dwell_frames(rng);
        FlightPlan plan = try_flight(scene, anchor, takeoff, m, next_dwell, 8, rng);
        int flight_frames = m;

        if (plan.legs.empty()) {
          // Extend the dwell and retry, provided the spot stays clear.
          const int ext = std::min(60, n_frames_ - 1 - dwell_rec.frame_end);
          if (ext > 0 &&
              separated_from_others(scene, anchor, dwell_rec.frame_end + 1,
                                    dwell_rec.frame_end + ext)) {
            fill_constant(bird, dwell_rec.frame_end, dwell_rec.frame_end + ext,
                          anchor);
            dwell_rec.frame_end += ext;
            continue;
          }
          // The spot is about to be crowded: sweep flight lengths until some
          // escape route works.
          for (int m_try :
               {63, 48, 80, 100, 32, 120, 160, 24, 200, 16, 240, 12}) {
            if (m_try > remaining) continue;
            plan = try_flight(scene, anchor, takeoff, m_try, next_dwell, 12, rng);
            if (!plan.legs.empty()) {
              flight_frames = m_try;
              break;
            }
          }
          if (plan.legs.empty()) break;  // park; nowhere left to go
        }

        const auto path = plan.positions();
        for (std::size_t k = 0; k < path.size(); ++k)
          bird.center[takeoff + k] = path[k];
        bird.sequences.push_back({SequenceKind::Motion, takeoff,
                                  takeoff + flight_frames, anchor, plan.dest});
        anchor = plan.dest;
        f = takeoff + flight_frames;
        dwell = next_dwell;
        committed = true;
      }
      if (!committed) {
        // No further flight fits; park until the end of the scene.
        const int end = n_frames_ - 1;
        if (bird.sequences.back().frame_end < end) {
          fill_constant(bird, bird.sequences.back().frame_end, end, anchor);
          bird.sequences.back().frame_end = end;
        }
        break;
      }
    }

    apply_jitter(bird, rng);
    apply_headings(bird, rng);
    return bird;
  }

  Vec3 pick_rest_spot(const GroundTruthScene& scene, int f0, int f1,
                      std::mt19937_64& rng) {
    Vec3 best = Vec3::Zero();
    double best_clearance = -1.0;
    for (int attempt = 0; attempt < 200; ++attempt) {
      const Vec3 cand = rest_.sample(rng);
      if (n_frames_ <= 0 || scene.birds.empty())
        return cand;
      if (separated_from_others(scene, cand, f0, f1)) return cand;
      double clearance = 1e30;
      const int last = std::min(f1, n_frames_ - 1);
      for (const BirdTruth& other : scene.birds)
        for (int f = f0; f <= last; ++f)
          clearance =
              std::min(clearance, (other.center[f] - cand).squaredNorm());
      if (clearance > best_clearance) {
        best_clearance = clearance;
        best = cand;
      }
    }
    return best;  // crowded fallback: the most isolated candidate seen
  }

  void fill_constant(BirdTruth& bird, int f0, int f1, const Vec3& p) {
    for (int f = f0; f <= std::min(f1, n_frames_ - 1); ++f)
      bird.center[f] = p;
  }

  void apply_jitter(BirdTruth& bird, std::mt19937_64& rng) {
    if (cfg_.jitter_sigma_m <= 0.0 || n_frames_ <= 0) return;
    // OU-style wander: per-frame step sigma 0.4 cm, decay 0.9 -> stationary
    // std ~1 cm, per-frame speed well under flight segmentation thresholds.
    const double step_sigma = 0.4 * cfg_.jitter_sigma_m;
    std::normal_distribution<double> gauss(0.0, step_sigma);
    for (const SequenceRecord& rec : bird.sequences) {
      if (rec.kind != SequenceKind::Stationary) continue;
      Vec3 j = Vec3::Zero();
      for (int f = rec.frame_start + 1; f < rec.frame_end; ++f) {
        j = 0.9 * j + Vec3(gauss(rng), gauss(rng), gauss(rng));
        if (j.norm() > kJitterClamp) j *= kJitterClamp / j.norm();
        const double taper =
            std::min({1.0, (f - rec.frame_start) / double(kJitterTaper),
                      (rec.frame_end - f) / double(kJitterTaper)});
        bird.center[f] += taper * j;
      }
    }
  }

  void apply_headings(BirdTruth& bird, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
    const double a0 = angle(rng);
    Vec3 h(std::cos(a0), std::sin(a0), 0.0);
    bird.heading.assign(std::max(n_frames_, 0), h);
    for (int f = 0; f < n_frames_; ++f) {
      Vec3 v = Vec3::Zero();
      if (f + 1 < n_frames_)
        v = (bird.center[f + 1] - bird.center[f]) * cfg_.fps;
      else if (f > 0)
        v = (bird.center[f] - bird.center[f - 1]) * cfg_.fps;
      if (v.norm() > 0.8) {
        h = v.normalized();
      } else {
        Vec3 flat(h.x(), h.y(), 0.0);
        if (flat.norm() > 1e-9) h = flat.normalized();
      }
      bird.heading[f] = h;
    }
  }
};

}  // namespace

GroundTruthScene generate_scene(const SceneConfig& cfg) {
  cfg.validate();
  if (cfg.perch_graph.empty())
    throw ConfigError("perch_graph must not be empty");
  const int n_frames = static_cast<int>(std::lround(cfg.duration_s * cfg.fps));
  SceneBuilder builder(cfg, n_frames);
  return builder.build();
}

// ---- rendering ---------------------------------------------------------

bool rasterize_ellipsoid(const CameraModel& cam, const Vec3& center,
                         const Vec3& axis_dir, double half_len,
                         double half_width, double half_height, Mask& out) {
  out.runs.clear();
  out.area = 0;
  if (cam.to_camera(center).z() <= 0.15) return false;

  Vec3 e1 = axis_dir;
  if (e1.norm() < 1e-9) e1 = Vec3(1, 0, 0);
  e1.normalize();
  Vec3 e2 = e1.cross(Vec3(0, 0, 1));
  if (e2.norm() < 1e-6) e2 = e1.cross(Vec3(1, 0, 0));
  e2.normalize();
  const Vec3 e3 = e1.cross(e2);

  Mat3 rot;
  rot.col(0) = e1;
  rot.col(1) = e2;
  rot.col(2) = e3;
  const Mat3 m = rot *
                 Vec3(1.0 / (half_len * half_len),
                      1.0 / (half_width * half_width),
                      1.0 / (half_height * half_height))
                     .asDiagonal() *
                 rot.transpose();

  Eigen::Matrix4d q;
  q.topLeftCorner<3, 3>() = m;
  q.topRightCorner<3, 1>() = -m * center;
  q.bottomLeftCorner<1, 3>() = (-m * center).transpose();
  q(3, 3) = center.dot(m * center) - 1.0;

  Eigen::Matrix<double, 3, 4> p;
  p.leftCols<3>() = cam.rotation;
  p.col(3) = cam.translation;
  Mat3 k = Mat3::Identity();
  k(0, 0) = cam.fx;
  k(1, 1) = cam.fy;
  k(0, 2) = cam.cx;
  k(1, 2) = cam.cy;
  p = k * p;

  const Eigen::Matrix4d q_dual = q.inverse();
  const Mat3 c_dual = p * q_dual * p.transpose();
  Mat3 conic = c_dual.inverse();
  conic /= conic.cwiseAbs().maxCoeff();

  // Interior must evaluate negative.
  const Vec3 center_px = p * center.homogeneous();
  if (center_px.z() <= 0.0) return false;
  const Vec3 cpx(center_px.x() / center_px.z(), center_px.y() / center_px.z(),
                 1.0);
  if (cpx.dot(conic * cpx) > 0.0) conic = -conic;
  const double a00 = conic(0, 0), a01 = conic(0, 1), a02 = conic(0, 2);
  const double a11 = conic(1, 1), a12 = conic(1, 2), a22 = conic(2, 2);
  if (a00 <= 0.0) return false;  // not an ellipse in this view

  // Row range where the per-row quadratic has real roots.
  const double qa = a01 * a01 - a00 * a11;
  const double qb = a01 * a02 - a00 * a12;
  const double qc = a02 * a02 - a00 * a22;
  if (qa >= 0.0) return false;
  const double disc = qb * qb - qa * qc;
  if (disc <= 0.0) return false;
  const double sq = std::sqrt(disc);
  const double v_lo = (-qb + sq) / qa;  // qa < 0 flips the interval
  const double v_hi = (-qb - sq) / qa;

  const int y0 = std::max(0, static_cast<int>(std::ceil(v_lo)));
  const int y1 = std::min(cam.image_height - 1,
                          static_cast<int>(std::floor(v_hi)));
  for (int y = y0; y <= y1; ++y) {
    const double b = a01 * y + a02;
    const double c0 = a11 * double(y) * y + 2.0 * a12 * y + a22;
    const double d = b * b - a00 * c0;
    if (d < 0.0) continue;
    const double rd = std::sqrt(d);
    const double u_lo = (-b - rd) / a00;
    const double u_hi = (-b + rd) / a00;
    const int x0 = std::max(0, static_cast<int>(std::ceil(u_lo)));
    const int x1 = std::min(cam.image_width - 1,
                            static_cast<int>(std::floor(u_hi)));
    if (x1 < x0) continue;
    out.runs.push_back({y, x0, x1 - x0 + 1});
  }
  if (out.runs.empty()) return false;
  out.recompute_stats();
  return true;
}

namespace {

struct Entity {
  Vec3 center;
  Vec3 dir;
  double a, b, c;
  int contributor;  // bird id, or -1-bird for that bird's shadow
};

// Shadows switch on and off in fixed-length blocks per bird so that ghost
// masks persist long enough to form short ghost tracks.
bool shadow_state(const SceneConfig& cfg, double fp_rate, int bird, int frame,
                  Vec2& offset) {
  const int block = frame / kShadowBlock;
  auto rng = make_rng(derive_seed(cfg.rng_seed, "shadow", bird, block));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 0.06);
  const double duty = std::min(1.0, fp_rate / std::max(1, cfg.n_birds));
  const bool active = unit(rng) < duty;
  offset = Vec2(gauss(rng), gauss(rng));
  return active;
}

struct DisjointSet {
  std::vector<int> parent;
  explicit DisjointSet(int n) : parent(n) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

RenderedFrame render_frame(const GroundTruthScene& scene,
                           std::span<const CameraModel> cameras,
                           const NoiseModel& noise, int frame) {
  noise.validate();
  if (frame < 0 || frame >= scene.n_frames)
    throw DataError("render_frame: frame out of range");

  std::vector<Entity> entities;
  entities.reserve(scene.birds.size() * 2);
  for (const BirdTruth& bird : scene.birds)
    entities.push_back({bird.center[frame], bird.heading[frame],
                        kBodyHalfLength, kBodyHalfWidth, kBodyHalfHeight,
                        bird.meta.id});
  if (noise.false_positive_rate > 0.0) {
    for (const BirdTruth& bird : scene.birds) {
      Vec2 offset;
      if (!shadow_state(scene.config, noise.false_positive_rate, bird.meta.id,
                        frame, offset))
        continue;
      const Vec3& c = bird.center[frame];
      Vec3 dir(bird.heading[frame].x(), bird.heading[frame].y(), 0.0);
      if (dir.norm() < 1e-9) dir = Vec3(1, 0, 0);
      entities.push_back({Vec3(c.x() + offset.x(), c.y() + offset.y(), 0.02),
                          dir.normalized(), 0.12, 0.06, 0.015,
                          -1 - bird.meta.id});
    }
  }

  RenderedFrame out;
  out.detections.frame = frame;
  out.detections.cameras.reserve(cameras.size());
  out.contributors.reserve(cameras.size());

  for (const CameraModel& cam : cameras) {
    auto miss_rng =
        make_rng(derive_seed(scene.config.rng_seed, "miss",
                             static_cast<std::uint64_t>(frame), cam.id));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<bool> missed(entities.size(), false);
    for (std::size_t i = 0; i < entities.size(); ++i)
      missed[i] = unit(miss_rng) < noise.miss_rate;

    auto jitter_rng =
        make_rng(derive_seed(scene.config.rng_seed, "pxjitter",
                             static_cast<std::uint64_t>(frame), cam.id));
    std::normal_distribution<double> px_gauss(0.0, 1.0);

    std::vector<Mask> masks;
    std::vector<std::vector<int>> contribs;
    for (std::size_t i = 0; i < entities.size(); ++i) {
      if (missed[i]) continue;
      const Entity& e = entities[i];
      Mask mask;
      if (!rasterize_ellipsoid(cam, e.center, e.dir, e.a, e.b, e.c, mask))
        continue;
      if (noise.centroid_jitter_px > 0.0) {
        const auto dx = static_cast<std::int32_t>(
            std::lround(px_gauss(jitter_rng) * noise.centroid_jitter_px));
        const auto dy = static_cast<std::int32_t>(
            std::lround(px_gauss(jitter_rng) * noise.centroid_jitter_px));
        std::vector<MaskRun> shifted;
        shifted.reserve(mask.runs.size());
        for (MaskRun r : mask.runs) {
          r.y += dy;
          r.x0 += dx;
          if (r.y < 0 || r.y >= cam.image_height) continue;
          const std::int32_t end =
              std::min(r.x0 + r.len, cam.image_width);
          r.x0 = std::max(r.x0, 0);
          r.len = end - r.x0;
          if (r.len > 0) shifted.push_back(r);
        }
        if (shifted.empty()) continue;
        mask.runs = std::move(shifted);
        mask.recompute_stats();
      }
      masks.push_back(std::move(mask));
      contribs.push_back({e.contributor});
    }

    if (noise.merge_occlusions && masks.size() > 1) {
      DisjointSet ds(static_cast<int>(masks.size()));
      for (std::size_t i = 0; i < masks.size(); ++i)
        for (std::size_t j = i + 1; j < masks.size(); ++j)
          if (masks[i].overlaps(masks[j]))
            ds.unite(static_cast<int>(i), static_cast<int>(j));
      std::vector<Mask> merged;
      std::vector<std::vector<int>> merged_contribs;
      std::vector<int> root_slot(masks.size(), -1);
      for (std::size_t i = 0; i < masks.size(); ++i) {
        const int root = ds.find(static_cast<int>(i));
        if (root_slot[root] < 0) {
          root_slot[root] = static_cast<int>(merged.size());
          merged.push_back(masks[i]);
          merged_contribs.push_back(contribs[i]);
        } else {
          Mask& slot = merged[root_slot[root]];
          slot = Mask::merge(slot, masks[i]);
          auto& mc = merged_contribs[root_slot[root]];
          mc.insert(mc.end(), contribs[i].begin(), contribs[i].end());
        }
      }
      for (auto& mc : merged_contribs) std::sort(mc.begin(), mc.end());
      masks = std::move(merged);
      contribs = std::move(merged_contribs);
    }

    // Canonical order: raster position of the first run.
    std::vector<std::size_t> order(masks.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const MaskRun& ra = masks[a].runs.front();
      const MaskRun& rb = masks[b].runs.front();
      if (ra.y != rb.y) return ra.y < rb.y;
      if (ra.x0 != rb.x0) return ra.x0 < rb.x0;
      return masks[a].area < masks[b].area;
    });

    DetectionSet set;
    set.frame = frame;
    set.camera_id = cam.id;
    std::vector<std::vector<int>> ordered_contribs;
    for (std::size_t idx : order) {
      set.masks.push_back(std::move(masks[idx]));
      ordered_contribs.push_back(std::move(contribs[idx]));
    }
    out.detections.cameras.push_back(std::move(set));
    out.contributors.push_back(std::move(ordered_contribs));
  }
  return out;
}

std::vector<FrameDetections> render_detections(
    const GroundTruthScene& scene, std::span<const CameraModel> cameras,
    const NoiseModel& noise) {
  std::vector<FrameDetections> out;
  out.reserve(scene.n_frames);
  for (int f = 0; f < scene.n_frames; ++f)
    out.push_back(render_frame(scene, cameras, noise, f).detections);
  return out;
}

// ---- exports -----------------------------------------------------------

WildManifest export_wild(const GroundTruthScene& scene) {
  WildManifest manifest;
  manifest.fps = scene.config.fps;
  struct Key {
    int frame_start;
    int bird;
    const SequenceRecord* rec;
  };
  std::vector<Key> keys;
  for (const BirdTruth& bird : scene.birds)
    for (const SequenceRecord& rec : bird.sequences)
      if (rec.kind == SequenceKind::Motion)
        keys.push_back({rec.frame_start, bird.meta.id, &rec});
  if (keys.empty()) throw DataError("scene has no motion sequences");
  std::sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) {
    return a.frame_start != b.frame_start ? a.frame_start < b.frame_start
                                          : a.bird < b.bird;
  });

  for (std::size_t i = 0; i < keys.size(); ++i) {
    const BirdTruth& bird = scene.birds[keys[i].bird];
    const SequenceRecord& rec = *keys[i].rec;
    WildExample ex;
    ex.index = static_cast<int>(i);
    ex.target_id = bird.meta.id;
    ex.frame_start = rec.frame_start;
    ex.frame_end = rec.frame_end;
    ex.start_head = bird.head(rec.frame_start);
    ex.start_tail = bird.tail(rec.frame_start);
    ex.end_head = bird.head(rec.frame_end);
    ex.end_tail = bird.tail(rec.frame_end);
    ex.bucket = bucket_for_frames(ex.n_frames());
    manifest.examples.push_back(ex);
  }
  return manifest;
}

std::vector<SongEvent> generate_songs(const GroundTruthScene& scene,
                                      double songs_per_male_per_min,
                                      std::uint64_t seed) {
  std::vector<SongEvent> songs;
  const double duration = scene.n_frames / scene.config.fps;
  if (duration <= 0.0 || songs_per_male_per_min <= 0.0) return songs;
  for (const BirdTruth& bird : scene.birds) {
    if (bird.meta.sex != 'M') continue;
    auto rng = make_rng(derive_seed(seed, "songs", bird.meta.id));
    const double lambda = songs_per_male_per_min * duration / 60.0;
    const int n = std::poisson_distribution<int>(lambda)(rng);
    std::uniform_real_distribution<double> when(0.0, duration);
    for (int i = 0; i < n; ++i) {
      double t = when(rng);
      bool placed = false;
      for (int tries = 0; tries < 10 && !placed; ++tries) {
        const int f = std::min(scene.n_frames - 1,
                               static_cast<int>(t * scene.config.fps));
        for (const SequenceRecord& rec : bird.sequences)
          if (rec.kind == SequenceKind::Stationary && f >= rec.frame_start &&
              f <= rec.frame_end) {
            songs.push_back({t, bird.meta.id});
            placed = true;
            break;
          }
        if (!placed) t = when(rng);
      }
    }
  }
  std::sort(songs.begin(), songs.end(), [](const SongEvent& a, const SongEvent& b) {
    return a.time_s != b.time_s ? a.time_s < b.time_s : a.male_id < b.male_id;
  });
  return songs;
}

std::vector<CameraModel> default_rig(const Vec3& volume) {
  // Eight corner cameras; aim parameters found by a coverage scan so every
  // interior point with 0.1 m clearance is seen by at least three cameras.
  constexpr double kFocal = 2156.1953029480474;  // 48 x 31 degree FOV
  constexpr double kInset = 0.08;
  constexpr double kTopAimZ = 0.95;
  constexpr double kBotAimZ = 1.1;
  constexpr double kAimFrac = 0.8;

  std::vector<CameraModel> rig;
  int id = 0;
  const double corners[4][2] = {{0.0, 0.0},
                                {volume.x(), 0.0},
                                {0.0, volume.y()},
                                {volume.x(), volume.y()}};
  for (const double z : {volume.z() - kInset, 0.35}) {
    const double aim_z = (z > 1.2) ? kTopAimZ : kBotAimZ;
    for (const auto& corner : corners) {
      const Vec3 c(corner[0] + (corner[0] == 0.0 ? kInset : -kInset),
                   corner[1] + (corner[1] == 0.0 ? kInset : -kInset), z);
      const Vec3 opposite(volume.x() - corner[0], volume.y() - corner[1], 0.0);
      const Vec3 target(c.x() + (opposite.x() - c.x()) * kAimFrac,
                        c.y() + (opposite.y() - c.y()) * kAimFrac, aim_z);
      CameraModel cam;
      cam.id = id++;
      cam.fx = cam.fy = kFocal;
      cam.cx = 960.0;
      cam.cy = 600.0;
      cam.rotation = look_at_rotation(c, target);
      cam.translation = -cam.rotation * c;
      rig.push_back(cam);
    }
  }
  return rig;
}

}  // namespace aviary
