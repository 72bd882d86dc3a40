#include "aviary/retracking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <tuple>

#include "aviary/errors.hpp"

namespace aviary {
namespace {

struct JoinCandidate {
  int a = -1;  // index of the earlier tracklet
  int b = -1;  // index of the later tracklet
  double dvel = 0.0;
  double dmid = 0.0;
};

// Midpoint agreement of the two endpoint constant-velocity projections.
double midpoint_distance(const Tracklet& a, const Tracklet& b, double dt) {
  const TrackletState& ea = a.states.back();
  const TrackletState& sb = b.states.front();
  const double tm = 0.5 * (ea.frame + sb.frame);
  const Vec3 fwd = ea.position + ea.velocity * ((tm - ea.frame) * dt);
  const Vec3 bwd =
      sb.position + tracklet_start_velocity(b) * ((tm - sb.frame) * dt);
  return (fwd - bwd).norm();
}

bool feasible(const Tracklet& a, const Tracklet& b, const RetrackConfig& cfg,
              double* dvel_out = nullptr, double* dmid_out = nullptr) {
  const int gap = b.first_frame() - a.last_frame();
  if (gap < 1 || gap > cfg.max_gap) return false;
  const double dvel =
      (a.states.back().velocity - tracklet_start_velocity(b)).norm();
  if (dvel > cfg.vel_tol_mps) return false;
  const double dmid = midpoint_distance(a, b, cfg.dt);
  if (dmid > cfg.join_dist_m) return false;
  if (dvel_out) *dvel_out = dvel;
  if (dmid_out) *dmid_out = dmid;
  return true;
}

void check_input(std::span<const Tracklet> tracklets) {
  std::set<std::int64_t> ids;
  for (const Tracklet& t : tracklets) {
    if (t.states.empty())
      throw DataError("retrack: tracklet without states");
    if (!ids.insert(t.id).second)
      throw DataError("retrack: duplicate tracklet id");
  }
}

}  // namespace

Vec3 tracklet_start_velocity(const Tracklet& t) {
  return t.states.size() >= 2 ? t.states[1].velocity : Vec3::Zero();
}

Vec3 gap_blend(const Tracklet& a, const Tracklet& b, int frame, double dt) {
  const TrackletState& ea = a.states.back();
  const TrackletState& sb = b.states.front();
  const double alpha =
      static_cast<double>(frame - ea.frame) / (sb.frame - ea.frame);
  const Vec3 fwd = ea.position + ea.velocity * ((frame - ea.frame) * dt);
  const Vec3 bwd =
      sb.position + tracklet_start_velocity(b) * ((frame - sb.frame) * dt);
  return (1.0 - alpha) * fwd + alpha * bwd;
}

void RetrackConfig::validate() const {
  const auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!positive(dt)) throw ConfigError("retrack: dt must be positive");
  if (max_gap < 1) throw ConfigError("retrack: max_gap must be at least 1");
  if (!positive(join_dist_m))
    throw ConfigError("retrack: join_dist_m must be positive");
  if (!positive(vel_tol_mps))
    throw ConfigError("retrack: vel_tol_mps must be positive");
  if (min_track_frames < 1)
    throw ConfigError("retrack: min_track_frames must be at least 1");
}

std::vector<Track> link_tracklets(std::span<const Tracklet> tracklets,
                                  const RetrackConfig& cfg) {
  cfg.validate();
  check_input(tracklets);
  const int n = static_cast<int>(tracklets.size());

  std::vector<JoinCandidate> candidates;
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      if (a == b) continue;
      JoinCandidate c{a, b, 0.0, 0.0};
      if (feasible(tracklets[a], tracklets[b], cfg, &c.dvel, &c.dmid))
        candidates.push_back(c);
    }
  }
  std::sort(candidates.begin(), candidates.end(),
            [&](const JoinCandidate& x, const JoinCandidate& y) {
              return std::tie(x.dvel, x.dmid, tracklets[x.a].id,
                              tracklets[x.b].id) <
                     std::tie(y.dvel, y.dmid, tracklets[y.a].id,
                              tracklets[y.b].id);
            });

  std::vector<int> successor(n, -1);
  std::vector<char> end_used(n, 0), start_used(n, 0);
  for (const JoinCandidate& c : candidates) {
    if (end_used[c.a] || start_used[c.b]) continue;
    end_used[c.a] = 1;
    start_used[c.b] = 1;
    successor[c.a] = c.b;
  }

  std::vector<Track> tracks;
  for (int root = 0; root < n; ++root) {
    if (start_used[root]) continue;  // continues an earlier chain
    Track track;
    for (int cur = root, prev = -1; cur != -1;
         prev = cur, cur = successor[cur]) {
      const Tracklet& t = tracklets[cur];
      if (prev != -1) {
        // Fill the gap by blending the two endpoint extrapolations.
        const Tracklet& p = tracklets[prev];
        const Vec3 va = p.states.back().velocity;
        const Vec3 vb = tracklet_start_velocity(t);
        const int ta = p.last_frame();
        const int tb = t.first_frame();
        for (int f = ta + 1; f < tb; ++f) {
          const double alpha = static_cast<double>(f - ta) / (tb - ta);
          TrackState gap;
          gap.frame = f;
          gap.position = gap_blend(p, t, f, cfg.dt);
          gap.velocity = (1.0 - alpha) * va + alpha * vb;
          gap.gap_filled = true;
          track.states.push_back(gap);
        }
      }
      track.tracklet_ids.push_back(t.id);
      const std::size_t base = track.states.size();
      for (const TrackletState& s : t.states)
        track.states.push_back(TrackState{s.frame, s.position, s.velocity,
                                          false});
      // Mid-track states carry physical velocities: a joined tracklet's
      // zero first-state placeholder would read as a one-frame stop.
      if (base > 0) track.states[base].velocity = tracklet_start_velocity(t);
    }
    if (track.length() < cfg.min_track_frames) continue;
    track.id = static_cast<std::int64_t>(tracks.size());
    tracks.push_back(std::move(track));
  }
  return tracks;
}

std::vector<HypothesisTree> build_hypothesis_tree(
    std::span<const Tracklet> tracklets, const RetrackConfig& cfg) {
  cfg.validate();
  check_input(tracklets);
  const int n = static_cast<int>(tracklets.size());

  std::vector<std::vector<int>> kids(n);
  std::vector<char> has_parent(n, 0);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      if (a == b) continue;
      if (feasible(tracklets[a], tracklets[b], cfg)) {
        kids[a].push_back(b);
        has_parent[b] = 1;
      }
    }
  }
  for (auto& k : kids)
    std::sort(k.begin(), k.end(), [&](int x, int y) {
      return tracklets[x].id < tracklets[y].id;
    });

  // Feasibility edges always advance in time, so the graph is acyclic and
  // path counts memoize cleanly.
  constexpr std::uint64_t kPathCap = 1ull << 62;
  std::vector<std::uint64_t> paths(n, 0);
  std::vector<char> done(n, 0);
  const auto count_paths = [&](auto&& self, int x) -> std::uint64_t {
    if (done[x]) return paths[x];
    std::uint64_t total = 0;
    for (int c : kids[x]) {
      const std::uint64_t sub = self(self, c);
      total = (total > kPathCap - sub) ? kPathCap : total + sub;
    }
    if (kids[x].empty()) total = 1;
    done[x] = 1;
    paths[x] = total;
    return total;
  };

  std::vector<HypothesisTree> trees;
  for (int root = 0; root < n; ++root) {
    if (has_parent[root]) continue;
    HypothesisTree tree;
    tree.root = tracklets[root].id;
    tree.n_paths = count_paths(count_paths, root);

    std::set<int> seen;
    std::vector<int> stack{root};
    while (!stack.empty()) {
      const int x = stack.back();
      stack.pop_back();
      if (!seen.insert(x).second) continue;
      auto& out = tree.children[tracklets[x].id];
      for (int c : kids[x]) {
        out.push_back(tracklets[c].id);
        stack.push_back(c);
      }
    }
    for (int x : seen)
      if (kids[x].empty()) tree.leaves.push_back(tracklets[x].id);
    std::sort(tree.leaves.begin(), tree.leaves.end());
    trees.push_back(std::move(tree));
  }
  return trees;
}

}  // namespace aviary
