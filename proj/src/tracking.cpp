#include "aviary/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>
#include <vector>

#include "aviary/errors.hpp"

namespace aviary {
namespace {

constexpr double kForbidden = 1e30;     // masked cost entry
constexpr double kMaskedGate = 1e29;    // excludes kForbidden, keeps real costs

}  // namespace

void TrackerConfig::validate() const {
  const auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!positive(dt)) throw ConfigError("tracker: dt must be positive");
  if (!positive(gate_m)) throw ConfigError("tracker: gate_m must be positive");
  if (!positive(init_gate_m))
    throw ConfigError("tracker: init_gate_m must be positive");
  if (!positive(smooth_sigma))
    throw ConfigError("tracker: smooth_sigma must be positive");
  if (smooth_radius < 0)
    throw ConfigError("tracker: smooth_radius must be non-negative");
}

const char* to_string(TrackletStatus status) {
  switch (status) {
    case TrackletStatus::Active:
      return "active";
    case TrackletStatus::StoppedAmbiguous:
      return "stopped_ambiguous";
    case TrackletStatus::StoppedLost:
      return "stopped_lost";
  }
  return "unknown";
}

Vec3 predict(const TrackletState& state, double dt) {
  return state.position + state.velocity * dt;
}

Vec3 init_velocity(const Vec3& x1, const Vec3& x2, double dt) {
  return (x2 - x1) / dt;
}

Assignment hungarian(const Eigen::MatrixXd& cost, double gate) {
  if (std::isnan(gate)) throw ConfigError("hungarian: gate must not be NaN");
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      if (!std::isfinite(cost(i, j)))
        throw DataError("hungarian: costs must be finite");

  Assignment out;
  out.row_to_col.assign(n, -1);
  out.col_to_row.assign(m, -1);
  if (n == 0 || m == 0) return out;

  // Pad to a square matrix whose disallowed entries cost more than any full
  // real matching, so minimizing the padded total maximizes the number of
  // in-gate pairs first and their summed cost second.
  const int s = std::max(n, m);
  double cmax = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      if (cost(i, j) < gate) cmax = std::max(cmax, cost(i, j));
  const double big = (cmax + 1.0) * s;

  std::vector<std::vector<double>> a(s + 1, std::vector<double>(s + 1, big));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      if (cost(i, j) < gate) a[i + 1][j + 1] = cost(i, j);

  // Kuhn-Munkres with potentials; p[j] is the row matched to column j.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(s + 1, 0.0), v(s + 1, 0.0);
  std::vector<int> p(s + 1, 0), way(s + 1, 0);
  for (int i = 1; i <= s; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(s + 1, inf);
    std::vector<char> used(s + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= s; ++j) {
        if (used[j]) continue;
        const double cur = a[i0][j] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= s; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  for (int j = 1; j <= s; ++j) {
    const int i = p[j];
    if (i >= 1 && i <= n && j <= m && cost(i - 1, j - 1) < gate) {
      out.row_to_col[i - 1] = j - 1;
      out.col_to_row[j - 1] = i - 1;
      out.total_cost += cost(i - 1, j - 1);
      ++out.n_matched;
    }
  }
  return out;
}

void track_step(std::vector<Tracklet>& tracklets, int frame,
                std::span<const Cluster> clusters, const TrackerConfig& cfg,
                std::int64_t& next_id) {
  cfg.validate();

  std::vector<std::size_t> rows;
  for (std::size_t t = 0; t < tracklets.size(); ++t) {
    Tracklet& tr = tracklets[t];
    if (tr.status != TrackletStatus::Active) continue;
    if (tr.states.empty())
      throw DataError("track_step: active tracklet has no states");
    if (tr.last_frame() != frame - 1)
      throw DataError("track_step: active tracklet is not at the previous frame");
    rows.push_back(t);
  }

  // Canonical center order decouples the outcome from cluster input order.
  const int m = static_cast<int>(clusters.size());
  std::vector<int> canon(m);
  std::iota(canon.begin(), canon.end(), 0);
  std::sort(canon.begin(), canon.end(), [&](int a, int b) {
    const Vec3& ca = clusters[a].center;
    const Vec3& cb = clusters[b].center;
    return std::tie(ca.x(), ca.y(), ca.z()) < std::tie(cb.x(), cb.y(), cb.z());
  });

  const int n = static_cast<int>(rows.size());
  Eigen::MatrixXd masked(n, m);
  std::vector<int> in_gate(n, 0);
  for (int i = 0; i < n; ++i) {
    const Tracklet& tr = tracklets[rows[i]];
    const TrackletState& last = tr.states.back();
    const Vec3 base =
        tr.has_velocity() ? predict(last, cfg.dt) : last.position;
    const double row_gate = tr.has_velocity() ? cfg.gate_m : cfg.init_gate_m;
    for (int j = 0; j < m; ++j) {
      const double c = (base - clusters[canon[j]].center).norm();
      if (c < row_gate) {
        masked(i, j) = c;
        ++in_gate[i];
      } else {
        masked(i, j) = kForbidden;
      }
    }
  }

  // Rows with a unique candidate compete in the Hungarian matching; rows with
  // several stop as ambiguous, rows with none stop as lost.
  std::vector<int> contenders;
  for (int i = 0; i < n; ++i) {
    if (in_gate[i] >= 2) {
      tracklets[rows[i]].status = TrackletStatus::StoppedAmbiguous;
    } else if (in_gate[i] == 0) {
      tracklets[rows[i]].status = TrackletStatus::StoppedLost;
    } else {
      contenders.push_back(i);
    }
  }

  Eigen::MatrixXd sub(static_cast<int>(contenders.size()), m);
  for (int r = 0; r < static_cast<int>(contenders.size()); ++r)
    sub.row(r) = masked.row(contenders[r]);
  const Assignment match = hungarian(sub, kMaskedGate);

  std::vector<char> consumed(m, 0);
  for (int r = 0; r < static_cast<int>(contenders.size()); ++r) {
    Tracklet& tr = tracklets[rows[contenders[r]]];
    const int j = match.row_to_col[r];
    if (j < 0) {
      // The unique candidate went to a closer tracklet.
      tr.status = TrackletStatus::StoppedLost;
      continue;
    }
    consumed[j] = 1;
    const Vec3& center = clusters[canon[j]].center;
    TrackletState state;
    state.frame = frame;
    state.position = center;
    state.velocity = init_velocity(tr.states.back().position, center, cfg.dt);
    tr.states.push_back(state);
  }

  for (int j = 0; j < m; ++j) {
    if (consumed[j]) continue;
    Tracklet seed;
    seed.id = next_id++;
    seed.states.push_back(
        TrackletState{frame, clusters[canon[j]].center, Vec3::Zero()});
    tracklets.push_back(std::move(seed));
  }
}

Tracklet smooth_tracklet(Tracklet tracklet, const TrackerConfig& cfg) {
  cfg.validate();
  const int n = tracklet.length();
  if (n == 0) return tracklet;

  const int r = cfg.smooth_radius;
  std::vector<double> w(2 * r + 1);
  for (int k = -r; k <= r; ++k)
    w[k + r] = std::exp(-0.5 * k * k / (cfg.smooth_sigma * cfg.smooth_sigma));

  // Convolve indices [lo, n) in place, renormalizing over the valid support.
  const auto convolve = [&](int lo, auto get, auto set) {
    std::vector<Vec3> out;
    out.reserve(n - lo);
    for (int i = lo; i < n; ++i) {
      Vec3 acc = Vec3::Zero();
      double wsum = 0.0;
      for (int k = -r; k <= r; ++k) {
        const int j = i + k;
        if (j < lo || j >= n) continue;
        acc += w[k + r] * get(j);
        wsum += w[k + r];
      }
      out.push_back(acc / wsum);
    }
    for (int i = lo; i < n; ++i) set(i, out[i - lo]);
  };

  auto& states = tracklet.states;
  convolve(
      0, [&](int j) { return states[j].position; },
      [&](int i, const Vec3& v) { states[i].position = v; });
  // velocity[0] is undefined; it stays zero and never enters a window.
  convolve(
      1, [&](int j) { return states[j].velocity; },
      [&](int i, const Vec3& v) { states[i].velocity = v; });
  return tracklet;
}

std::vector<Tracklet> track_sequence(
    std::span<const std::vector<Cluster>> frames, int first_frame,
    const TrackerConfig& cfg) {
  cfg.validate();
  std::vector<Tracklet> tracklets;
  std::int64_t next_id = 0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const int frame = first_frame + static_cast<int>(i);
    for (const Cluster& c : frames[i])
      if (c.frame != frame)
        throw DataError("track_sequence: cluster frame does not match slot");
    track_step(tracklets, frame, frames[i], cfg, next_id);
  }
  for (Tracklet& t : tracklets) t = smooth_tracklet(std::move(t), cfg);
  return tracklets;
}

}  // namespace aviary
