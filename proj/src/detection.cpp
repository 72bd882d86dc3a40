#include "aviary/detection.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "aviary/errors.hpp"
#include "aviary/seeding.hpp"

namespace aviary {

void Mask::recompute_stats() {
  std::sort(runs.begin(), runs.end(), [](const MaskRun& a, const MaskRun& b) {
    return a.y != b.y ? a.y < b.y : a.x0 < b.x0;
  });
  area = 0;
  double sx = 0.0, sy = 0.0;
  for (const MaskRun& r : runs) {
    if (r.len <= 0) throw DataError("mask run with non-positive length");
    area += r.len;
    // sum of x0..x0+len-1
    sx += static_cast<double>(r.len) * r.x0 +
          0.5 * static_cast<double>(r.len) * (r.len - 1);
    sy += static_cast<double>(r.len) * r.y;
  }
  if (area == 0) {
    centroid = Vec2::Zero();
    return;
  }
  centroid = Vec2(sx / static_cast<double>(area), sy / static_cast<double>(area));
}

bool Mask::overlaps(const Mask& other) const {
  // Both run lists are sorted by (y, x0).
  std::size_t i = 0, j = 0;
  while (i < runs.size() && j < other.runs.size()) {
    const MaskRun& a = runs[i];
    const MaskRun& b = other.runs[j];
    if (a.y != b.y) {
      if (a.y < b.y)
        ++i;
      else
        ++j;
      continue;
    }
    if (a.x0 < b.x0 + b.len && b.x0 < a.x0 + a.len) return true;
    if (a.x0 + a.len <= b.x0 + b.len)
      ++i;
    else
      ++j;
  }
  return false;
}

Mask Mask::merge(const Mask& a, const Mask& b) {
  Mask out;
  out.runs.reserve(a.runs.size() + b.runs.size());
  out.runs.insert(out.runs.end(), a.runs.begin(), a.runs.end());
  out.runs.insert(out.runs.end(), b.runs.begin(), b.runs.end());
  std::sort(out.runs.begin(), out.runs.end(),
            [](const MaskRun& x, const MaskRun& y) {
              return x.y != y.y ? x.y < y.y : x.x0 < y.x0;
            });
  std::vector<MaskRun> merged;
  merged.reserve(out.runs.size());
  for (const MaskRun& r : out.runs) {
    if (!merged.empty() && merged.back().y == r.y &&
        r.x0 <= merged.back().x0 + merged.back().len) {
      std::int32_t end = std::max(merged.back().x0 + merged.back().len,
                                  r.x0 + r.len);
      merged.back().len = end - merged.back().x0;
    } else {
      merged.push_back(r);
    }
  }
  out.runs = std::move(merged);
  out.recompute_stats();
  return out;
}

std::vector<Vec2> enumerate_pixels(const Mask& mask) {
  std::vector<Vec2> out;
  out.reserve(static_cast<std::size_t>(mask.area));
  for (const MaskRun& r : mask.runs)
    for (std::int32_t k = 0; k < r.len; ++k)
      out.emplace_back(static_cast<double>(r.x0 + k),
                       static_cast<double>(r.y));
  return out;
}

std::vector<Vec2> subsample_mask_pixels(const Mask& mask, std::size_t cap,
                                        std::uint64_t seed) {
  const auto n = static_cast<std::uint64_t>(mask.area);
  if (cap == 0 || n == 0) return {};
  if (n <= cap) return enumerate_pixels(mask);

  // Floyd's sampling of `cap` distinct indices in [0, n).
  std::unordered_set<std::uint64_t> chosen;
  chosen.reserve(cap * 2);
  auto rng = make_rng(seed);
  for (std::uint64_t j = n - cap; j < n; ++j) {
    std::uint64_t t = std::uniform_int_distribution<std::uint64_t>(0, j)(rng);
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  std::vector<std::uint64_t> idx(chosen.begin(), chosen.end());
  std::sort(idx.begin(), idx.end());

  std::vector<Vec2> out;
  out.reserve(idx.size());
  std::size_t run_i = 0;
  std::uint64_t run_base = 0;  // linear index of runs[run_i].x0
  for (std::uint64_t k : idx) {
    while (run_base + static_cast<std::uint64_t>(mask.runs[run_i].len) <= k) {
      run_base += static_cast<std::uint64_t>(mask.runs[run_i].len);
      ++run_i;
    }
    const MaskRun& r = mask.runs[run_i];
    out.emplace_back(static_cast<double>(r.x0 + static_cast<std::int64_t>(k - run_base)),
                     static_cast<double>(r.y));
  }
  return out;
}

void PixelGrid::insert(double u, double v) {
  const auto ix = static_cast<std::int64_t>(std::floor(u / cell_));
  const auto iy = static_cast<std::int64_t>(std::floor(v / cell_));
  buckets_[key(ix, iy)].push_back(static_cast<std::uint32_t>(pts_.size()));
  pts_.emplace_back(u, v);
}

void PixelGrid::query_radius(double u, double v, double radius,
                             std::vector<std::uint32_t>& out) const {
  out.clear();
  const double r2 = radius * radius;
  const auto ix0 = static_cast<std::int64_t>(std::floor((u - radius) / cell_));
  const auto ix1 = static_cast<std::int64_t>(std::floor((u + radius) / cell_));
  const auto iy0 = static_cast<std::int64_t>(std::floor((v - radius) / cell_));
  const auto iy1 = static_cast<std::int64_t>(std::floor((v + radius) / cell_));
  for (std::int64_t iy = iy0; iy <= iy1; ++iy)
    for (std::int64_t ix = ix0; ix <= ix1; ++ix) {
      auto it = buckets_.find(key(ix, iy));
      if (it == buckets_.end()) continue;
      for (std::uint32_t id : it->second) {
        const Vec2& p = pts_[id];
        const double du = p.x() - u, dv = p.y() - v;
        if (du * du + dv * dv <= r2) out.push_back(id);
      }
    }
  std::sort(out.begin(), out.end());
}

bool PixelGrid::any_within(double u, double v, double radius) const {
  const double r2 = radius * radius;
  const auto ix0 = static_cast<std::int64_t>(std::floor((u - radius) / cell_));
  const auto ix1 = static_cast<std::int64_t>(std::floor((u + radius) / cell_));
  const auto iy0 = static_cast<std::int64_t>(std::floor((v - radius) / cell_));
  const auto iy1 = static_cast<std::int64_t>(std::floor((v + radius) / cell_));
  for (std::int64_t iy = iy0; iy <= iy1; ++iy)
    for (std::int64_t ix = ix0; ix <= ix1; ++ix) {
      auto it = buckets_.find(key(ix, iy));
      if (it == buckets_.end()) continue;
      for (std::uint32_t id : it->second) {
        const Vec2& p = pts_[id];
        const double du = p.x() - u, dv = p.y() - v;
        if (du * du + dv * dv <= r2) return true;
      }
    }
  return false;
}

namespace {

double point_segment_dist2(double px, double py, double ax, double ay,
                           double bx, double by) {
  const double abx = bx - ax, aby = by - ay;
  const double apx = px - ax, apy = py - ay;
  const double len2 = abx * abx + aby * aby;
  double t = len2 > 0.0 ? (apx * abx + apy * aby) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = apx - t * abx, dy = apy - t * aby;
  return dx * dx + dy * dy;
}

}  // namespace

void PixelGrid::query_segment(double u0, double v0, double u1, double v1,
                              double radius,
                              std::vector<std::uint32_t>& out) const {
  out.clear();
  const double r2 = radius * radius;
  const double du = u1 - u0, dv = v1 - v0;
  const double len = std::sqrt(du * du + dv * dv);
  const int steps = std::max(1, static_cast<int>(std::ceil(len / cell_)));
  const int halo = static_cast<int>(std::ceil(radius / cell_)) + 1;
  std::unordered_set<std::int64_t> seen;
  seen.reserve(static_cast<std::size_t>(steps) * 4);
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    const double cu = u0 + t * du, cv = v0 + t * dv;
    const auto cx = static_cast<std::int64_t>(std::floor(cu / cell_));
    const auto cy = static_cast<std::int64_t>(std::floor(cv / cell_));
    for (std::int64_t iy = cy - halo; iy <= cy + halo; ++iy)
      for (std::int64_t ix = cx - halo; ix <= cx + halo; ++ix) {
        if (!seen.insert(key(ix, iy)).second) continue;
        auto it = buckets_.find(key(ix, iy));
        if (it == buckets_.end()) continue;
        for (std::uint32_t id : it->second) {
          const Vec2& p = pts_[id];
          if (point_segment_dist2(p.x(), p.y(), u0, v0, u1, v1) <= r2)
            out.push_back(id);
        }
      }
  }
  std::sort(out.begin(), out.end());
}

}  // namespace aviary
