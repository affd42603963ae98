#pragma once

// Independent reference implementations used only by tests. None of these call
// into the library code they check.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

namespace oracle {

struct Pt {
  double x;
  double y;
};

/// All six bijections of three points written out by hand.
inline double brute_force_matching(const std::array<Pt, 3>& pred, const std::array<Pt, 3>& gt) {
  static constexpr int kPerms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                       {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  double best = INFINITY;
  for (const auto& p : kPerms) {
    const double d0 = std::hypot(pred[0].x - gt[p[0]].x, pred[0].y - gt[p[0]].y);
    const double d1 = std::hypot(pred[1].x - gt[p[1]].x, pred[1].y - gt[p[1]].y);
    const double d2 = std::hypot(pred[2].x - gt[p[2]].x, pred[2].y - gt[p[2]].y);
    const double mean = (d0 + d1 + d2) / 3.0;
    if (mean < best) best = mean;
  }
  return best;
}

/// IoU of integer boxes by counting unit cells.
inline double grid_iou(int ax1, int ay1, int ax2, int ay2, int bx1, int by1, int bx2, int by2) {
  long inter = 0;
  long uni = 0;
  const int lo_x = std::min(ax1, bx1), hi_x = std::max(ax2, bx2);
  const int lo_y = std::min(ay1, by1), hi_y = std::max(ay2, by2);
  for (int x = lo_x; x < hi_x; ++x) {
    for (int y = lo_y; y < hi_y; ++y) {
      const bool in_a = x >= ax1 && x < ax2 && y >= ay1 && y < ay2;
      const bool in_b = x >= bx1 && x < bx2 && y >= by1 && y < by2;
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  }
  if ((ax2 - ax1) * (ay2 - ay1) == 0 || (bx2 - bx1) * (by2 - by1) == 0 || uni == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

/// IoU of integer intervals by counting unit segments.
inline double grid_tiou(int as, int ae, int bs, int be) {
  if (ae - as == 0 || be - bs == 0) return 0.0;
  long inter = 0;
  long uni = 0;
  for (int t = std::min(as, bs); t < std::max(ae, be); ++t) {
    const bool in_a = t >= as && t < ae;
    const bool in_b = t >= bs && t < be;
    inter += in_a && in_b;
    uni += in_a || in_b;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Word edit distance by plain recursion with memoization.
inline std::size_t edit_distance(const std::string& hyp, const std::string& ref) {
  auto words = [](const std::string& s) {
    std::vector<std::string> w;
    std::istringstream ss(s);
    std::string t;
    while (ss >> t) w.push_back(t);
    return w;
  };
  const auto h = words(hyp);
  const auto r = words(ref);
  std::vector<std::vector<long>> memo(h.size() + 1, std::vector<long>(r.size() + 1, -1));
  std::function<long(std::size_t, std::size_t)> d = [&](std::size_t i, std::size_t j) -> long {
    if (i == 0) return static_cast<long>(j);
    if (j == 0) return static_cast<long>(i);
    if (memo[i][j] >= 0) return memo[i][j];
    const long best = std::min({d(i - 1, j) + 1, d(i, j - 1) + 1,
                                d(i - 1, j - 1) + (h[i - 1] == r[j - 1] ? 0 : 1)});
    return memo[i][j] = best;
  };
  return static_cast<std::size_t>(d(h.size(), r.size()));
}

/// MRA by direct enumeration of theta in percent.
inline double mra(double pred, double gt) {
  int hits = 0;
  for (int theta_pct = 50; theta_pct <= 95; theta_pct += 5) {
    const double rel = std::abs(pred - gt) / std::abs(gt);
    // rel < 1 - theta  <=>  100 * rel < 100 - theta_pct, compared on the integer side.
    if (rel * 100.0 < static_cast<double>(100 - theta_pct)) ++hits;
  }
  return hits / 10.0;
}

/// Central finite difference of f along coordinate `i` of `x`.
inline double central_difference(const std::function<double(const std::vector<double>&)>& f,
                                  std::vector<double> x, std::size_t i, double h) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double up = f(x);
  x[i] = x0 - h;
  const double down = f(x);
  return (up - down) / (2.0 * h);
}

}  // namespace oracle
