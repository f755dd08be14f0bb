#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "bestsubset/linalg.hpp"

namespace bestsubset {

/// {b : sum_{i in mask} |b_i - center_i| <= radius}.  An empty mask means
/// every coordinate counts.
struct L1Ball {
  Vector center;
  double radius = kInf;
  std::vector<char> mask;

  bool counts(Index i) const {
    return mask.empty() || mask[static_cast<std::size_t>(i)] != 0;
  }
};

/// Box intersected with up to two l1 balls.
struct FeasibleRegion {
  Vector lower;
  Vector upper;
  std::vector<L1Ball> balls;

  Index dim() const { return lower.size(); }

  static FeasibleRegion box(Vector l, Vector u) {
    FeasibleRegion r;
    r.lower = std::move(l);
    r.upper = std::move(u);
    return r;
  }

  /// Box plus a single l1 ball (default center: origin).
  static FeasibleRegion box_l1(Vector l, Vector u, double radius,
                               Vector center = Vector()) {
    FeasibleRegion r = box(std::move(l), std::move(u));
    if (!std::isinf(radius)) {
      L1Ball b;
      b.center = center.size() ? std::move(center) : Vector::Zero(r.dim());
      b.radius = radius;
      r.balls.push_back(std::move(b));
    }
    return r;
  }
};

namespace detail {

inline double clip(double v, double lo, double hi) {
  return std::min(std::max(v, lo), hi);
}

inline double shrink(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

inline double dist_to_interval(double v, double lo, double hi) {
  if (v < lo) return lo - v;
  if (v > hi) return v - hi;
  return 0.0;
}

inline double ball_norm(const L1Ball& b, const Vector& x) {
  double s = 0.0;
  for (Index i = 0; i < x.size(); ++i)
    if (b.counts(i)) s += std::abs(x(i) - b.center(i));
  return s;
}

// Smallest l1 distance from the ball center to the box (masked coords).
inline double ball_min_dist(const L1Ball& b, const Vector& l, const Vector& u) {
  double s = 0.0;
  for (Index i = 0; i < l.size(); ++i)
    if (b.counts(i)) s += dist_to_interval(b.center(i), l(i), u(i));
  return s;
}

// argmin over [l,u] of 0.5(x-c)^2 + wa|x-a| + wb|x-b|.
inline double prox_two_kinks(double c, double l, double u, double a,
                             double wa, double b, double wb) {
  auto obj = [&](double x) {
    return 0.5 * (x - c) * (x - c) + wa * std::abs(x - a) +
           wb * std::abs(x - b);
  };
  double kinks[2];
  int nk = 0;
  if (wa > 0) kinks[nk++] = a;
  if (wb > 0) kinks[nk++] = b;
  if (nk == 2 && kinks[0] > kinks[1]) std::swap(kinks[0], kinks[1]);

  double best = c;
  double best_val = kInf;
  bool found = false;
  // Stationary point inside each smooth piece.
  for (int piece = 0; piece <= nk; ++piece) {
    const double lo = piece == 0 ? -kInf : kinks[piece - 1];
    const double hi = piece == nk ? kInf : kinks[piece];
    double probe;
    if (std::isinf(lo) && std::isinf(hi)) probe = 0.0;
    else if (std::isinf(lo)) probe = hi - 1.0;
    else if (std::isinf(hi)) probe = lo + 1.0;
    else probe = 0.5 * (lo + hi);
    const double sa = wa > 0 ? (probe > a ? 1.0 : -1.0) : 0.0;
    const double sb = wb > 0 ? (probe > b ? 1.0 : -1.0) : 0.0;
    const double x = c - wa * sa - wb * sb;
    if (x > lo && x < hi) {
      best = x;
      found = true;
      break;
    }
  }
  if (!found) {
    for (int i = 0; i < nk; ++i) {
      const double v = obj(kinks[i]);
      if (v < best_val) {
        best_val = v;
        best = kinks[i];
      }
    }
  }
  return clip(best, l, u);
}

}  // namespace detail

/// Membership test with absolute slack tol.
inline bool contains(const FeasibleRegion& R, const Vector& b,
                     double tol = 1e-9) {
  for (Index i = 0; i < b.size(); ++i)
    if (b(i) < R.lower(i) - tol || b(i) > R.upper(i) + tol) return false;
  for (const auto& ball : R.balls)
    if (detail::ball_norm(ball, b) > ball.radius + tol * (1.0 + ball.radius))
      return false;
  return true;
}

/// Throws EmptyRegion when an invariant of the region fails.  Joint
/// emptiness of two balls is detected by project().
inline void check_region(const FeasibleRegion& R) {
  if (R.lower.size() != R.upper.size())
    fail(ErrorKind::SpecConflict, "box bounds have different lengths");
  for (Index i = 0; i < R.dim(); ++i)
    if (!(R.lower(i) <= R.upper(i)))
      fail(ErrorKind::EmptyRegion,
           "lower > upper at coordinate " + std::to_string(i));
  if (R.balls.size() > 2)
    fail(ErrorKind::SpecConflict, "at most two l1 balls are supported");
  for (const auto& b : R.balls) {
    if (!(b.radius >= 0)) fail(ErrorKind::EmptyRegion, "negative l1 radius");
    if (detail::ball_min_dist(b, R.lower, R.upper) > b.radius * (1 + 1e-12))
      fail(ErrorKind::EmptyRegion, "l1 ball does not meet the box");
  }
}

namespace detail {

// Smallest multiplier t >= 0 with phi(t) <= r, phi nonincreasing.  Returns
// the upper end of the final bracket so the result is feasible.
template <class Phi>
double bisect_multiplier(Phi&& phi, double r, double hi0) {
  if (phi(0.0) <= r) return 0.0;
  double lo = 0.0, hi = std::max(hi0, 1e-300);
  int grow = 0;
  while (phi(hi) > r) {
    lo = hi;
    hi *= 2.0;
    if (++grow > 200) fail(ErrorKind::EmptyRegion, "l1 constraints cannot be met");
  }
  for (int it = 0; it < 300 && hi - lo > 1e-12 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (phi(mid) > r) lo = mid;
    else hi = mid;
  }
  return hi;
}

}  // namespace detail

/// Euclidean projection of c onto the region.
inline Vector project(const Vector& c, const FeasibleRegion& R) {
  using namespace detail;
  const Index p = c.size();
  Vector x(p);
  for (Index i = 0; i < p; ++i) x(i) = clip(c(i), R.lower(i), R.upper(i));

  bool feasible = true;
  for (const auto& b : R.balls)
    if (ball_norm(b, x) > b.radius) feasible = false;
  if (feasible) return x;
  check_region(R);

  if (R.balls.size() == 1) {
    const L1Ball& B = R.balls[0];
    auto eval = [&](double theta) {
      for (Index i = 0; i < p; ++i) {
        const double a = B.center(i);
        const double t = B.counts(i) ? theta : 0.0;
        x(i) = clip(a + shrink(c(i) - a, t), R.lower(i), R.upper(i));
      }
      return ball_norm(B, x);
    };
    double hi0 = 0.0;
    for (Index i = 0; i < p; ++i)
      if (B.counts(i)) hi0 = std::max(hi0, std::abs(c(i) - B.center(i)));
    const double theta = bisect_multiplier(eval, B.radius, hi0);
    eval(theta);
    return x;
  }

  const L1Ball& A = R.balls[0];
  const L1Ball& B = R.balls[1];
  auto eval = [&](double ta, double tb) {
    for (Index i = 0; i < p; ++i)
      x(i) = prox_two_kinks(c(i), R.lower(i), R.upper(i), A.center(i),
                            A.counts(i) ? ta : 0.0, B.center(i),
                            B.counts(i) ? tb : 0.0);
  };
  double scale = 1.0;
  for (Index i = 0; i < p; ++i)
    scale = std::max({scale, std::abs(c(i) - A.center(i)),
                      std::abs(c(i) - B.center(i))});
  auto inner = [&](double tb) {
    auto phi = [&](double ta) {
      eval(ta, tb);
      return ball_norm(A, x);
    };
    return bisect_multiplier(phi, A.radius, scale + tb);
  };
  auto outer = [&](double tb) {
    const double ta = inner(tb);
    eval(ta, tb);
    return ball_norm(B, x);
  };
  const double tb = bisect_multiplier(outer, B.radius, scale);
  eval(inner(tb), tb);
  return x;
}

/// Minimizer of <g, s> over a region with at most one l1 ball.  Coordinates
/// with g_i = 0 are left at the point of the box closest to the center.
inline Vector linear_min_oracle(const Vector& g, const FeasibleRegion& R) {
  using namespace detail;
  if (R.balls.size() > 1)
    fail(ErrorKind::SpecConflict,
         "linear_min_oracle handles one l1 ball; use linear_min_bound");
  check_region(R);
  const Index p = g.size();
  const L1Ball* B = R.balls.empty() ? nullptr : &R.balls[0];
  Vector s(p);

  auto endpoint = [&](Index i) {
    const double e = g(i) > 0 ? R.lower(i) : R.upper(i);
    return e;
  };
  std::vector<Index> budgeted;
  for (Index i = 0; i < p; ++i) {
    const double a = B ? B->center(i) : 0.0;
    s(i) = clip(a, R.lower(i), R.upper(i));
    if (g(i) == 0.0) continue;
    if (B && B->counts(i)) {
      budgeted.push_back(i);
      continue;
    }
    const double e = endpoint(i);
    if (std::isinf(e))
      fail(ErrorKind::UnboundedDirection,
           "unbounded coordinate " + std::to_string(i) + " with nonzero gradient");
    s(i) = e;
  }
  if (!B) return s;

  double budget = B->radius - ball_min_dist(*B, R.lower, R.upper);
  std::stable_sort(budgeted.begin(), budgeted.end(), [&](Index a, Index b) {
    return std::abs(g(a)) > std::abs(g(b));
  });
  for (Index i : budgeted) {
    const double e = endpoint(i);
    const double room = std::abs(e - s(i));
    if (std::isinf(room) && std::isinf(budget))
      fail(ErrorKind::UnboundedDirection,
           "unbounded coordinate " + std::to_string(i) + " with nonzero gradient");
    if (budget <= 0.0) break;
    const double step = std::min(room, budget);
    s(i) += (e > s(i) ? step : -step);
    budget -= step;
  }
  return s;
}

/// Certified lower bound on min_{s in R} <g, s>.  Exact for at most one
/// ball; for two balls a Lagrangian dual value (valid for any multipliers,
/// maximized by nested golden-section search).
inline double linear_min_bound(const Vector& g, const FeasibleRegion& R) {
  using namespace detail;
  if (R.balls.size() <= 1) return g.dot(linear_min_oracle(g, R));

  const L1Ball& A = R.balls[0];
  const L1Ball& B = R.balls[1];
  const Index p = g.size();
  auto dual = [&](double ta, double tb) {
    double total = -ta * A.radius - tb * B.radius;
    for (Index i = 0; i < p; ++i) {
      const double wa = A.counts(i) ? ta : 0.0;
      const double wb = B.counts(i) ? tb : 0.0;
      const double l = R.lower(i), u = R.upper(i);
      if ((std::isinf(u) && g(i) + wa + wb < 0) ||
          (std::isinf(l) && g(i) - wa - wb > 0))
        return -kInf;
      auto f = [&](double s) {
        return g(i) * s + wa * std::abs(s - A.center(i)) +
               wb * std::abs(s - B.center(i));
      };
      double best = kInf;
      for (double cand : {l, u, A.center(i), B.center(i)}) {
        if (std::isinf(cand)) continue;
        best = std::min(best, f(clip(cand, l, u)));
      }
      total += best;
    }
    return total;
  };
  const double theta_max = 4.0 * (g.cwiseAbs().maxCoeff() + 1.0);
  constexpr double kPhi = 0.6180339887498949;
  auto golden = [&](auto&& f, double lo, double hi, double& arg) {
    double x1 = hi - kPhi * (hi - lo), x2 = lo + kPhi * (hi - lo);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < 60; ++it) {
      if (f1 < f2) {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + kPhi * (hi - lo);
        f2 = f(x2);
      } else {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - kPhi * (hi - lo);
        f1 = f(x1);
      }
    }
    double best = std::max(f1, f2);
    arg = f1 >= f2 ? x1 : x2;
    const double f0 = f(0.0);
    if (f0 > best) {
      best = f0;
      arg = 0.0;
    }
    return best;
  };
  auto profile = [&](double tb) {
    double ta;
    return golden([&](double t) { return dual(t, tb); }, 0.0, theta_max, ta);
  };
  double tb;
  return golden(profile, 0.0, theta_max, tb);
}

}  // namespace bestsubset
