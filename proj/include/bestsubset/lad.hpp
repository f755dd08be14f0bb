#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <utility>
#include <vector>

#include "bestsubset/bounds.hpp"
#include "bestsubset/first_order.hpp"
#include "bestsubset/miqp.hpp"

namespace bestsubset {

inline double lad_objective(const Dataset& data, const Vector& beta) {
  return (data.y - sparse_product(data.X, beta)).lpNorm<1>();
}

/// Huber-type smoothing of |r| with parameter tau, summed over residuals.
inline std::pair<double, Vector> smoothed_lad_value_grad(const Vector& beta,
                                                         const Dataset& data,
                                                         double tau) {
  if (!(tau > 0.0)) fail(ErrorKind::SpecConflict, "tau must be positive");
  const Vector r = data.y - sparse_product(data.X, beta);
  double val = 0.0;
  Vector w(r.size());
  for (Index i = 0; i < r.size(); ++i) {
    const double a = std::abs(r(i));
    if (a <= tau) {
      w(i) = r(i) / tau;
      val += r(i) * r(i) / (2.0 * tau);
    } else {
      w(i) = r(i) > 0 ? 1.0 : -1.0;
      val += a - 0.5 * tau;
    }
  }
  return {val, -(data.X.transpose() * w)};
}

struct LadPolishResult {
  Vector beta;
  double objective = 0.0;
  bool verified = false;  ///< subgradient optimality holds within 1e-6
  int pivots = 0;
};

namespace detail {

inline int sign_of(double v, double tol) { return v > tol ? 1 : (v < -tol ? -1 : 0); }

}  // namespace detail

/// Exact least-absolute-deviation fit restricted to a support.  Starts from
/// the least-squares fit, moves to a basic solution (as many zero residuals
/// as free coefficients) and pivots along edges with a weighted-median line
/// search until the subgradient condition certifies optimality.
inline LadPolishResult lad_polish_certified(const Dataset& data, const Support& S_in,
                                            int max_pivots = -1) {
  LadPolishResult res;
  res.beta = Vector::Zero(data.p());
  const Index n = data.n();
  if (S_in.empty()) {
    res.objective = data.y.lpNorm<1>();
    res.verified = true;
    return res;
  }
  // Keep a maximal independent subset of the columns.
  Support S;
  {
    const Matrix XS = columns(data.X, S_in);
    Eigen::ColPivHouseholderQR<Matrix> qr(XS);
    const Index r = qr.rank();
    for (Index j = 0; j < r; ++j) S.push_back(S_in[static_cast<std::size_t>(qr.colsPermutation().indices()(j))]);
    std::sort(S.begin(), S.end());
  }
  const Index m = static_cast<Index>(S.size());
  if (m == 0) {
    res.objective = data.y.lpNorm<1>();
    res.verified = true;
    return res;
  }
  const Matrix XS = columns(data.X, S);
  const double scale = std::max(1.0, data.y.cwiseAbs().maxCoeff());
  const double zero_tol = 1e-12 * scale;
  if (max_pivots < 0) max_pivots = static_cast<int>(50 * n + 100);

  Vector b = Eigen::CompleteOrthogonalDecomposition<Matrix>(XS).solve(data.y);
  Vector r = data.y - XS * b;

  // Basis rows: smallest residuals first, keeping X_Z nonsingular.
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index c) { return std::abs(r(a)) < std::abs(r(c)); });
  std::vector<Index> Z;
  {
    Matrix rows(0, m);
    for (Index i : order) {
      Matrix trial(rows.rows() + 1, m);
      trial << rows, XS.row(i);
      Eigen::FullPivLU<Matrix> lu(trial);
      lu.setThreshold(1e-10);
      if (lu.rank() == trial.rows()) {
        rows = trial;
        Z.push_back(i);
        if (static_cast<Index>(Z.size()) == m) break;
      }
    }
  }
  if (static_cast<Index>(Z.size()) < m) {
    res.beta = Vector::Zero(data.p());
    for (Index j = 0; j < m; ++j) res.beta(S[static_cast<std::size_t>(j)]) = b(j);
    res.objective = r.lpNorm<1>();
    return res;
  }

  auto basis_matrix = [&]() {
    Matrix A(m, m);
    for (Index a = 0; a < m; ++a) A.row(a) = XS.row(Z[static_cast<std::size_t>(a)]);
    return A;
  };
  {
    Vector yz(m);
    for (Index a = 0; a < m; ++a) yz(a) = data.y(Z[static_cast<std::size_t>(a)]);
    b = basis_matrix().partialPivLu().solve(yz);
  }

  std::vector<char> in_basis(static_cast<std::size_t>(n), 0);
  for (Index i : Z) in_basis[static_cast<std::size_t>(i)] = 1;
  bool verified = false;
  for (int piv = 0; piv <= max_pivots; ++piv) {
    r = data.y - XS * b;
    for (Index i : Z) r(i) = 0.0;
    const Matrix A = basis_matrix();
    Eigen::PartialPivLU<Matrix> lu(A);
    // Dual multipliers of the basis rows.
    Vector rhs = Vector::Zero(m);
    for (Index i = 0; i < n; ++i)
      if (!in_basis[static_cast<std::size_t>(i)])
        rhs -= detail::sign_of(r(i), zero_tol) * XS.row(i).transpose();
    const Vector w = A.transpose().partialPivLu().solve(rhs);
    Index j;
    const double wmax = w.cwiseAbs().maxCoeff(&j);
    if (!std::isfinite(wmax)) break;
    if (wmax <= 1.0 + 1e-9) {
      verified = wmax <= 1.0 + 1e-6;
      break;
    }
    if (piv == max_pivots) break;
    Vector e = Vector::Zero(m);
    e(j) = w(j) > 0 ? -1.0 : 1.0;
    const Vector d = lu.solve(e);
    const Vector a = XS * d;
    // Slope of sum |r_i - t a_i| at t = 0+.
    double slope = 0.0;
    std::vector<std::pair<double, double>> kinks;  // (t, 2|a_i|)
    for (Index i = 0; i < n; ++i) {
      const int s = detail::sign_of(r(i), zero_tol);
      if (s == 0) {
        slope += std::abs(a(i));
      } else {
        slope -= s * a(i);
        if (a(i) != 0.0 && r(i) / a(i) > 0.0) kinks.emplace_back(r(i) / a(i), 2.0 * std::abs(a(i)));
      }
    }
    if (slope >= 0.0) break;
    std::sort(kinks.begin(), kinks.end());
    double t_star = -1.0;
    Index entering = -1;
    for (const auto& [t, w2] : kinks) {
      slope += w2;
      if (slope >= 0.0) {
        t_star = t;
        break;
      }
    }
    if (t_star < 0.0) break;
    // Entering row: the kink at t_star with the largest |a_i|.
    double best_a = -1.0;
    for (Index i = 0; i < n; ++i) {
      if (in_basis[static_cast<std::size_t>(i)] || a(i) == 0.0) continue;
      const int s = detail::sign_of(r(i), zero_tol);
      if (s == 0) continue;
      if (r(i) / a(i) == t_star && std::abs(a(i)) > best_a) {
        best_a = std::abs(a(i));
        entering = i;
      }
    }
    if (entering < 0) break;
    in_basis[static_cast<std::size_t>(Z[static_cast<std::size_t>(j)])] = 0;
    Z[static_cast<std::size_t>(j)] = entering;
    in_basis[static_cast<std::size_t>(entering)] = 1;
    // Re-solve on the new basis instead of accumulating b += t d.
    Vector yz(m);
    for (Index c = 0; c < m; ++c) yz(c) = data.y(Z[static_cast<std::size_t>(c)]);
    const Vector nb = basis_matrix().partialPivLu().solve(yz);
    b = nb.allFinite() ? nb : Vector(b + t_star * d);
    res.pivots = piv + 1;
  }
  for (Index c = 0; c < m; ++c) res.beta(S[static_cast<std::size_t>(c)]) = b(c);
  res.objective = lad_objective(data, res.beta);
  res.verified = verified;
  return res;
}

inline Vector lad_polish(const Dataset& data, const Support& S) {
  return lad_polish_certified(data, S).beta;
}

/// Smoothed LAD as a loss plugin; the exact LAD value ranks incumbents.
class SmoothedLadLoss {
 public:
  SmoothedLadLoss(Dataset data, double tau, double lambda_max = -1.0)
      : data_(std::make_shared<const Dataset>(std::move(data))), tau_(tau) {
    if (!(tau > 0.0)) fail(ErrorKind::SpecConflict, "tau must be positive");
    lambda_max_ = lambda_max > 0 ? lambda_max : spectral_bound(data_->X, 1e-10);
  }

  /// Same data at a different smoothing level (no refactorization).
  SmoothedLadLoss with_tau(double tau) const {
    SmoothedLadLoss out = *this;
    if (!(tau > 0.0)) fail(ErrorKind::SpecConflict, "tau must be positive");
    out.tau_ = tau;
    return out;
  }

  const Dataset& data() const { return *data_; }
  Index dim() const { return data_->p(); }
  double tau() const { return tau_; }
  double lambda_max() const { return lambda_max_; }
  double lipschitz() const { return lambda_max_ / tau_; }

  double value(const Vector& b) const { return smoothed_lad_value_grad(b, *data_, tau_).first; }
  Vector gradient(const Vector& b) const { return smoothed_lad_value_grad(b, *data_, tau_).second; }
  double evaluate(const Vector& b, Vector& grad) const {
    auto [v, g] = smoothed_lad_value_grad(b, *data_, tau_);
    grad = std::move(g);
    return v;
  }
  double objective(const Vector& b) const { return lad_objective(*data_, b); }
  Vector polish(const Support& s) const { return lad_polish(*data_, s); }

 private:
  std::shared_ptr<const Dataset> data_;
  double tau_;
  double lambda_max_ = 0.0;
};

struct LadContinuationConfig {
  double tau0 = -1.0;     ///< <= 0 selects max |y_i|
  double gamma = 0.8;
  double tol_tau = -1.0;  ///< <= 0 selects 1e-6 * tau0
  FirstOrderConfig inner;
  Vector beta0;           ///< empty selects zero
};

struct LadStage {
  double tau = 0.0;
  double exact_objective = 0.0;
  Support support;
};

/// Algorithm 2 on the smoothed loss for a decreasing sequence of tau, each
/// stage warm-started from the previous one, then an exact LAD polish.
inline SparseSolution lad_continuation(const Dataset& data, Index k,
                                       LadContinuationConfig cfg,
                                       std::vector<LadStage>* stages = nullptr) {
  double tau0 = cfg.tau0 > 0 ? cfg.tau0 : data.y.cwiseAbs().maxCoeff();
  if (!(tau0 > 0)) tau0 = 1.0;
  const double tol = cfg.tol_tau > 0 ? cfg.tol_tau : 1e-6 * tau0;
  if (!(tau0 > tol && tol > 0)) fail(ErrorKind::SpecConflict, "need tau0 > tol_tau > 0");
  if (!(cfg.gamma > 0 && cfg.gamma < 1)) fail(ErrorKind::SpecConflict, "gamma must lie in (0,1)");
  cfg.inner.polish = false;
  cfg.inner.L = 0.0;

  Vector beta = cfg.beta0.size() == data.p() ? cfg.beta0 : Vector::Zero(data.p());
  if (nnz(beta) > k) beta = hard_threshold(beta, k);
  SmoothedLadLoss loss(data, tau0);
  for (double tau = tau0; tau >= tol; tau *= cfg.gamma) {
    const SmoothedLadLoss stage = loss.with_tau(tau);
    beta = algorithm2(stage, k, beta, cfg.inner).beta;
    if (stages) stages->push_back({tau, lad_objective(data, beta), support_of(beta)});
  }
  const Vector polished = lad_polish(data, support_of(beta));
  return {polished, support_of(polished), lad_objective(data, polished), Provenance::polished};
}

struct LadLassoConfig {
  double tau0 = -1.0;
  double gamma = 0.8;
  double tol_tau = -1.0;
  int max_inner = 500;
  double eps = 1e-7;
  Vector beta0;
};

inline double lad_lasso_objective(const Dataset& data, const Vector& beta, double lambda) {
  return lad_objective(data, beta) + lambda * beta.lpNorm<1>();
}

/// ||y - X b||_1 + lambda ||b||_1 by accelerated proximal gradient on the
/// smoothed loss with tau continuation.
inline Vector lad_lasso(const Dataset& data, double lambda, const LadLassoConfig& cfg = {},
                        double lambda_max = -1.0) {
  if (!(lambda >= 0.0)) fail(ErrorKind::SpecConflict, "lambda must be nonnegative");
  double tau0 = cfg.tau0 > 0 ? cfg.tau0 : data.y.cwiseAbs().maxCoeff();
  if (!(tau0 > 0)) tau0 = 1.0;
  const double tol = cfg.tol_tau > 0 ? cfg.tol_tau : 1e-6 * tau0;
  const double lmax = lambda_max > 0 ? lambda_max : spectral_bound(data.X, 1e-10);
  auto soft = [](const Vector& v, double t) {
    return v.unaryExpr([t](double a) { return detail::shrink(a, t); }).eval();
  };
  auto objective = [&](const Vector& b, double tau) {
    return smoothed_lad_value_grad(b, data, tau).first + lambda * b.lpNorm<1>();
  };

  Vector x = cfg.beta0.size() == data.p() ? cfg.beta0 : Vector::Zero(data.p());
  Vector best = x;
  for (double tau = tau0; tau >= tol; tau *= cfg.gamma) {
    const double L = lmax / tau;
    Vector y = x;
    double t = 1.0;
    double fx = objective(x, tau);
    for (int it = 0; it < cfg.max_inner; ++it) {
      const Vector g = smoothed_lad_value_grad(y, data, tau).second;
      Vector xn = soft(y - g / L, lambda / L);
      const double fn = objective(xn, tau);
      const double step = (xn - x).norm();
      if (fn > fx) {
        // Restart momentum from the current point.
        t = 1.0;
        y = x;
        continue;
      }
      const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      y = xn + ((t - 1.0) / tn) * (xn - x);
      t = tn;
      x.swap(xn);
      fx = fn;
      if (step <= cfg.eps * (1.0 + x.norm())) break;
    }
  }
  return x;
}

/// Certified bounds for any LAD optimum with objective <= UB:
/// ||X b||_1 <= ||y||_1 + UB, and ||X b||_2 >= sqrt(eta_k) ||b||_2.
inline ParamBounds lad_certified_bounds(const Dataset& data, Index k, double UB) {
  const double R = data.y.lpNorm<1>() + UB;
  const double eta = data.p() <= 20 ? exact_restricted_eigenvalue(data, k)
                                    : coherence(data).eta_lower(k);
  ParamBounds b;
  b.provenance = BoundsProvenance::analytic;
  if (eta > 0.0) {
    b.beta_inf = R / std::sqrt(eta);
    b.beta_l1 = std::sqrt(static_cast<double>(k)) * R / std::sqrt(eta);
  }
  b.fit_l1 = R;
  b.fit_inf = R;
  b.valid_certificate = !std::isinf(b.beta_inf);
  return b;
}

/// Branch and bound on exact LAD: smoothed relaxations give valid lower
/// bounds because the smoothed loss never exceeds the exact one.
inline SolveReport lad_bnb(const SubsetProblem<SmoothedLadLoss>& prob,
                           const std::optional<SparseSolution>& warm = std::nullopt,
                           const BnbConfig& cfg = {}) {
  return bnb_solve(prob, warm, cfg);
}

/// Default relaxation smoothing: keeps the n*tau/2 slack under the gap.
inline double default_tau_relax(double gap_tol, double ub0, Index n) {
  const double t = gap_tol * ub0 / static_cast<double>(n);
  if (!(t > 0.0))
    fail(ErrorKind::SpecConflict, "tau_relax must be positive; set it explicitly when gap_tol = 0");
  return t;
}

}  // namespace bestsubset
