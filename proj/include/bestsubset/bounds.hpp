#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "bestsubset/linalg.hpp"

namespace bestsubset {

struct CoherenceProfile {
  double mu = 0.0;

  double mu_cumulative_upper(Index k) const { return mu * static_cast<double>(k); }
  double eta_lower(Index k) const { return 1.0 - mu * static_cast<double>(k - 1); }
};

inline CoherenceProfile coherence(const Dataset& data) {
  const Matrix G = data.X.transpose() * data.X;
  double mu = 0.0;
  for (Index j = 0; j < G.cols(); ++j)
    for (Index i = 0; i < j; ++i) mu = std::max(mu, std::abs(G(i, j)));
  return {mu};
}

/// Exact cumulative coherence mu[k] = max_j max_{|I|=k, j not in I}
/// sum_{i in I} |<X_i, X_j>|.  The inner maximum is the k largest entries
/// of row j, so this is cheap.
inline double exact_cumulative_coherence(const Dataset& data, Index k) {
  const Matrix G = data.X.transpose() * data.X;
  const Index p = G.cols();
  double best = 0.0;
  std::vector<double> row;
  for (Index j = 0; j < p; ++j) {
    row.clear();
    for (Index i = 0; i < p; ++i)
      if (i != j) row.push_back(std::abs(G(i, j)));
    const auto kk = static_cast<std::size_t>(std::min<Index>(k, p - 1));
    std::partial_sort(row.begin(), row.begin() + kk, row.end(), std::greater<>());
    double s = 0.0;
    for (std::size_t i = 0; i < kk; ++i) s += row[i];
    best = std::max(best, s);
  }
  return best;
}

/// Smallest eigenvalue over all k-column Gram submatrices, by enumeration.
inline double exact_restricted_eigenvalue(const Dataset& data, Index k) {
  const Index p = data.p();
  if (p > 20) fail(ErrorKind::SpecConflict, "exact eta_k enumeration limited to p <= 20");
  k = std::min(k, p);
  const Matrix G = data.X.transpose() * data.X;
  double best = kInf;
  std::vector<Index> idx(static_cast<std::size_t>(k));
  std::function<void(Index, Index)> rec = [&](Index pos, Index from) {
    if (pos == k) {
      Matrix S(k, k);
      for (Index a = 0; a < k; ++a)
        for (Index b = 0; b < k; ++b) S(a, b) = G(idx[a], idx[b]);
      Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
      best = std::min(best, es.eigenvalues()(0));
      return;
    }
    for (Index i = from; i <= p - (k - pos); ++i) {
      idx[pos] = i;
      rec(pos + 1, i + 1);
    }
  };
  rec(0, 0);
  return best;
}

enum class BoundsProvenance { analytic, qp, warmstart };

inline const char* to_string(BoundsProvenance p) {
  switch (p) {
    case BoundsProvenance::analytic: return "analytic";
    case BoundsProvenance::qp: return "qp";
    case BoundsProvenance::warmstart: return "warmstart";
  }
  return "unknown";
}

using Interval = std::pair<double, double>;

struct ParamBounds {
  double beta_inf = kInf;  ///< M_U
  double beta_l1 = kInf;   ///< M_l
  double fit_inf = kInf;   ///< M_U^zeta
  double fit_l1 = kInf;    ///< M_l^zeta
  std::optional<std::vector<Interval>> per_coord_beta;
  std::optional<std::vector<Interval>> per_coord_fit;
  BoundsProvenance provenance = BoundsProvenance::analytic;
  bool valid_certificate = false;

  /// Box for coordinate i: per-coordinate interval clipped to [-M_U, M_U].
  Interval beta_box(Index i) const {
    double lo = -beta_inf, hi = beta_inf;
    if (per_coord_beta) {
      lo = std::max(lo, (*per_coord_beta)[static_cast<std::size_t>(i)].first);
      hi = std::min(hi, (*per_coord_beta)[static_cast<std::size_t>(i)].second);
    }
    return {lo, hi};
  }
};

namespace detail {

inline double sum_top_k(std::vector<double> v, Index k) {
  const auto kk = static_cast<std::size_t>(std::min<Index>(k, static_cast<Index>(v.size())));
  std::partial_sort(v.begin(), v.begin() + kk, v.end(), std::greater<>());
  double s = 0.0;
  for (std::size_t i = 0; i < kk; ++i) s += v[i];
  return s;
}

// Fit bounds from beta bounds.  The second l1 branch uses sqrt(n): the
// fitted vector X b = P_I y lies in R^n, so ||X b||_1 <= sqrt(n) ||y||_2.
inline void fill_fit_bounds(const Dataset& data, Index k, ParamBounds& b) {
  double row_inf_sum = 0.0, max_row_topk = 0.0;
  std::vector<double> row(static_cast<std::size_t>(data.p()));
  for (Index i = 0; i < data.n(); ++i) {
    for (Index j = 0; j < data.p(); ++j)
      row[static_cast<std::size_t>(j)] = std::abs(data.X(i, j));
    row_inf_sum += *std::max_element(row.begin(), row.end());
    max_row_topk = std::max(max_row_topk, sum_top_k(row, k));
  }
  const double via_beta = std::isinf(b.beta_l1) ? kInf : row_inf_sum * b.beta_l1;
  b.fit_l1 = std::min(via_beta, std::sqrt(static_cast<double>(data.n())) * data.y.norm());
  b.fit_inf = std::isinf(b.beta_inf) ? kInf : max_row_topk * b.beta_inf;
}

}  // namespace detail

struct AnalyticOptions {
  /// Use exact mu[k-1] (always cheap) instead of mu*(k-1), and exact eta_k
  /// when p <= 20.
  bool exact_coherence = false;
};

/// Coherence-based bounds on any optimal k-sparse least-squares solution.
inline ParamBounds analytic_bounds(const Dataset& data, Index k,
                                   const AnalyticOptions& opt = {}) {
  if (k < 1) fail(ErrorKind::SpecConflict, "k must be >= 1");
  const CoherenceProfile prof = coherence(data);
  double mu_hat = prof.mu * static_cast<double>(k - 1);
  double eta_hat = 1.0 - mu_hat;
  if (opt.exact_coherence) {
    mu_hat = exact_cumulative_coherence(data, k - 1);
    eta_hat = data.p() <= 20 ? exact_restricted_eigenvalue(data, k) : 1.0 - mu_hat;
  }

  const Vector corr = (data.X.transpose() * data.y).cwiseAbs();
  std::vector<double> c(corr.data(), corr.data() + corr.size());
  std::vector<double> c2(c.size());
  std::transform(c.begin(), c.end(), c2.begin(), [](double v) { return v * v; });
  const double top_l1 = detail::sum_top_k(c, k);
  const double top_l2 = std::sqrt(detail::sum_top_k(c2, k));

  ParamBounds b;
  b.provenance = BoundsProvenance::analytic;
  // Round-off can leave mu_hat a hair under 1 for duplicated columns.
  constexpr double margin = 1e-12;
  if (mu_hat < 1.0 - margin) b.beta_l1 = top_l1 / (1.0 - mu_hat);
  if (eta_hat > margin)
    b.beta_inf = std::min(top_l2 / eta_hat, data.y.norm() / std::sqrt(eta_hat));
  // ||b||_1 <= k ||b||_inf for k-sparse b.
  if (!std::isinf(b.beta_inf))
    b.beta_l1 = std::min(b.beta_l1, static_cast<double>(k) * b.beta_inf);
  detail::fill_fit_bounds(data, k, b);
  b.valid_certificate = !std::isinf(b.beta_inf);
  return b;
}

/// Shared factorizations for the level-set bounds
/// {b : 0.5 ||y - X b||^2 <= UB}.
class QpBoundContext {
 public:
  explicit QpBoundContext(const Dataset& data) : data_(&data) {
    Eigen::JacobiSVD<Matrix> svd(data.X, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    const double cutoff = s.size() ? s(0) * 1e-12 * std::max(data.n(), data.p()) : 0.0;
    rank_ = 0;
    for (Index i = 0; i < s.size(); ++i)
      if (s(i) > cutoff) ++rank_;
    const Matrix U = svd.matrixU().leftCols(rank_);
    fitted_ = U * (U.transpose() * data.y);
    proj_diag_ = U.rowwise().squaredNorm();
    rss_ = (data.y - fitted_).squaredNorm();
    full_column_rank_ = rank_ == data.p() && data.n() > data.p();
    if (full_column_rank_) {
      const Matrix V = svd.matrixV();
      const Vector sinv2 = s.head(rank_).array().inverse().square();
      inv_gram_diag_ = (V.array().square().rowwise() * sinv2.transpose().array())
                           .rowwise()
                           .sum();
      Vector coef = V * (sinv2.asDiagonal() * (V.transpose() * (data.X.transpose() * data.y)));
      ols_ = coef;
    }
  }

  double rss() const { return rss_; }
  double min_objective() const { return 0.5 * rss_; }
  bool has_beta_route() const { return full_column_rank_; }
  const Vector& ols() const { return ols_; }

  Interval beta(Index i, double UB) const {
    if (!full_column_rank_)
      fail(ErrorKind::SingularGram, "X'X is not invertible (need n > p, full rank)");
    const double r = radius(UB);
    const double w = std::sqrt(r * inv_gram_diag_(i));
    return {ols_(i) - w, ols_(i) + w};
  }

  Interval fit(Index i, double UB) const {
    const double r = radius(UB);
    const double w = std::sqrt(r * proj_diag_(i));
    return {fitted_(i) - w, fitted_(i) + w};
  }

 private:
  // Squared radius 2 UB - RSS of the level-set slice.
  double radius(double UB) const {
    const double r = 2.0 * UB - rss_;
    const double slack = 1e-12 * std::max(1.0, data_->y.squaredNorm());
    if (r < -slack)
      fail(ErrorKind::InfeasibleUB, "UB is below the least-squares minimum");
    return std::max(r, 0.0);
  }

  const Dataset* data_;
  Index rank_ = 0;
  Vector fitted_, proj_diag_, inv_gram_diag_, ols_;
  double rss_ = 0.0;
  bool full_column_rank_ = false;
};

/// Range of beta_i over the UB level set (closed form).
inline Interval qp_bound_beta(const Dataset& data, Index i, double UB) {
  return QpBoundContext(data).beta(i, UB);
}

/// Range of <x_i, beta> over the UB level set.
inline Interval qp_bound_fit(const Dataset& data, Index i, double UB) {
  return QpBoundContext(data).fit(i, UB);
}

inline ParamBounds assemble_qp_bounds(
    const std::optional<std::vector<Interval>>& per_coord_beta,
    const std::optional<std::vector<Interval>>& per_coord_fit, Index k) {
  if (!per_coord_beta && !per_coord_fit)
    fail(ErrorKind::SpecConflict, "assemble_qp_bounds needs at least one family");
  ParamBounds b;
  b.provenance = BoundsProvenance::qp;
  b.valid_certificate = true;
  if (per_coord_beta) {
    std::vector<double> m;
    for (const auto& [lo, hi] : *per_coord_beta) m.push_back(std::max(std::abs(lo), std::abs(hi)));
    b.beta_inf = m.empty() ? 0.0 : *std::max_element(m.begin(), m.end());
    b.beta_l1 = detail::sum_top_k(m, k);
    b.per_coord_beta = per_coord_beta;
  }
  if (per_coord_fit) {
    double mx = 0.0, sum = 0.0;
    for (const auto& [lo, hi] : *per_coord_fit) {
      const double v = std::max(std::abs(lo), std::abs(hi));
      mx = std::max(mx, v);
      sum += v;
    }
    b.fit_inf = mx;
    b.fit_l1 = sum;
    b.per_coord_fit = per_coord_fit;
  }
  b.valid_certificate = per_coord_beta.has_value();
  return b;
}

/// Per-coordinate level-set bounds for every coordinate and sample, then
/// assembled.  The beta family is skipped when X'X is singular.
inline ParamBounds qp_bounds(const Dataset& data, Index k, double UB) {
  const QpBoundContext ctx(data);
  std::optional<std::vector<Interval>> pb, pf;
  if (ctx.has_beta_route()) {
    pb.emplace();
    for (Index i = 0; i < data.p(); ++i) pb->push_back(ctx.beta(i, UB));
  }
  pf.emplace();
  for (Index i = 0; i < data.n(); ++i) pf->push_back(ctx.fit(i, UB));
  return assemble_qp_bounds(pb, pf, k);
}

/// Heuristic box around an incumbent: M_U = tau ||b||_inf, M_l = k M_U.
inline ParamBounds warmstart_bounds(const Vector& beta_hyb, double tau, Index k,
                                    const Dataset& data) {
  if (!(tau > 1.0)) fail(ErrorKind::SpecConflict, "tau must exceed 1");
  ParamBounds b;
  b.provenance = BoundsProvenance::warmstart;
  b.beta_inf = tau * beta_hyb.cwiseAbs().maxCoeff();
  b.beta_l1 = static_cast<double>(k) * b.beta_inf;
  detail::fill_fit_bounds(data, k, b);
  b.valid_certificate = false;
  return b;
}

}  // namespace bestsubset
