#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "bestsubset/linalg.hpp"
#include "bestsubset/region.hpp"

namespace bestsubset {

struct RegularizationPath {
  std::vector<double> lambdas;  ///< strictly descending
  std::vector<Vector> solutions;
  std::vector<Support> supports;
  std::vector<bool> converged;
};

/// Log-spaced grid from ||X'y||_inf down to ratio times that.
inline std::vector<double> default_lambda_grid(const Dataset& data, int count = 100,
                                               double ratio = 1e-4) {
  const double top = (data.X.transpose() * data.y).cwiseAbs().maxCoeff();
  std::vector<double> out;
  if (count < 1 || !(top > 0.0)) return out;
  if (count == 1) return {top};
  for (int i = 0; i < count; ++i)
    out.push_back(top * std::pow(ratio, static_cast<double>(i) / (count - 1)));
  return out;
}

inline double lasso_objective(const Dataset& data, const Vector& beta, double lambda) {
  return 0.5 * (data.y - data.X * beta).squaredNorm() + lambda * beta.lpNorm<1>();
}

struct LassoConfig {
  double kkt_tol = 1e-6;
  int max_sweeps = 100000;
};

/// Largest KKT violation of the Lagrangian lasso at beta.
inline double lasso_kkt_residual(const Dataset& data, const Vector& beta, double lambda) {
  const Vector c = data.X.transpose() * (data.y - data.X * beta);
  double worst = 0.0;
  for (Index j = 0; j < beta.size(); ++j) {
    if (beta(j) != 0.0)
      worst = std::max(worst, std::abs(c(j) - lambda * (beta(j) > 0 ? 1.0 : -1.0)));
    else
      worst = std::max(worst, std::abs(c(j)) - lambda);
  }
  return worst;
}

/// Cyclic coordinate descent on 0.5||y - X b||^2 + lambda ||b||_1 along a
/// descending lambda path with warm starts.
inline RegularizationPath lasso_cd(const Dataset& data, const std::vector<double>& lambdas,
                                   const LassoConfig& cfg = {}) {
  for (std::size_t i = 1; i < lambdas.size(); ++i)
    if (!(lambdas[i] < lambdas[i - 1]))
      fail(ErrorKind::SpecConflict, "lambdas must be strictly descending");
  const Index p = data.p();
  const Vector col_sq = data.X.colwise().squaredNorm().transpose();
  RegularizationPath path;
  path.lambdas = lambdas;
  Vector beta = Vector::Zero(p);
  Vector r = data.y;
  const double top = (data.X.transpose() * data.y).cwiseAbs().maxCoeff();
  for (double lambda : lambdas) {
    if (lambda >= top) {
      // Zero satisfies the KKT conditions exactly here.
      beta.setZero();
      r = data.y;
      path.solutions.push_back(beta);
      path.supports.push_back({});
      path.converged.push_back(true);
      continue;
    }
    bool ok = false;
    for (int sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
      for (Index j = 0; j < p; ++j) {
        if (col_sq(j) == 0.0) continue;
        const double z = data.X.col(j).dot(r) + col_sq(j) * beta(j);
        const double nb = detail::shrink(z, lambda) / col_sq(j);
        if (nb != beta(j)) {
          r.noalias() -= (nb - beta(j)) * data.X.col(j);
          beta(j) = nb;
        }
      }
      if (sweep % 8 == 7) r = data.y - data.X * beta;  // limit drift
      if (lasso_kkt_residual(data, beta, lambda) <= cfg.kkt_tol) {
        ok = true;
        break;
      }
    }
    path.solutions.push_back(beta);
    path.supports.push_back(support_of(beta));
    path.converged.push_back(ok);
  }
  return path;
}

enum class DebiasVariant { at_optimal_lambda, per_lambda_path };

/// Least-squares refits on lasso supports.  at_optimal_lambda returns one
/// model (the path entry at selected_index); per_lambda_path one per lambda.
inline std::vector<Vector> debiased_lasso(const Dataset& data, const RegularizationPath& path,
                                          DebiasVariant variant,
                                          std::optional<std::size_t> selected_index = std::nullopt) {
  std::vector<Vector> out;
  if (variant == DebiasVariant::at_optimal_lambda) {
    if (!selected_index || *selected_index >= path.supports.size())
      fail(ErrorKind::SpecConflict, "at_optimal_lambda needs a valid selected index");
    out.push_back(restricted_least_squares(data, path.supports[*selected_index]));
    return out;
  }
  for (const auto& s : path.supports) out.push_back(restricted_least_squares(data, s));
  return out;
}

/// Greedy forward selection; model j (0-based) has j+1 features.
inline std::vector<Vector> forward_stepwise(const Dataset& data, Index k_max) {
  const Index p = data.p();
  if (k_max > std::min(data.n(), p))
    fail(ErrorKind::SpecConflict, "k_max must not exceed min(n, p)");
  Matrix R = data.X;  // columns orthogonalized against the selected span
  Vector r = data.y;
  std::vector<char> used(static_cast<std::size_t>(p), 0);
  Support S;
  std::vector<Vector> models;
  for (Index step = 0; step < k_max; ++step) {
    Index pick = -1;
    double best = -1.0;
    for (Index j = 0; j < p; ++j) {
      if (used[static_cast<std::size_t>(j)]) continue;
      const double nrm2 = R.col(j).squaredNorm();
      if (nrm2 <= 1e-12) continue;
      const double gain = std::pow(R.col(j).dot(r), 2) / nrm2;
      if (gain > best) {
        best = gain;
        pick = j;
      }
    }
    if (pick < 0) break;
    used[static_cast<std::size_t>(pick)] = 1;
    S.insert(std::upper_bound(S.begin(), S.end(), pick), pick);
    const Vector q = R.col(pick).normalized();
    r -= q.dot(r) * q;
    R -= q * (q.transpose() * R);
    models.push_back(restricted_least_squares(data, S));
  }
  return models;
}

}  // namespace bestsubset
