#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "bestsubset/error.hpp"

namespace bestsubset {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
/// Sorted, duplicate-free list of column indices.
using Support = std::vector<Index>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Dataset {
  Matrix X;
  Vector y;

  Index n() const { return X.rows(); }
  Index p() const { return X.cols(); }
};

/// Per-column affine map applied by standardize, so raw-unit coefficients
/// can be recovered as beta_raw_j = beta_j / scale_j.
struct ColumnScaling {
  Vector mean;
  Vector scale;
  double y_mean = 0.0;
  bool y_centered = false;
};

struct Standardized {
  Dataset data;
  ColumnScaling scaling;
};

inline void check_finite(const Matrix& X, const Vector& y) {
  if (!X.allFinite() || !y.allFinite())
    fail(ErrorKind::SpecConflict, "data contains NaN or Inf entries");
}

/// Center every column and scale it to unit Euclidean norm.
inline Standardized standardize(const Matrix& X_raw, const Vector& y_raw,
                                bool center_y = false) {
  if (X_raw.rows() != y_raw.size())
    fail(ErrorKind::SpecConflict, "X has " + std::to_string(X_raw.rows()) +
                                      " rows but y has " +
                                      std::to_string(y_raw.size()));
  if (X_raw.rows() < 1 || X_raw.cols() < 1)
    fail(ErrorKind::SpecConflict, "empty design matrix");
  check_finite(X_raw, y_raw);

  Standardized out;
  out.scaling.mean = X_raw.colwise().mean().transpose();
  out.data.X = X_raw.rowwise() - out.scaling.mean.transpose();
  out.scaling.scale = out.data.X.colwise().norm().transpose();
  for (Index j = 0; j < out.data.X.cols(); ++j) {
    if (out.scaling.scale(j) < 1e-12)
      throw Error(ErrorKind::ZeroVarianceColumn,
                  "column " + std::to_string(j) + " has zero variance");
    out.data.X.col(j) /= out.scaling.scale(j);
  }
  out.data.y = y_raw;
  out.scaling.y_centered = center_y;
  if (center_y) {
    out.scaling.y_mean = y_raw.mean();
    out.data.y.array() -= out.scaling.y_mean;
  }
  return out;
}

/// Throws SpecConflict unless the dataset satisfies the standardized layout.
inline void validate(const Dataset& d, double tol = 1e-10) {
  if (d.X.rows() != d.y.size())
    fail(ErrorKind::SpecConflict, "X rows and y length differ");
  if (d.n() < 1 || d.p() < 1) fail(ErrorKind::SpecConflict, "empty dataset");
  check_finite(d.X, d.y);
  for (Index j = 0; j < d.p(); ++j) {
    const double m = d.X.col(j).mean();
    const double nrm = d.X.col(j).norm();
    if (std::abs(m) > tol || std::abs(nrm - 1.0) > tol)
      fail(ErrorKind::SpecConflict,
           "column " + std::to_string(j) + " is not standardized");
  }
}

/// Upper estimate of lambda_max(X'X) by power iteration.  The Rayleigh
/// quotient is accepted once the eigen-residual drops below tol, then
/// inflated by (1+tol).
inline double spectral_bound(const Matrix& X, double tol = 1e-8,
                             int max_iter = -1) {
  const Index p = X.cols();
  if (max_iter < 0) max_iter = static_cast<int>(10 * p + 1000);
  if (X.size() == 0 || X.cwiseAbs().maxCoeff() == 0.0)
    fail(ErrorKind::SpecConflict, "spectral_bound of a zero matrix");

  // Gram product is cheaper when p <= n.
  const bool use_gram = p <= X.rows();
  Matrix G;
  if (use_gram) G = X.transpose() * X;
  auto apply = [&](const Vector& v) -> Vector {
    if (use_gram) return G * v;
    return X.transpose() * (X * v);
  };

  Vector v(p);
  for (Index i = 0; i < p; ++i) v(i) = 1.0 + 0.5 * std::sin(1.0 + i);
  v.normalize();
  for (int it = 0; it < max_iter; ++it) {
    Vector Av = apply(v);
    const double rho = v.dot(Av);
    const double res = (Av - rho * v).norm();
    if (rho > 0 && res <= tol * rho) return rho * (1.0 + tol);
    const double nrm = Av.norm();
    if (nrm == 0.0) fail(ErrorKind::NoConvergence, "power iteration collapsed");
    v = Av / nrm;
  }
  throw Error(ErrorKind::NoConvergence,
              "power iteration hit its cap of " + std::to_string(max_iter));
}

/// Gathers the columns of X indexed by S.
inline Matrix columns(const Matrix& X, const Support& S) {
  Matrix out(X.rows(), static_cast<Index>(S.size()));
  for (std::size_t j = 0; j < S.size(); ++j) out.col(j) = X.col(S[j]);
  return out;
}

/// Indices of the nonzero entries of b.
inline Support support_of(const Vector& b) {
  Support s;
  for (Index i = 0; i < b.size(); ++i)
    if (b(i) != 0.0) s.push_back(i);
  return s;
}

inline Index nnz(const Vector& b) {
  return static_cast<Index>((b.array() != 0.0).count());
}

/// X*b touching only the nonzero coordinates.
inline Vector sparse_product(const Matrix& X, const Vector& b) {
  Vector out = Vector::Zero(X.rows());
  for (Index j = 0; j < b.size(); ++j)
    if (b(j) != 0.0) out.noalias() += b(j) * X.col(j);
  return out;
}

/// Minimizer of 0.5*||y - X b||^2 with b zero off S; minimum-norm when the
/// restricted design is rank deficient.
inline Vector restricted_least_squares(const Dataset& data, const Support& S) {
  Vector beta = Vector::Zero(data.p());
  if (S.empty()) return beta;
  const Matrix XS = columns(data.X, S);
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(XS);
  const Vector bS = cod.solve(data.y);
  for (std::size_t j = 0; j < S.size(); ++j) beta(S[j]) = bS(j);
  return beta;
}

/// 64-bit FNV-1a over raw bytes; used for support fingerprints and config
/// hashes.
inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t h = 1469598103934665603ULL) {
  const auto* b = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= b[i];
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t support_fingerprint(const Support& S) {
  std::uint64_t h = 1469598103934665603ULL;
  for (Index i : S) {
    const std::int64_t v = static_cast<std::int64_t>(i);
    h = fnv1a(&v, sizeof v, h);
  }
  return h;
}

}  // namespace bestsubset
