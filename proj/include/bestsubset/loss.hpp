#pragma once

#include <concepts>
#include <utility>

#include "bestsubset/linalg.hpp"

namespace bestsubset {

/// A smooth convex loss g with Lipschitz gradient.
template <class L>
concept LossPlugin = requires(const L& f, const Vector& b) {
  { f.dim() } -> std::convertible_to<Index>;
  { f.value(b) } -> std::convertible_to<double>;
  { f.gradient(b) } -> std::convertible_to<Vector>;
  { f.lipschitz() } -> std::convertible_to<double>;
};

/// Losses usable by the subset solvers: besides the smooth surrogate they
/// expose the exact objective used to rank incumbents, and the restricted
/// minimizer used for polishing.
template <class L>
concept SubsetLoss = LossPlugin<L> && requires(const L& f, const Vector& b,
                                               const Support& s) {
  { f.objective(b) } -> std::convertible_to<double>;
  { f.polish(s) } -> std::convertible_to<Vector>;
};

/// value and gradient in one pass when the plugin offers it.
template <LossPlugin L>
double value_and_gradient(const L& f, const Vector& b, Vector& grad) {
  if constexpr (requires { f.evaluate(b, grad); }) {
    return f.evaluate(b, grad);
  } else {
    grad = f.gradient(b);
    return f.value(b);
  }
}

/// Minimizer over t of g(b + t d).  Uses the plugin's closed form when
/// present, otherwise golden-section search on [0, 2] (48 iterations) with
/// t = 1 kept as a candidate so the result never loses to the endpoint.
template <LossPlugin L>
double line_minimizer(const L& f, const Vector& b, const Vector& d,
                      const Vector& grad) {
  if constexpr (requires { f.exact_line_search(b, d, grad); }) {
    return f.exact_line_search(b, d, grad);
  } else {
    constexpr double kPhi = 0.6180339887498949;
    auto g = [&](double t) { return f.value(b + t * d); };
    double lo = 0.0, hi = 2.0;
    double x1 = hi - kPhi * (hi - lo), x2 = lo + kPhi * (hi - lo);
    double f1 = g(x1), f2 = g(x2);
    for (int it = 0; it < 48; ++it) {
      if (f1 < f2) {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - kPhi * (hi - lo);
        f1 = g(x1);
      } else {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + kPhi * (hi - lo);
        f2 = g(x2);
      }
    }
    const double t = f1 < f2 ? x1 : x2;
    return std::min(f1, f2) < g(1.0) ? t : 1.0;
  }
}

/// g(b) = 0.5 ||y - X b||^2.
class LeastSquaresLoss {
 public:
  explicit LeastSquaresLoss(Dataset data, double spectral_tol = 1e-10)
      : data_(std::move(data)) {
    xty_ = data_.X.transpose() * data_.y;
    if (data_.p() <= data_.n()) gram_ = data_.X.transpose() * data_.X;
    try {
      ell_ = spectral_bound(data_.X, spectral_tol);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoConvergence) throw;
      // Gershgorin on the Gram matrix is a safe fallback.
      const Matrix G = data_.X.transpose() * data_.X;
      ell_ = G.cwiseAbs().rowwise().sum().maxCoeff();
    }
  }

  const Dataset& data() const { return data_; }
  Index dim() const { return data_.p(); }
  double lipschitz() const { return ell_; }

  Vector residual(const Vector& b) const {
    return data_.y - sparse_product(data_.X, b);
  }

  double value(const Vector& b) const { return 0.5 * residual(b).squaredNorm(); }

  Vector gradient(const Vector& b) const {
    if (gram_.size()) {
      Vector g = -xty_;
      for (Index j = 0; j < b.size(); ++j)
        if (b(j) != 0.0) g.noalias() += b(j) * gram_.col(j);
      return g;
    }
    return -(data_.X.transpose() * residual(b));
  }

  double evaluate(const Vector& b, Vector& grad) const {
    const Vector r = residual(b);
    if (gram_.size()) grad = gradient(b);
    else grad = -(data_.X.transpose() * r);
    return 0.5 * r.squaredNorm();
  }

  double objective(const Vector& b) const { return value(b); }

  Vector polish(const Support& s) const {
    return restricted_least_squares(data_, s);
  }

  /// argmin_t g(b + t d) = -<grad, d> / ||X d||^2.
  double exact_line_search(const Vector&, const Vector& d,
                           const Vector& grad) const {
    const double curv = sparse_product(data_.X, d).squaredNorm();
    if (curv <= 0.0) return 1.0;
    return -grad.dot(d) / curv;
  }

  double zero_value() const { return 0.5 * data_.y.squaredNorm(); }

 private:
  Dataset data_;
  Vector xty_;
  Matrix gram_;
  double ell_ = 0.0;
};

}  // namespace bestsubset
