#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "bestsubset/loss.hpp"
#include "bestsubset/rng.hpp"

namespace bestsubset {

enum class Provenance { first_order, polished, bnb_incumbent, warm_start };

inline const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::first_order: return "first_order";
    case Provenance::polished: return "polished";
    case Provenance::bnb_incumbent: return "bnb_incumbent";
    case Provenance::warm_start: return "warm_start";
  }
  return "unknown";
}

struct SparseSolution {
  Vector beta;
  Support support;
  double objective = kInf;
  Provenance provenance = Provenance::first_order;
};

struct FirstOrderConfig {
  double L = 0.0;  ///< step constant; 0 selects 1.001 * lipschitz()
  double eps = 1e-4;
  int max_iter = 1000;
  bool polish = true;
  std::uint64_t seed = 0;
  bool record_history = false;
  std::string trace_path;  ///< JSON-lines trace, appended when nonempty
  int threads = 1;         ///< multi_start workers
};

struct IterationRecord {
  int iteration = 0;
  double objective = 0.0;  ///< g at the new iterate
  double step_norm = 0.0;
  std::uint64_t support_fingerprint = 0;
  double min_abs_nonzero = 0.0;  ///< smallest |b_i| on the support, 0 if empty
};

inline double min_abs_nonzero(const Vector& b) {
  double m = kInf;
  for (Index i = 0; i < b.size(); ++i)
    if (b(i) != 0.0) m = std::min(m, std::abs(b(i)));
  return std::isinf(m) ? 0.0 : m;
}

struct StationaryPoint {
  Vector beta;
  Support support;
  double objective = kInf;
  int iterations = 0;
  bool converged = false;
  double stationarity_residual = kInf;
  double L = 0.0;
  double initial_objective = kInf;
  std::vector<IterationRecord> history;
};

inline SparseSolution to_solution(const StationaryPoint& sp, bool polished) {
  return {sp.beta, sp.support, sp.objective,
          polished ? Provenance::polished : Provenance::first_order};
}

/// Indices of the k largest |c_i|; ties keep the smaller index.  Sorted.
inline Support top_k_support(const Vector& c, Index k) {
  const Index p = c.size();
  if (k < 0 || k > p)
    fail(ErrorKind::SpecConflict, "k=" + std::to_string(k) + " outside [0, p]");
  std::vector<Index> idx(static_cast<std::size_t>(p));
  std::iota(idx.begin(), idx.end(), Index{0});
  auto before = [&](Index a, Index b) {
    const double fa = std::abs(c(a)), fb = std::abs(c(b));
    return fa > fb || (fa == fb && a < b);
  };
  if (k < p) std::nth_element(idx.begin(), idx.begin() + k, idx.end(), before);
  Support s(idx.begin(), idx.begin() + k);
  std::sort(s.begin(), s.end());
  return s;
}

/// Canonical element of H_k(c).
inline Vector hard_threshold(const Vector& c, Index k) {
  Vector out = Vector::Zero(c.size());
  for (Index i : top_k_support(c, k)) out(i) = c(i);
  return out;
}

namespace detail {

inline std::mutex& trace_mutex() {
  static std::mutex m;
  return m;
}

inline void write_trace(const std::string& path, const char* algorithm,
                        int start, const std::vector<IterationRecord>& hist) {
  if (path.empty()) return;
  std::lock_guard<std::mutex> lock(trace_mutex());
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error(ErrorKind::IoError, "cannot open trace file " + path);
  char buf[320];
  for (const auto& r : hist) {
    std::snprintf(buf, sizeof buf,
                  "{\"algorithm\":\"%s\",\"start\":%d,\"iteration\":%d,"
                  "\"objective\":%.17g,\"step_norm\":%.17g,"
                  "\"support_fingerprint\":\"%016llx\"}\n",
                  algorithm, start, r.iteration, r.objective, r.step_norm,
                  static_cast<unsigned long long>(r.support_fingerprint));
    out << buf;
  }
}

template <LossPlugin Loss>
double resolve_step_constant(const Loss& loss, const FirstOrderConfig& cfg) {
  const double ell = loss.lipschitz();
  const double L = cfg.L > 0.0 ? cfg.L : 1.001 * ell;
  if (!(L > ell))
    fail(ErrorKind::SpecConflict, "step constant L must exceed the Lipschitz constant");
  if (!(cfg.eps > 0.0)) fail(ErrorKind::SpecConflict, "eps must be positive");
  return L;
}

template <LossPlugin Loss>
void finish(const Loss& loss, Index k, double L, bool polish,
            StationaryPoint& sp) {
  if (polish) {
    if constexpr (SubsetLoss<Loss>) {
      sp.beta = loss.polish(support_of(sp.beta));
      // A rank-deficient polish may spread mass; keep k-sparsity.
      if (nnz(sp.beta) > k) sp.beta = hard_threshold(sp.beta, k);
    }
  }
  sp.support = support_of(sp.beta);
  if constexpr (SubsetLoss<Loss>) sp.objective = loss.objective(sp.beta);
  else sp.objective = loss.value(sp.beta);
  const Vector g = loss.gradient(sp.beta);
  sp.stationarity_residual = (sp.beta - hard_threshold(sp.beta - g / L, k)).norm();
  sp.L = L;
}

}  // namespace detail

/// Projected gradient with hard thresholding:
/// b <- H_k(b - grad g(b) / L) until the step is at most eps.
template <LossPlugin Loss>
StationaryPoint algorithm1(const Loss& loss, Index k, const Vector& beta1,
                           const FirstOrderConfig& cfg, int start_index = 0) {
  if (nnz(beta1) > k) fail(ErrorKind::NotKSparse, "beta1 has more than k nonzeros");
  const double L = detail::resolve_step_constant(loss, cfg);
  const bool keep = cfg.record_history || !cfg.trace_path.empty();

  StationaryPoint sp;
  Vector beta = beta1, grad;
  double val = value_and_gradient(loss, beta, grad);
  sp.initial_objective = val;
  for (int m = 1; m <= cfg.max_iter; ++m) {
    Vector next = hard_threshold(beta - grad / L, k);
    const double step = (next - beta).norm();
    beta.swap(next);
    val = value_and_gradient(loss, beta, grad);
    sp.iterations = m;
    if (keep)
      sp.history.push_back({m, val, step, support_fingerprint(support_of(beta)), min_abs_nonzero(beta)});
    if (step <= cfg.eps) {
      sp.converged = true;
      break;
    }
  }
  sp.beta = beta;
  detail::write_trace(cfg.trace_path, "algorithm1", start_index, sp.history);
  if (!cfg.record_history) sp.history.clear();
  detail::finish(loss, k, L, cfg.polish, sp);
  return sp;
}

/// Algorithm 1 with an exact line search between b_m and the thresholded
/// point eta_m.  Returns the best eta_m seen.
template <LossPlugin Loss>
StationaryPoint algorithm2(const Loss& loss, Index k, const Vector& beta1,
                           const FirstOrderConfig& cfg, int start_index = 0) {
  const double L = detail::resolve_step_constant(loss, cfg);
  const bool keep = cfg.record_history || !cfg.trace_path.empty();

  StationaryPoint sp;
  Vector beta = beta1, grad;
  double val = value_and_gradient(loss, beta, grad);
  sp.initial_objective = val;
  Vector best_eta = hard_threshold(beta, k);
  double best_val = loss.value(best_eta);
  for (int m = 1; m <= cfg.max_iter; ++m) {
    Vector eta = hard_threshold(beta - grad / L, k);
    const double eta_val = loss.value(eta);
    if (eta_val < best_val) {
      best_val = eta_val;
      best_eta = eta;
    }
    const Vector d = eta - beta;
    const double t = line_minimizer(loss, beta, d, grad);
    Vector next = beta + t * d;
    Vector next_grad;
    double next_val = value_and_gradient(loss, next, next_grad);
    if (next_val > eta_val) {
      next = eta;
      next_val = value_and_gradient(loss, next, next_grad);
    }
    const double step = (next - beta).norm();
    beta.swap(next);
    grad.swap(next_grad);
    val = next_val;
    sp.iterations = m;
    if (keep)
      sp.history.push_back({m, val, step, support_fingerprint(support_of(eta)), min_abs_nonzero(eta)});
    if (step <= cfg.eps) {
      sp.converged = true;
      break;
    }
  }
  sp.beta = best_eta;
  detail::write_trace(cfg.trace_path, "algorithm2", start_index, sp.history);
  if (!cfg.record_history) sp.history.clear();
  detail::finish(loss, k, L, cfg.polish, sp);
  return sp;
}

/// Start i (1-based) of multi_start: zero for i = 1, N(0, 4I) otherwise.
inline Vector multi_start_point(Index p, std::uint64_t seed, int i) {
  if (i <= 1) return Vector::Zero(p);
  CounterRng rng(seed, static_cast<std::uint64_t>(i));
  return rng.normal_vector(p, 2.0);
}

/// Best of algorithm2 runs from n_starts deterministic starting points.
template <LossPlugin Loss>
StationaryPoint multi_start(const Loss& loss, Index k, int n_starts,
                            const FirstOrderConfig& cfg) {
  if (n_starts < 1) fail(ErrorKind::SpecConflict, "n_starts must be >= 1");
  std::vector<StationaryPoint> runs(static_cast<std::size_t>(n_starts));
  auto run_one = [&](int i) {
    runs[static_cast<std::size_t>(i - 1)] =
        algorithm2(loss, k, multi_start_point(loss.dim(), cfg.seed, i), cfg, i);
  };
  const int workers = std::max(1, std::min(cfg.threads, n_starts));
  if (workers == 1) {
    for (int i = 1; i <= n_starts; ++i) run_one(i);
  } else {
    std::atomic<int> next{1};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          for (int i = next++; i <= n_starts; i = next++) run_one(i);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < runs.size(); ++i)
    if (runs[i].objective < runs[best].objective) best = i;
  return runs[best];
}

struct StationarityCheck {
  bool is_eps_stationary = false;
  double residual = kInf;
};

template <LossPlugin Loss>
StationarityCheck check_stationarity(const Vector& beta, const Loss& loss,
                                     Index k, double L, double eps) {
  if (nnz(beta) > k) fail(ErrorKind::NotKSparse, "beta has more than k nonzeros");
  const Vector g = loss.gradient(beta);
  const double r = (beta - hard_threshold(beta - g / L, k)).norm();
  return {r <= eps, r};
}

}  // namespace bestsubset
