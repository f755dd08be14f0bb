#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "bestsubset/baselines.hpp"
#include "bestsubset/bounds.hpp"
#include "bestsubset/first_order.hpp"
#include "bestsubset/lad.hpp"
#include "bestsubset/miqp.hpp"
#include "bestsubset/rng.hpp"

namespace bestsubset {

enum class Example { Ex1, Ex2, Ex3, Ex4 };
enum class Noise { gaussian, laplace };

inline const char* to_string(Example e) {
  switch (e) {
    case Example::Ex1: return "Ex1";
    case Example::Ex2: return "Ex2";
    case Example::Ex3: return "Ex3";
    case Example::Ex4: return "Ex4";
  }
  return "unknown";
}

inline const char* to_string(Noise n) { return n == Noise::gaussian ? "gaussian" : "laplace"; }

struct SyntheticSpec {
  Example example = Example::Ex1;
  Index n = 100;
  Index p = 20;
  double rho = 0.0;  ///< Ex1 only
  Index k0 = 5;      ///< 0 takes the example's fixed value
  double snr = 1.0;
  Noise noise = Noise::gaussian;
  std::uint64_t seed = 0;
};

/// Ex2/Ex3/Ex4 pin k0.  Throws SpecConflict on any violated invariant.
inline SyntheticSpec normalized(SyntheticSpec s) {
  Index fixed = 0;
  if (s.example == Example::Ex2) fixed = 5;
  if (s.example == Example::Ex3) fixed = 10;
  if (s.example == Example::Ex4) fixed = 6;
  if (fixed) {
    if (s.k0 != 0 && s.k0 != fixed)
      fail(ErrorKind::SpecConflict, std::string(to_string(s.example)) + " requires k0=" +
                                        std::to_string(fixed));
    s.k0 = fixed;
    s.rho = 0.0;
  }
  if (s.n < 2 || s.p < 1) fail(ErrorKind::SpecConflict, "need n >= 2 and p >= 1");
  if (s.k0 < 1 || s.k0 > s.p) fail(ErrorKind::SpecConflict, "k0 must lie in [1, p]");
  if (!(s.rho >= 0.0 && s.rho < 1.0)) fail(ErrorKind::SpecConflict, "rho must lie in [0, 1)");
  if (!(s.snr > 0.0) || std::isinf(s.snr)) fail(ErrorKind::SpecConflict, "snr must be positive");
  return s;
}

/// Ex1 nonzero positions (0-based): ceil(1 + (j-1)(p-1)/(k0-1)) - 1.
inline Support ex1_support(Index p, Index k0) {
  Support s;
  for (Index j = 1; j <= k0; ++j) {
    const double pos = k0 == 1 ? 1.0
                               : 1.0 + static_cast<double>((j - 1) * (p - 1)) /
                                           static_cast<double>(k0 - 1);
    s.push_back(static_cast<Index>(std::ceil(pos - 1e-12)) - 1);
  }
  return s;
}

inline Vector true_coefficients(const SyntheticSpec& s) {
  Vector b = Vector::Zero(s.p);
  switch (s.example) {
    case Example::Ex1:
      for (Index i : ex1_support(s.p, s.k0)) b(i) = 1.0;
      break;
    case Example::Ex2:
      b.head(5).setOnes();
      break;
    case Example::Ex3:
      for (Index i = 0; i < 10; ++i)
        b(i) = 0.5 + (10.0 - 0.5) * static_cast<double>(i) / static_cast<double>(s.k0);
      break;
    case Example::Ex4:
      b.head(6) << -10, -6, -2, 2, 6, 10;
      break;
  }
  return b;
}

/// b' Sigma b with Sigma_ij = rho^|i-j| (identity when rho = 0).
inline double signal_variance(const Vector& b, double rho) {
  double v = 0.0;
  const Index p = b.size();
  for (Index i = 0; i < p; ++i) {
    if (b(i) == 0.0) continue;
    for (Index j = 0; j < p; ++j)
      if (b(j) != 0.0) v += b(i) * b(j) * std::pow(rho, static_cast<double>(std::abs(i - j)));
  }
  return v;
}

struct SyntheticData {
  Dataset data;       ///< standardized X, y = X beta0_std + eps
  Vector beta0;       ///< raw-scale coefficients
  Vector beta0_std;   ///< beta0 times the column norms of the centered design
  double sigma = 0.0;
  double signal_var = 0.0;
  ColumnScaling scaling;
  SyntheticSpec spec;
};

inline constexpr const char* kDataConvention =
    "y = X_std * beta0_std + eps, X_std centered unit-norm columns, "
    "beta0_std = beta0 .* raw centered column norms";

/// Rows x_i ~ N(0, Sigma) from stream 1 of the seed; AR(1) recursion for Ex1.
inline Matrix draw_design(const SyntheticSpec& s) {
  CounterRng rng(s.seed, 1);
  Matrix X(s.n, s.p);
  const double c = std::sqrt(1.0 - s.rho * s.rho);
  for (Index i = 0; i < s.n; ++i) {
    double prev = rng.normal();
    X(i, 0) = prev;
    for (Index j = 1; j < s.p; ++j) {
      prev = s.rho * prev + c * rng.normal();
      X(i, j) = prev;
    }
  }
  return X;
}

/// Noise with variance sigma^2; stream 2 is training, 3 is validation.
inline Vector draw_noise(Index n, double sigma, Noise kind, std::uint64_t seed,
                         std::uint64_t stream) {
  CounterRng rng(seed, stream);
  Vector e(n);
  const double b = sigma / std::sqrt(2.0);
  for (Index i = 0; i < n; ++i) e(i) = kind == Noise::gaussian ? sigma * rng.normal() : rng.laplace(b);
  return e;
}

inline SyntheticData gen_synthetic(const SyntheticSpec& spec_in) {
  const SyntheticSpec s = normalized(spec_in);
  SyntheticData out;
  out.spec = s;
  out.beta0 = true_coefficients(s);
  out.signal_var = signal_variance(out.beta0, s.rho);
  out.sigma = std::sqrt(out.signal_var / s.snr);
  const Matrix X = draw_design(s);
  Standardized st = standardize(X, Vector::Zero(s.n));
  out.scaling = st.scaling;
  out.beta0_std = out.beta0.cwiseProduct(st.scaling.scale);
  out.data.X = std::move(st.data.X);
  out.data.y = out.data.X * out.beta0_std + draw_noise(s.n, out.sigma, s.noise, s.seed, 2);
  return out;
}

/// ||X b - X b0||^2 / ||X b0||^2.
inline double prediction_error(const Vector& beta_hat, const Vector& beta0, const Matrix& X) {
  const Vector signal = X * beta0;
  const double den = signal.squaredNorm();
  if (!(den > 0.0)) fail(ErrorKind::ZeroSignal, "X beta0 is zero");
  return (X * beta_hat - signal).squaredNorm() / den;
}

inline double relative_accuracy(double f_alg, double f_star) {
  if (!(f_star > 0.0)) fail(ErrorKind::NonpositiveReference, "f_star must be positive");
  return (f_alg - f_star) / f_star;
}

/// Ten equi-spaced values of k in [3, 2 k0] rounded, plus k0, capped at kmax.
inline std::vector<Index> default_k_grid(Index k0, Index kmax) {
  std::set<Index> ks{std::min(k0, kmax)};
  const double lo = std::min<double>(3.0, static_cast<double>(2 * k0));
  const double hi = static_cast<double>(2 * k0);
  for (int i = 0; i < 10; ++i) {
    const Index k = static_cast<Index>(std::lround(lo + (hi - lo) * i / 9.0));
    if (k >= 1) ks.insert(std::min(k, kmax));
  }
  return {ks.begin(), ks.end()};
}

enum class Method {
  mio,
  fo,
  lasso,
  debiased_lasso,
  debiased_lasso_path,
  stepwise,
  lad_mio,
  lad_fo,
  lad_lasso
};

inline const char* to_string(Method m) {
  switch (m) {
    case Method::mio: return "mio";
    case Method::fo: return "fo";
    case Method::lasso: return "lasso";
    case Method::debiased_lasso: return "debiased_lasso";
    case Method::debiased_lasso_path: return "debiased_lasso_path";
    case Method::stepwise: return "stepwise";
    case Method::lad_mio: return "lad_mio";
    case Method::lad_fo: return "lad_fo";
    case Method::lad_lasso: return "lad_lasso";
  }
  return "unknown";
}

inline Method method_from_string(const std::string& s) {
  for (Method m : {Method::mio, Method::fo, Method::lasso, Method::debiased_lasso,
                   Method::debiased_lasso_path, Method::stepwise, Method::lad_mio,
                   Method::lad_fo, Method::lad_lasso})
    if (s == to_string(m)) return m;
  fail(ErrorKind::ConfigError, "unknown method '" + s + "'");
}

inline bool is_lad_method(Method m) {
  return m == Method::lad_mio || m == Method::lad_fo || m == Method::lad_lasso;
}

struct ComparisonConfig {
  int fo_starts = 50;
  long mio_node_limit = 5000;
  double mio_time_limit_s = kInf;
  double mio_gap_tol = 1e-4;
  long lad_node_limit = 50;
  double lad_warm_tau = 2.0;
  int lasso_grid = 100;
  int lad_lasso_grid = 30;
  int threads = 1;
  bool record_time = true;
};

struct ExperimentResult {
  std::string method;
  int replication = 0;
  double tuning = 0.0;  ///< selected k, or selected lambda for Lasso variants
  Index selected_k = 0;
  double prediction_error = 0.0;
  double objective = 0.0;  ///< training loss of the selected model
  double seconds = 0.0;
  std::string error;  ///< nonempty when the cell failed
};

namespace detail {

struct Candidate {
  double tuning;
  Vector beta;
};

inline std::vector<Candidate> fit_ls_subset(Method m, const Dataset& d,
                                            const std::vector<Index>& ks,
                                            const ComparisonConfig& cfg) {
  std::vector<Candidate> out;
  LeastSquaresLoss loss(d);
  FirstOrderConfig fc;
  for (Index k : ks) {
    const StationaryPoint sp = multi_start(loss, k, cfg.fo_starts, fc);
    if (m == Method::fo) {
      out.push_back({static_cast<double>(k), sp.beta});
      continue;
    }
    SubsetProblem<LeastSquaresLoss> prob{loss, k, qp_bounds(d, k, sp.objective), {}, {}};
    BnbConfig bc;
    bc.node_limit = cfg.mio_node_limit;
    bc.time_limit_s = cfg.mio_time_limit_s;
    bc.gap_tol = cfg.mio_gap_tol;
    const SolveReport r = bnb_solve(prob, std::optional<SparseSolution>(to_solution(sp, true)), bc);
    out.push_back({static_cast<double>(k), r.has_incumbent ? r.incumbent.beta : sp.beta});
  }
  return out;
}

inline std::vector<Candidate> fit_lad_subset(Method m, const Dataset& d,
                                             const std::vector<Index>& ks,
                                             const ComparisonConfig& cfg) {
  std::vector<Candidate> out;
  for (Index k : ks) {
    const SparseSolution fo = lad_continuation(d, k, {});
    if (m == Method::lad_fo) {
      out.push_back({static_cast<double>(k), fo.beta});
      continue;
    }
    const double tau = fo.objective > 0 ? 1e-2 * fo.objective / static_cast<double>(d.n()) : 1e-6;
    SmoothedLadLoss loss(d, tau);
    SubsetProblem<SmoothedLadLoss> prob{loss, k, warmstart_bounds(fo.beta, cfg.lad_warm_tau, k, d),
                                        {}, {}};
    BnbConfig bc;
    bc.node_limit = cfg.lad_node_limit;
    bc.time_limit_s = cfg.mio_time_limit_s;
    bc.gap_tol = 1e-2;
    const SolveReport r = lad_bnb(prob, fo, bc);
    out.push_back({static_cast<double>(k), r.has_incumbent ? r.incumbent.beta : fo.beta});
  }
  return out;
}

/// Log-spaced LAD-Lasso grid from ||X' sign(y)||_inf down to 1e-3 of it.
inline std::vector<double> lad_lambda_grid(const Dataset& d, int count) {
  const Vector s = d.y.unaryExpr([](double v) { return double((v > 0) - (v < 0)); });
  const double top = (d.X.transpose() * s).cwiseAbs().maxCoeff();
  std::vector<double> out;
  for (int i = 0; i < count; ++i)
    out.push_back(top * std::pow(1e-3, count == 1 ? 0.0 : static_cast<double>(i) / (count - 1)));
  return out;
}

inline std::vector<Candidate> fit_method(Method m, const Dataset& d, const std::vector<Index>& ks,
                                         const Vector& y_val, const ComparisonConfig& cfg) {
  switch (m) {
    case Method::mio:
    case Method::fo:
      return fit_ls_subset(m, d, ks, cfg);
    case Method::lad_mio:
    case Method::lad_fo:
      return fit_lad_subset(m, d, ks, cfg);
    case Method::stepwise: {
      const Index kmax = *std::max_element(ks.begin(), ks.end());
      const auto models = forward_stepwise(d, kmax);
      std::vector<Candidate> out;
      for (Index k : ks)
        if (k >= 1 && k <= static_cast<Index>(models.size()))
          out.push_back({static_cast<double>(k), models[static_cast<std::size_t>(k - 1)]});
      return out;
    }
    case Method::lasso:
    case Method::debiased_lasso:
    case Method::debiased_lasso_path: {
      const auto grid = default_lambda_grid(d, cfg.lasso_grid);
      const RegularizationPath path = lasso_cd(d, grid);
      std::vector<Candidate> out;
      if (m == Method::lasso || m == Method::debiased_lasso) {
        for (std::size_t i = 0; i < grid.size(); ++i) out.push_back({grid[i], path.solutions[i]});
        if (m == Method::lasso) return out;
        // Debias at the lambda the Lasso itself would pick.
        std::size_t best = 0;
        double best_v = kInf;
        for (std::size_t i = 0; i < out.size(); ++i) {
          const double v = 0.5 * (y_val - d.X * out[i].beta).squaredNorm();
          if (v < best_v) {
            best_v = v;
            best = i;
          }
        }
        return {{grid[best], debiased_lasso(d, path, DebiasVariant::at_optimal_lambda, best)[0]}};
      }
      const auto refits = debiased_lasso(d, path, DebiasVariant::per_lambda_path);
      for (std::size_t i = 0; i < grid.size(); ++i) out.push_back({grid[i], refits[i]});
      return out;
    }
    case Method::lad_lasso: {
      std::vector<Candidate> out;
      LadLassoConfig lc;
      const double lmax = spectral_bound(d.X, 1e-10);
      for (double lambda : lad_lambda_grid(d, cfg.lad_lasso_grid)) {
        lc.beta0 = out.empty() ? Vector() : out.back().beta;
        Vector b = lad_lasso(d, lambda, lc, lmax);
        // Entries below the smoothing resolution are numerical zeros.
        for (Index j = 0; j < b.size(); ++j)
          if (std::abs(b(j)) <= 1e-8 * (1.0 + b.cwiseAbs().maxCoeff())) b(j) = 0.0;
        out.push_back({lambda, b});
      }
      return out;
    }
  }
  return {};
}

}  // namespace detail

/// One replication: fixed X, fresh training and validation noise.
/// Every method sees only (training data, validation y).
inline std::vector<ExperimentResult> run_comparison(const SyntheticSpec& spec,
                                                    const std::vector<Method>& methods,
                                                    std::vector<Index> k_grid, int replications,
                                                    const ComparisonConfig& cfg = {}) {
  if (methods.empty()) fail(ErrorKind::SpecConflict, "methods must be nonempty");
  if (replications < 1) fail(ErrorKind::SpecConflict, "replications must be >= 1");
  const SyntheticSpec base = normalized(spec);
  const Index kmax = std::min(base.n, base.p);
  if (k_grid.empty()) k_grid = default_k_grid(base.k0, kmax);
  for (Index k : k_grid)
    if (k < 1 || k > kmax) fail(ErrorKind::SpecConflict, "k grid entry outside [1, min(n, p)]");

  struct Cell {
    int rep;
    std::size_t method;
  };
  std::vector<Cell> cells;
  for (int r = 0; r < replications; ++r)
    for (std::size_t m = 0; m < methods.size(); ++m) cells.push_back({r, m});
  std::vector<ExperimentResult> results(cells.size());

  auto run_cell = [&](std::size_t c) {
    const Cell cell = cells[c];
    const Method method = methods[cell.method];
    ExperimentResult& res = results[c];
    res.method = to_string(method);
    res.replication = cell.rep;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      SyntheticSpec s = base;
      s.seed = CounterRng::mix(base.seed + static_cast<std::uint64_t>(cell.rep));
      const SyntheticData syn = gen_synthetic(s);
      const Dataset& d = syn.data;
      const Vector y_val =
          d.X * syn.beta0_std + draw_noise(d.n(), syn.sigma, s.noise, s.seed, 3);
      const bool lad = is_lad_method(method);
      auto val_loss = [&](const Vector& b) {
        const Vector r = y_val - d.X * b;
        return lad ? r.lpNorm<1>() : 0.5 * r.squaredNorm();
      };
      const auto cands = detail::fit_method(method, d, k_grid, y_val, cfg);
      if (cands.empty()) fail(ErrorKind::SpecConflict, "method produced no candidates");
      std::size_t best = 0;
      double best_v = kInf;
      for (std::size_t i = 0; i < cands.size(); ++i) {
        const double v = val_loss(cands[i].beta);
        if (v < best_v) {
          best_v = v;
          best = i;
        }
      }
      const Vector& b = cands[best].beta;
      res.tuning = cands[best].tuning;
      res.selected_k = nnz(b);
      res.prediction_error = prediction_error(b, syn.beta0_std, d.X);
      res.objective = lad ? lad_objective(d, b) : 0.5 * (d.y - d.X * b).squaredNorm();
    } catch (const std::exception& e) {
      res.error = e.what();
      res.tuning = res.prediction_error = res.objective = std::nan("");
      res.selected_k = -1;
    }
    if (cfg.record_time)
      res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  const int workers = std::max(1, std::min<int>(cfg.threads, static_cast<int>(cells.size())));
  if (workers == 1) {
    for (std::size_t c = 0; c < cells.size(); ++c) run_cell(c);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t c = next++; c < cells.size(); c = next++) run_cell(c);
      });
    for (auto& t : pool) t.join();
  }
  // Cells are laid out by (replication, method) already.
  return results;
}

struct MethodSummary {
  std::string method;
  int count = 0;
  int failures = 0;
  double mean_k = 0.0, stderr_k = 0.0;
  double mean_pe = 0.0, stderr_pe = 0.0;
};

/// Mean and sample-stddev / sqrt(m) of a metric.
inline std::pair<double, double> mean_stderr(const std::vector<double>& v) {
  if (v.empty()) return {std::nan(""), std::nan("")};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  return {mean, sd / std::sqrt(static_cast<double>(v.size()))};
}

/// Summaries in first-appearance order of the methods.
inline std::vector<MethodSummary> summarize(const std::vector<ExperimentResult>& rs) {
  std::vector<MethodSummary> out;
  for (const auto& r : rs) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const MethodSummary& s) { return s.method == r.method; });
    if (it == out.end()) {
      out.push_back({r.method});
      it = out.end() - 1;
    }
  }
  for (auto& s : out) {
    std::vector<double> ks, pes;
    for (const auto& r : rs) {
      if (r.method != s.method) continue;
      if (!r.error.empty()) {
        ++s.failures;
        continue;
      }
      ks.push_back(static_cast<double>(r.selected_k));
      pes.push_back(r.prediction_error);
    }
    s.count = static_cast<int>(ks.size());
    std::tie(s.mean_k, s.stderr_k) = mean_stderr(ks);
    std::tie(s.mean_pe, s.stderr_pe) = mean_stderr(pes);
  }
  return out;
}

/// digits = 0 gives the shortest text that reads back to the same double.
inline std::string fmt_g(double v, int digits = 0) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  if (digits > 0) {
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
  }
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::string results_csv(const std::vector<ExperimentResult>& rs) {
  std::string out = "method,rep,k_or_lambda,nnz,pred_err,objective,seconds\n";
  for (const auto& r : rs) {
    out += r.method + "," + std::to_string(r.replication) + "," + fmt_g(r.tuning) + "," +
           std::to_string(r.selected_k) + "," + fmt_g(r.prediction_error) + "," +
           fmt_g(r.objective) + "," + fmt_g(r.seconds) + "\n";
  }
  return out;
}

/// Markdown table with "mean (stderr)" cells.
inline std::string summary_markdown(const std::vector<MethodSummary>& ss) {
  auto cell = [](double m, double se) { return fmt_g(m, 4) + " (" + fmt_g(se, 3) + ")"; };
  std::string out = "| method | reps | failures | nonzeros | prediction error |\n";
  out += "|---|---|---|---|---|\n";
  for (const auto& s : ss)
    out += "| " + s.method + " | " + std::to_string(s.count) + " | " + std::to_string(s.failures) +
           " | " + cell(s.mean_k, s.stderr_k) + " | " + cell(s.mean_pe, s.stderr_pe) + " |\n";
  return out;
}

}  // namespace bestsubset
