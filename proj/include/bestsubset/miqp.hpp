#pragma once

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <queue>
#include <set>
#include <thread>
#include <vector>

#include "bestsubset/bounds.hpp"
#include "bestsubset/first_order.hpp"
#include "bestsubset/region.hpp"

namespace bestsubset {

struct BetaBox {
  Vector center;
  double radius = kInf;
};

struct FitBox {
  Vector center;  ///< length n, typically X * beta0
  double radius = kInf;
};

/// Loss, sparsity level and parameter bounds for the branch and bound.
/// The loss also carries the dataset (loss.data()).
template <SubsetLoss Loss>
struct SubsetProblem {
  Loss loss;
  Index k = 1;
  ParamBounds bounds;
  std::optional<BetaBox> beta_box;
  std::optional<FitBox> fit_box;

  const Dataset& data() const { return loss.data(); }
  Index p() const { return loss.dim(); }
};

struct Node {
  Support fixed_one;
  Support fixed_zero;
  double lb = -kInf;
  int depth = 0;
  Vector relax_solution;  ///< parent's relaxation, used as warm start
  long id = 0;
};

enum class SolveStatus { optimal, gap_reached, time_limit, node_limit };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::gap_reached: return "gap_reached";
    case SolveStatus::time_limit: return "time_limit";
    case SolveStatus::node_limit: return "node_limit";
  }
  return "unknown";
}

enum class BranchRule { max_abs, most_fractional };

struct BnbConfig {
  double time_limit_s = kInf;
  double gap_tol = 1e-4;
  double node_tol = -1.0;  ///< < 0 selects 1e-8 * (1 + g(0))
  long node_limit = std::numeric_limits<long>::max();
  bool parallel = false;
  int threads = 0;  ///< workers when parallel; 0 = hardware concurrency
  std::uint64_t seed = 0;
  BranchRule branching = BranchRule::max_abs;
  int max_relax_iter = 20000;
  double prune_tol = 1e-9;
  double feas_tol = 1e-7;
};

struct TimelineEntry {
  double elapsed_s = 0.0;
  double ub = kInf;
  double lb = -kInf;
  long nodes = 0;
};

struct SolveReport {
  SparseSolution incumbent;
  bool has_incumbent = false;
  double lower_bound = -kInf;
  double gap = kInf;
  long nodes_explored = 0;
  std::vector<TimelineEntry> timeline;
  SolveStatus status = SolveStatus::optimal;
  double elapsed_s = 0.0;
};

inline double relative_gap(double ub, double lb) {
  if (std::isinf(ub) || std::isinf(lb)) return kInf;
  return std::max(0.0, ub - lb) / std::max(std::abs(ub), 1e-10);
}

inline bool contains_index(const Support& s, Index i) {
  return std::binary_search(s.begin(), s.end(), i);
}

/// Relaxed feasible set of a node: fixed-zero coordinates pinned at 0,
/// per-coordinate boxes elsewhere, an l1 budget over free coordinates,
/// and the beta box when configured.
template <SubsetLoss Loss>
FeasibleRegion node_region(const Node& node, const SubsetProblem<Loss>& prob) {
  const Index p = prob.p();
  const ParamBounds& B = prob.bounds;
  FeasibleRegion R;
  R.lower.resize(p);
  R.upper.resize(p);
  L1Ball budget;
  budget.center = Vector::Zero(p);
  budget.mask.assign(static_cast<std::size_t>(p), 0);
  double one_min_l1 = 0.0;
  bool any_free = false;
  for (Index i = 0; i < p; ++i) {
    auto [lo, hi] = B.beta_box(i);
    if (contains_index(node.fixed_zero, i)) {
      if (lo > 0.0 || hi < 0.0)
        fail(ErrorKind::EmptyRegion, "fixed-zero coordinate excluded by its box");
      lo = hi = 0.0;
    } else if (contains_index(node.fixed_one, i)) {
      one_min_l1 += detail::dist_to_interval(0.0, lo, hi);
    } else {
      budget.mask[static_cast<std::size_t>(i)] = 1;
      any_free = true;
    }
    R.lower(i) = lo;
    R.upper(i) = hi;
  }
  const double remaining = static_cast<double>(prob.k - static_cast<Index>(node.fixed_one.size()));
  budget.radius = std::min(B.beta_inf * remaining, B.beta_l1 - one_min_l1);
  if (budget.radius < 0.0) fail(ErrorKind::EmptyRegion, "l1 budget exhausted");
  if (any_free && !std::isinf(budget.radius)) R.balls.push_back(std::move(budget));
  if (prob.beta_box && !std::isinf(prob.beta_box->radius)) {
    L1Ball box;
    box.center = prob.beta_box->center;
    box.radius = prob.beta_box->radius;
    R.balls.push_back(std::move(box));
  }
  check_region(R);
  return R;
}

struct NodeRelaxation {
  Vector beta;
  double lb = -kInf;
  double value = kInf;
  double gap = kInf;
  int iterations = 0;
  bool cutoff = false;  ///< stopped because lb reached the cutoff
};

template <SubsetLoss Loss>
double default_node_tol(const SubsetProblem<Loss>& prob) {
  return 1e-8 * (1.0 + prob.loss.value(Vector::Zero(prob.p())));
}

/// Accelerated projected gradient (step 1/L, adaptive restart) on the node
/// region.  The returned lb = g(b) - <grad g(b), b - s> with s minimizing
/// the linear model is a valid lower bound for any iterate.
template <SubsetLoss Loss>
NodeRelaxation solve_node_relaxation(const Node& node,
                                     const SubsetProblem<Loss>& prob,
                                     const BnbConfig& cfg = {},
                                     double cutoff = kInf) {
  const FeasibleRegion R = node_region(node, prob);
  const double node_tol = cfg.node_tol >= 0 ? cfg.node_tol : default_node_tol(prob);
  const double L = prob.loss.lipschitz();
  const Index p = prob.p();

  Vector x = project(node.relax_solution.size() == p ? node.relax_solution
                                                     : Vector::Zero(p),
                     R);
  Vector y = x, gy, gx;
  double t = 1.0;
  NodeRelaxation out;
  constexpr int kCheckEvery = 5;
  for (int it = 0;; ++it) {
    if (it % kCheckEvery == 0 || it >= cfg.max_relax_iter) {
      const double val = value_and_gradient(prob.loss, x, gx);
      const double G = std::max(0.0, gx.dot(x) - linear_min_bound(gx, R));
      const double lb = val - G;
      if (lb > out.lb) out.lb = lb;
      out.beta = x;
      out.value = val;
      out.gap = G;
      out.iterations = it;
      if (G <= node_tol || it >= cfg.max_relax_iter) break;
      if (out.lb >= cutoff) {
        out.cutoff = true;
        break;
      }
    }
    value_and_gradient(prob.loss, y, gy);
    Vector xn = project(y - gy / L, R);
    if ((y - xn).dot(xn - x) > 0.0) {
      t = 1.0;
      y = xn;
    } else {
      const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      y = xn + ((t - 1.0) / tn) * (xn - x);
      t = tn;
    }
    x.swap(xn);
  }
  return out;
}

/// Feasibility of a k-sparse candidate against every bound and box.
template <SubsetLoss Loss>
bool is_feasible(const Vector& beta, const SubsetProblem<Loss>& prob,
                 double tol = 1e-7) {
  const ParamBounds& B = prob.bounds;
  if (nnz(beta) > prob.k) return false;
  auto slack = [&](double bound) { return tol * (1.0 + std::abs(bound)); };
  for (Index i = 0; i < beta.size(); ++i) {
    if (beta(i) == 0.0) continue;
    const auto [lo, hi] = B.beta_box(i);
    if (beta(i) < lo - slack(lo) || beta(i) > hi + slack(hi)) return false;
  }
  if (beta.lpNorm<1>() > B.beta_l1 + slack(B.beta_l1)) return false;
  if (prob.beta_box &&
      (beta - prob.beta_box->center).template lpNorm<1>() >
          prob.beta_box->radius + slack(prob.beta_box->radius))
    return false;
  const bool need_fit = !std::isinf(B.fit_inf) || !std::isinf(B.fit_l1) ||
                        B.per_coord_fit || prob.fit_box;
  if (!need_fit) return true;
  const Vector z = sparse_product(prob.data().X, beta);
  if (z.lpNorm<Eigen::Infinity>() > B.fit_inf + slack(B.fit_inf)) return false;
  if (z.lpNorm<1>() > B.fit_l1 + slack(B.fit_l1)) return false;
  if (B.per_coord_fit)
    for (Index i = 0; i < z.size(); ++i) {
      const auto [lo, hi] = (*B.per_coord_fit)[static_cast<std::size_t>(i)];
      if (z(i) < lo - slack(lo) || z(i) > hi + slack(hi)) return false;
    }
  if (prob.fit_box &&
      (z - prob.fit_box->center).template lpNorm<1>() >
          prob.fit_box->radius + slack(prob.fit_box->radius))
    return false;
  return true;
}

/// Top-k support of the relaxation, re-fit on that support; nullopt when
/// the candidate violates a constraint.
template <SubsetLoss Loss>
std::optional<SparseSolution> round_and_polish(const Vector& beta_rel,
                                               const SubsetProblem<Loss>& prob,
                                               double tol = 1e-7) {
  const Index k = std::min(prob.k, nnz(beta_rel));
  Vector beta = prob.loss.polish(top_k_support(beta_rel, k));
  if (nnz(beta) > prob.k) beta = hard_threshold(beta, prob.k);
  if (!is_feasible(beta, prob, tol)) return std::nullopt;
  return SparseSolution{beta, support_of(beta), prob.loss.objective(beta),
                        Provenance::bnb_incumbent};
}

/// Splits on a free coordinate; nullopt when no free coordinate is nonzero.
template <SubsetLoss Loss>
std::optional<std::pair<Node, Node>> branch(const Node& node, const Vector& beta_rel,
                                            const SubsetProblem<Loss>& prob,
                                            BranchRule rule = BranchRule::max_abs) {
  if (static_cast<Index>(node.fixed_one.size()) >= prob.k) return std::nullopt;
  Index pick = -1;
  double best = 0.0;
  for (Index i = 0; i < beta_rel.size(); ++i) {
    if (beta_rel(i) == 0.0 || contains_index(node.fixed_one, i) ||
        contains_index(node.fixed_zero, i))
      continue;
    double score;
    if (rule == BranchRule::max_abs) {
      score = std::abs(beta_rel(i));
    } else {
      const auto [lo, hi] = prob.bounds.beta_box(i);
      const double m = std::max(std::abs(lo), std::abs(hi));
      const double z = m > 0 ? std::abs(beta_rel(i)) / m : 1.0;
      score = 1.0 - std::abs(z - 0.5);
    }
    if (pick < 0 || score > best) {
      pick = i;
      best = score;
    }
  }
  if (pick < 0) return std::nullopt;
  Node zero, one;
  zero.fixed_one = one.fixed_one = node.fixed_one;
  zero.fixed_zero = one.fixed_zero = node.fixed_zero;
  zero.fixed_zero.insert(std::upper_bound(zero.fixed_zero.begin(), zero.fixed_zero.end(), pick), pick);
  one.fixed_one.insert(std::upper_bound(one.fixed_one.begin(), one.fixed_one.end(), pick), pick);
  zero.lb = one.lb = node.lb;
  zero.depth = one.depth = node.depth + 1;
  zero.relax_solution = one.relax_solution = beta_rel;
  return std::make_pair(std::move(zero), std::move(one));
}

namespace detail {

struct NodeOrder {
  // Priority queue pops the "largest": invert for smallest lb first, then
  // deeper, then earlier insertion.
  bool operator()(const Node& a, const Node& b) const {
    if (a.lb != b.lb) return a.lb > b.lb;
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.id > b.id;
  }
};

template <SubsetLoss Loss>
class BnbEngine {
 public:
  BnbEngine(const SubsetProblem<Loss>& prob, const BnbConfig& cfg)
      : prob_(prob), cfg_(cfg), start_(std::chrono::steady_clock::now()) {}

  SolveReport run(const std::optional<SparseSolution>& warm) {
    validate();
    Node root;
    root.id = next_id_++;
    node_region(root, prob_);  // EmptyRegion at the root propagates
    queue_.push(root);
    if (warm && warm->beta.size() == prob_.p() && is_feasible(warm->beta, prob_, cfg_.feas_tol)) {
      SparseSolution w = *warm;
      w.objective = prob_.loss.objective(w.beta);
      w.support = support_of(w.beta);
      w.provenance = Provenance::warm_start;
      offer(w);
    }

    int workers = 1;
    if (cfg_.parallel) {
      workers = cfg_.threads > 0 ? cfg_.threads
                                 : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    }
    if (workers == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int w = 0; w < workers; ++w) pool.emplace_back([this] { worker(); });
      for (auto& t : pool) t.join();
    }
    if (error_) std::rethrow_exception(error_);
    return finish();
  }

 private:
  using Clock = std::chrono::steady_clock;

  void validate() const {
    const ParamBounds& B = prob_.bounds;
    if (prob_.k < 1 || prob_.k > prob_.p())
      fail(ErrorKind::SpecConflict, "k must lie in [1, p]");
    if (std::isinf(B.beta_inf))
      fail(ErrorKind::DegenerateBounds, "branch and bound needs a finite beta_inf");
    if (!(B.beta_inf > 0.0))
      fail(ErrorKind::DegenerateBounds, "beta_inf is zero: degenerate region");
    if (prob_.beta_box && !(prob_.beta_box->radius > 0.0))
      fail(ErrorKind::SpecConflict, "beta box radius must be positive");
    if (prob_.fit_box && !(prob_.fit_box->radius > 0.0))
      fail(ErrorKind::SpecConflict, "fit box radius must be positive");
  }

  double elapsed() const {
    return std::chrono::duration<double>(Clock::now() - start_).count();
  }

  // Caller holds the lock (or runs single-threaded before workers start).
  void offer(const SparseSolution& s) {
    if (!has_incumbent_ || s.objective < incumbent_.objective) {
      incumbent_ = s;
      has_incumbent_ = true;
      record();
    }
  }

  double ub() const { return has_incumbent_ ? incumbent_.objective : kInf; }

  double current_lb() const {
    double lb = queue_.empty() ? kInf : queue_.top().lb;
    if (!in_flight_.empty()) lb = std::min(lb, *in_flight_.begin());
    return std::min(lb, ub());
  }

  void record() {
    const double lb = std::max(last_lb_, std::min(current_lb(), ub()));
    if (!timeline_.empty() && timeline_.back().ub == ub() && timeline_.back().lb == lb) return;
    last_lb_ = lb;
    timeline_.push_back({elapsed(), ub(), lb, nodes_});
  }

  bool gap_closed(double lb) const {
    const double u = ub();
    if (std::isinf(u)) return false;
    return lb >= u - cfg_.gap_tol * std::max(std::abs(u), 1e-10);
  }

  void worker() {
    std::unique_lock<std::mutex> lock(mu_);
    while (!stop_) {
      if (queue_.empty()) {
        if (in_flight_.empty()) {
          stop_ = true;
          status_ = SolveStatus::optimal;
          cv_.notify_all();
          break;
        }
        cv_.wait(lock);
        continue;
      }
      const double lb = current_lb();
      if (lb > last_lb_) record();
      if (in_flight_.empty() && gap_closed(lb)) {
        stop_ = true;
        status_ = lb >= ub() - cfg_.prune_tol ? SolveStatus::optimal : SolveStatus::gap_reached;
        cv_.notify_all();
        break;
      }
      if (nodes_ >= cfg_.node_limit) {
        stop_ = true;
        status_ = SolveStatus::node_limit;
        cv_.notify_all();
        break;
      }
      if (elapsed() >= cfg_.time_limit_s) {
        stop_ = true;
        status_ = SolveStatus::time_limit;
        cv_.notify_all();
        break;
      }
      Node node = queue_.top();
      queue_.pop();
      if (node.lb >= ub() - cfg_.prune_tol) continue;
      ++nodes_;
      auto slot = in_flight_.insert(node.lb);
      const double cutoff = ub() - cfg_.prune_tol;
      lock.unlock();

      std::vector<SparseSolution> found;
      std::optional<std::pair<Node, Node>> kids;
      try {
        kids = expand(node, cutoff, found);
      } catch (...) {
        lock.lock();
        if (!error_) error_ = std::current_exception();
        stop_ = true;
        in_flight_.erase(slot);
        cv_.notify_all();
        break;
      }

      lock.lock();
      for (const auto& s : found) offer(s);
      if (kids && kids->first.lb < ub() - cfg_.prune_tol) {
        kids->second.id = next_id_++;
        kids->first.id = next_id_++;
        queue_.push(std::move(kids->second));
        queue_.push(std::move(kids->first));
      }
      in_flight_.erase(slot);
      cv_.notify_all();
    }
  }

  // Evaluates a node outside the lock.  Returns children to enqueue.
  std::optional<std::pair<Node, Node>> expand(Node& node, double cutoff,
                                              std::vector<SparseSolution>& found) {
    NodeRelaxation rel;
    try {
      rel = solve_node_relaxation(node, prob_, cfg_, cutoff);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::EmptyRegion) return std::nullopt;
      throw;
    }
    node.lb = std::max(node.lb, rel.lb);
    if (node.lb >= cutoff) return std::nullopt;
    if (auto cand = round_and_polish(rel.beta, prob_, cfg_.feas_tol)) found.push_back(*cand);
    if (nnz(rel.beta) <= prob_.k) {
      if (is_feasible(rel.beta, prob_, cfg_.feas_tol))
        found.push_back({rel.beta, support_of(rel.beta), prob_.loss.objective(rel.beta),
                         Provenance::bnb_incumbent});
      return std::nullopt;
    }
    return branch(node, rel.beta, prob_, cfg_.branching);
  }

  SolveReport finish() {
    SolveReport r;
    r.has_incumbent = has_incumbent_;
    r.incumbent = incumbent_;
    if (!has_incumbent_) r.incumbent.objective = kInf;
    if (status_ == SolveStatus::optimal) {
      r.lower_bound = ub();
    } else {
      r.lower_bound = std::max(last_lb_, current_lb());
    }
    if (!std::isinf(ub())) r.lower_bound = std::min(r.lower_bound, ub());
    r.status = status_;
    r.nodes_explored = nodes_;
    r.elapsed_s = elapsed();
    r.gap = relative_gap(ub(), r.lower_bound);
    if (timeline_.empty() || timeline_.back().ub != ub() || timeline_.back().lb != r.lower_bound ||
        timeline_.back().nodes != nodes_)
      timeline_.push_back({r.elapsed_s, ub(), r.lower_bound, nodes_});
    r.timeline = std::move(timeline_);
    return r;
  }

  const SubsetProblem<Loss>& prob_;
  BnbConfig cfg_;
  Clock::time_point start_;

  std::mutex mu_;
  std::condition_variable cv_;
  std::priority_queue<Node, std::vector<Node>, NodeOrder> queue_;
  std::multiset<double> in_flight_;
  SparseSolution incumbent_;
  bool has_incumbent_ = false;
  long nodes_ = 0;
  long next_id_ = 0;
  bool stop_ = false;
  SolveStatus status_ = SolveStatus::optimal;
  double last_lb_ = -kInf;
  std::vector<TimelineEntry> timeline_;
  std::exception_ptr error_;
};

}  // namespace detail

/// Best-first branch and bound over the support indicators.
template <SubsetLoss Loss>
SolveReport bnb_solve(const SubsetProblem<Loss>& prob,
                      const std::optional<SparseSolution>& warm = std::nullopt,
                      const BnbConfig& cfg = {}) {
  detail::BnbEngine<Loss> engine(prob, cfg);
  return engine.run(warm);
}

/// Smallest ||b - center||_1 over k-sparse b inside the coordinate boxes.
template <SubsetLoss Loss>
double min_sparse_distance(const SubsetProblem<Loss>& prob, const Vector& center) {
  const Index p = prob.p();
  double total = 0.0;
  std::vector<double> savings;
  for (Index i = 0; i < p; ++i) {
    const auto [lo, hi] = prob.bounds.beta_box(i);
    const double keep = detail::dist_to_interval(center(i), lo, hi);
    const double drop = (lo <= 0.0 && hi >= 0.0) ? std::abs(center(i)) : kInf;
    total += drop;
    savings.push_back(drop - keep);
  }
  std::partial_sort(savings.begin(), savings.begin() + prob.k, savings.end(), std::greater<>());
  for (Index j = 0; j < prob.k; ++j) total -= std::max(0.0, savings[static_cast<std::size_t>(j)]);
  return total;
}

/// Branch and bound restricted to the beta box (inside relaxations) and
/// the fit box (incumbent filter only).  Optimality is certified within
/// the boxes.
template <SubsetLoss Loss>
SolveReport bnb_solve_boxed(const SubsetProblem<Loss>& prob,
                            const std::optional<SparseSolution>& warm = std::nullopt,
                            const BnbConfig& cfg = {}) {
  if (prob.beta_box && !std::isinf(prob.beta_box->radius) &&
      min_sparse_distance(prob, prob.beta_box->center) > prob.beta_box->radius)
    fail(ErrorKind::EmptyRegion, "beta box excludes every k-sparse point");
  return bnb_solve(prob, warm, cfg);
}

/// Stopping rule used between k values of a sweep: 1% gap or 15 minutes.
inline BnbConfig sweep_default_config() {
  BnbConfig c;
  c.gap_tol = 0.01;
  c.time_limit_s = 900.0;
  return c;
}

/// Hard-threshold then polish a previous incumbent for a smaller k.
template <SubsetLoss Loss>
SparseSolution truncate_and_polish(const Vector& beta, const Loss& loss, Index k) {
  Vector b = loss.polish(top_k_support(beta, std::min(k, nnz(beta))));
  if (nnz(b) > k) b = hard_threshold(b, k);
  return {b, support_of(b), loss.objective(b), Provenance::warm_start};
}

/// Solves for each k in strictly descending order, warm-starting each solve
/// from the previous incumbent.  on_done (optional) sees every report as it
/// completes, e.g. to checkpoint a sweep.
template <SubsetLoss Loss>
std::map<Index, SolveReport> k_sweep(
    const std::function<SubsetProblem<Loss>(Index)>& make_problem,
    const std::vector<Index>& k_values, const BnbConfig& cfg,
    std::optional<SparseSolution> previous = std::nullopt,
    const std::function<void(Index, const SolveReport&)>& on_done = {}) {
  for (std::size_t i = 1; i < k_values.size(); ++i)
    if (!(k_values[i] < k_values[i - 1]))
      fail(ErrorKind::SpecConflict, "k_values must be strictly descending");
  std::map<Index, SolveReport> out;
  for (Index k : k_values) {
    const SubsetProblem<Loss> prob = make_problem(k);
    std::optional<SparseSolution> warm;
    if (previous) warm = truncate_and_polish(previous->beta, prob.loss, k);
    SolveReport rep = bnb_solve(prob, warm, cfg);
    if (rep.has_incumbent) previous = rep.incumbent;
    if (on_done) on_done(k, rep);
    out.emplace(k, std::move(rep));
  }
  return out;
}

}  // namespace bestsubset
