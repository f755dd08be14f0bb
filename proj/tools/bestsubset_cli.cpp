// bestsubset: batch front end.  Subcommands fit, bounds (alias certify),
// sweep, bench, gen and replay.  Exit codes: 0 success, 1 a solver stopped
// on a time or node limit, 2 usage, config or module error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

#include <CLI11.hpp>

#include "bestsubset/bestsubset.hpp"
#include "bestsubset/serialize.hpp"

namespace fs = std::filesystem;
using namespace bestsubset;

namespace {

constexpr int kExitLimit = 1;
constexpr int kExitError = 2;

class Log {
 public:
  explicit Log(const std::string& level)
      : level_(level == "quiet" ? 0 : level == "debug" ? 2 : 1) {}
  template <class... A>
  void info(const A&... a) const {
    if (level_ >= 1) ((std::cerr << a), ...) << "\n";
  }
  template <class... A>
  void debug(const A&... a) const {
    if (level_ >= 2) ((std::cerr << a), ...) << "\n";
  }

 private:
  int level_;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::ConfigError, path.string() + ": " + e.what());
  }
}

fs::path prepare_out(const RunConfig& c) {
  const fs::path out(c.global.out_dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) fail(ErrorKind::IoError, "cannot create " + out.string() + ": " + ec.message());
  fs::remove(out / "error.json", ec);
  write_json(out / "manifest.json", manifest(c));
  return out;
}

Standardized load_input(const std::string& path) {
  if (path.empty()) fail(ErrorKind::ConfigError, "missing field 'input'");
  const Dataset raw = read_dataset(path);
  return standardize(raw.X, raw.y);
}

void check_k(Index k, const Dataset& d) {
  if (k < 1 || k > d.p())
    fail(ErrorKind::SpecConflict, "k = " + std::to_string(k) + " must lie in [1, p] with p = " +
                                      std::to_string(d.p()));
}

struct BoundsChoice {
  std::string kind;  // analytic | qp | warmstart
  double tau = 0.0;
};

BoundsChoice parse_bounds(const std::string& s) {
  if (s == "analytic" || s == "qp") return {s, 0.0};
  if (s.rfind("warmstart:", 0) == 0) {
    double t = 0.0;
    if (!detail::parse_double(s.substr(10), t) || !(t > 1.0))
      fail(ErrorKind::ConfigError, "bounds warmstart:TAU needs a number TAU > 1");
    return {"warmstart", t};
  }
  fail(ErrorKind::ConfigError, "bounds must be analytic, qp or warmstart:TAU, got '" + s + "'");
}

void check_fit_params(const FitParams& f) {
  if (f.loss != "ls" && f.loss != "lad") fail(ErrorKind::ConfigError, "loss must be ls or lad");
  if (f.method != "fo" && f.method != "mio-cold" && f.method != "mio-warm")
    fail(ErrorKind::ConfigError, "method must be fo, mio-cold or mio-warm");
  if (f.starts < 1) fail(ErrorKind::ConfigError, "starts must be >= 1");
  if (!(f.gap_tol >= 0.0)) fail(ErrorKind::ConfigError, "gap_tol must be >= 0");
  if (!(f.time_limit_s > 0.0)) fail(ErrorKind::ConfigError, "time_limit_s must be > 0");
  if (f.node_limit < 1) fail(ErrorKind::ConfigError, "node_limit must be >= 1");
  const BoundsChoice b = parse_bounds(f.bounds);
  if (f.loss == "lad" && b.kind == "qp")
    fail(ErrorKind::ConfigError,
         "qp bounds come from the least-squares level set; use analytic or warmstart:TAU with "
         "loss lad");
}

FirstOrderConfig fo_config(const RunConfig& c, const fs::path& out, bool trace) {
  FirstOrderConfig fc;
  fc.seed = c.global.seed;
  fc.threads = c.global.threads;
  if (trace) {
    fc.trace_path = (out / "trace.jsonl").string();
    fs::remove(fc.trace_path);
  }
  return fc;
}

// Best continuation run over the same start points multi_start uses.
SparseSolution lad_multi_start(const Dataset& d, Index k, int starts, const FirstOrderConfig& fc) {
  LadContinuationConfig lc;
  lc.inner = fc;
  lc.inner.threads = 1;
  std::optional<SparseSolution> best;
  for (int i = 1; i <= starts; ++i) {
    lc.beta0 = multi_start_point(d.p(), fc.seed, i);
    SparseSolution s = lad_continuation(d, k, lc);
    if (!best || s.objective < best->objective) best = std::move(s);
  }
  return *best;
}

struct FirstOrderRun {
  SparseSolution solution;
  json report;
};

FirstOrderRun first_order(const FitParams& f, const Dataset& d, const FirstOrderConfig& fc) {
  if (f.loss == "lad") {
    SparseSolution s = lad_multi_start(d, f.k, f.starts, fc);
    json r = to_json(s);
    return {std::move(s), std::move(r)};
  }
  const StationaryPoint sp = multi_start(LeastSquaresLoss(d), f.k, f.starts, fc);
  return {to_solution(sp, true), to_json(sp)};
}

ParamBounds choose_bounds(const FitParams& f, const Dataset& d, const SparseSolution& fo) {
  const BoundsChoice b = parse_bounds(f.bounds);
  if (b.kind == "warmstart") return warmstart_bounds(fo.beta, b.tau, f.k, d);
  if (f.loss == "lad") return lad_certified_bounds(d, f.k, fo.objective);
  if (b.kind == "analytic") return analytic_bounds(d, f.k);
  return qp_bounds(d, f.k, fo.objective);
}

json solution_json(const SparseSolution& s, const Standardized& st, const FitParams& f) {
  const Vector raw = s.beta.cwiseQuotient(st.scaling.scale);
  json j = to_json(s);
  j["loss"] = f.loss;
  j["k"] = f.k;
  j["method"] = f.method;
  j["beta_raw"] = vector_json(raw);
  j["intercept"] = real(0.0 - raw.dot(st.scaling.mean));
  if (f.loss == "lad") j["objective"] = real(lad_objective(st.data, s.beta));
  return j;
}

BnbConfig bnb_config(const RunConfig& c, double time_limit, double gap_tol, long node_limit) {
  BnbConfig bc;
  bc.time_limit_s = time_limit;
  bc.gap_tol = gap_tol;
  bc.node_limit = node_limit;
  bc.seed = c.global.seed;
  bc.parallel = c.global.threads > 1;
  bc.threads = c.global.threads;
  return bc;
}

int status_exit(SolveStatus s) {
  return s == SolveStatus::time_limit || s == SolveStatus::node_limit ? kExitLimit : 0;
}

template <SubsetLoss Loss>
SolveReport solve_boxed(const Loss& loss, const FitParams& f, const ParamBounds& bounds,
                        const SparseSolution& fo, const BnbConfig& bc) {
  SubsetProblem<Loss> prob{loss, f.k, bounds, {}, {}};
  if (f.beta_radius > 0) prob.beta_box = BetaBox{fo.beta, f.beta_radius};
  if (f.fit_radius > 0) prob.fit_box = FitBox{loss.data().X * fo.beta, f.fit_radius};
  std::optional<SparseSolution> warm;
  if (f.method == "mio-warm") warm = fo;
  return bnb_solve_boxed(prob, warm, bc);
}

int run_fit(const RunConfig& c, const Log& log) {
  const FitParams& f = *c.fit;
  check_fit_params(f);
  const fs::path out = prepare_out(c);
  const Standardized st = load_input(f.input);
  const Dataset& d = st.data;
  check_k(f.k, d);

  const FirstOrderRun fo = first_order(f, d, fo_config(c, out, f.trace));
  log.debug("first order objective ", fo.solution.objective);
  if (f.method == "fo") {
    write_json(out / "solution.json", solution_json(fo.solution, st, f));
    write_json(out / "report.json", {{"method", "fo"}, {"first_order", fo.report}});
    log.info("fit: fo objective ", fmt_g(fo.solution.objective));
    return 0;
  }

  const ParamBounds bounds = choose_bounds(f, d, fo.solution);
  write_json(out / "bounds.json", to_json(bounds));
  const BnbConfig bc = bnb_config(c, f.time_limit_s, f.gap_tol, f.node_limit);
  SolveReport rep;
  json extra = {{"method", f.method}, {"first_order", fo.report}};
  if (f.loss == "lad") {
    const double tau = f.tau_relax > 0 ? f.tau_relax
                                       : default_tau_relax(f.gap_tol, fo.solution.objective, d.n());
    extra["tau_relax"] = real(tau);
    rep = solve_boxed(SmoothedLadLoss(d, tau), f, bounds, fo.solution, bc);
  } else {
    rep = solve_boxed(LeastSquaresLoss(d), f, bounds, fo.solution, bc);
  }
  json report = to_json(rep);
  report.update(extra);
  write_json(out / "report.json", report);
  write_text(out / "timeline.csv", timeline_csv(rep, c.global.record_time));
  if (rep.has_incumbent) write_json(out / "solution.json", solution_json(rep.incumbent, st, f));
  log.info("fit: ", to_string(rep.status), ", objective ",
           rep.has_incumbent ? fmt_g(rep.incumbent.objective) : "none", ", gap ", fmt_g(rep.gap),
           ", nodes ", rep.nodes_explored);
  return status_exit(rep.status);
}

int run_bounds(const RunConfig& c, const Log& log) {
  const FitParams& f = *c.fit;
  check_fit_params(f);
  const fs::path out = prepare_out(c);
  const Standardized st = load_input(f.input);
  check_k(f.k, st.data);
  const FirstOrderRun fo = first_order(f, st.data, fo_config(c, out, false));
  const ParamBounds b = choose_bounds(f, st.data, fo.solution);
  json j = to_json(b);
  j["upper_bound"] = real(fo.solution.objective);
  write_json(out / "bounds.json", j);
  log.info("bounds: beta_inf ", fmt_g(b.beta_inf), ", beta_l1 ", fmt_g(b.beta_l1), ", fit_inf ",
           fmt_g(b.fit_inf), ", fit_l1 ", fmt_g(b.fit_l1));
  return 0;
}

// One file per completed k, so an interrupted sweep can pick up where it
// stopped.
fs::path sweep_file(const fs::path& dir, Index k) { return dir / ("k" + std::to_string(k) + ".json"); }

int run_sweep(const RunConfig& c, const Log& log) {
  const SweepParams& s = *c.sweep;
  const BoundsChoice bchoice = parse_bounds(s.bounds);
  if (s.starts < 1) fail(ErrorKind::ConfigError, "starts must be >= 1");
  const fs::path out = prepare_out(c);
  const Standardized st = load_input(s.input);
  const Dataset& d = st.data;
  check_k(s.k_from, d);
  check_k(s.k_to, d);
  std::vector<Index> ks;
  for (Index k = std::max(s.k_from, s.k_to); k >= std::min(s.k_from, s.k_to); --k) ks.push_back(k);

  const fs::path dir = out / "sweep";
  fs::create_directories(dir);
  std::map<Index, json> done;
  std::optional<SparseSolution> last;
  if (s.resume) {
    for (Index k : ks) {
      if (!fs::exists(sweep_file(dir, k))) break;
      done[k] = read_json(sweep_file(dir, k));
      const json& inc = done[k].at("incumbent");
      const Vector beta = vector_from(inc.at("beta"), "incumbent.beta");
      if (beta.size() != d.p()) fail(ErrorKind::ConfigError, "resume file does not match input");
      last = SparseSolution{beta, support_of(beta), real_from(inc.at("objective"), "objective"),
                            Provenance::bnb_incumbent};
    }
    if (!done.empty()) log.info("sweep: resuming after k = ", done.begin()->first);
  }
  std::vector<Index> todo;
  for (Index k : ks)
    if (!done.count(k)) todo.push_back(k);

  const LeastSquaresLoss loss(d);
  if (!todo.empty() && !last) {
    FirstOrderConfig fc = fo_config(c, out, false);
    last = to_solution(multi_start(loss, todo.front(), s.starts, fc), true);
  }
  const BnbConfig bc = bnb_config(c, s.time_limit_s, s.gap_tol, s.node_limit);
  auto make_problem = [&](Index k) {
    const SparseSolution warm = truncate_and_polish(last->beta, loss, k);
    ParamBounds b;
    if (bchoice.kind == "analytic") b = analytic_bounds(d, k);
    else if (bchoice.kind == "qp") b = qp_bounds(d, k, warm.objective);
    else b = warmstart_bounds(warm.beta, bchoice.tau, k, d);
    return SubsetProblem<LeastSquaresLoss>{loss, k, b, {}, {}};
  };
  auto on_done = [&](Index k, const SolveReport& rep) {
    json j = to_json(rep);
    j["k"] = k;
    write_json(sweep_file(dir, k), j);
    write_text(dir / ("timeline_k" + std::to_string(k) + ".csv"),
               timeline_csv(rep, c.global.record_time));
    if (rep.has_incumbent) last = rep.incumbent;
    done[k] = j;
    log.info("sweep: k = ", k, " ", to_string(rep.status), ", objective ",
             fmt_g(rep.incumbent.objective), ", nodes ", rep.nodes_explored);
  };
  if (!todo.empty())
    k_sweep<LeastSquaresLoss>(make_problem, todo, bc, last, on_done);

  std::string csv = "k,objective,lower_bound,gap,status,nodes,elapsed_s\n";
  int code = 0;
  for (const auto& [k, j] : done) {
    const std::string status = j.at("status").get<std::string>();
    if (status == "time_limit" || status == "node_limit") code = kExitLimit;
    csv += std::to_string(k) + "," + fmt_g(real_from(j.at("upper_bound"), "upper_bound")) + "," +
           fmt_g(real_from(j.at("lower_bound"), "lower_bound")) + "," +
           fmt_g(real_from(j.at("gap"), "gap")) + "," + status + "," +
           std::to_string(j.at("nodes_explored").get<long>()) + "," +
           fmt_g(c.global.record_time ? real_from(j.at("elapsed_s"), "elapsed_s") : 0.0) + "\n";
  }
  write_text(out / "summary.csv", csv);
  return code;
}

int run_bench(const RunConfig& c, const Log& log) {
  const BenchParams& b = *c.bench;
  const fs::path out = prepare_out(c);
  std::vector<Method> methods;
  for (const auto& m : b.methods) methods.push_back(method_from_string(m));
  ComparisonConfig cfg = b.comparison;
  cfg.threads = c.global.threads;
  cfg.record_time = cfg.record_time && c.global.record_time;
  const auto results = run_comparison(b.spec, methods, b.k_grid, b.replications, cfg);
  write_text(out / "results.csv", results_csv(results));
  write_text(out / "summary.md", summary_markdown(summarize(results)));
  std::size_t failed = 0;
  for (const auto& r : results)
    if (!r.error.empty()) ++failed;
  log.info("bench: ", results.size(), " cells, ", failed, " failed");
  if (failed == results.size()) {
    const json err = {{"error", {{"kind", "AllCellsFailed"}, {"message", results.front().error}}}};
    std::cerr << err.dump() << "\n";
    write_json(out / "error.json", err);
    return kExitError;
  }
  return 0;
}

int run_gen(const RunConfig& c, const Log& log) {
  const GenParams& g = *c.gen;
  const fs::path out = prepare_out(c);
  const SyntheticData syn = gen_synthetic(g.spec);
  const fs::path data = out / (g.format == "csv" ? "data.csv" : "data.ssel");
  if (g.format == "csv") write_csv(data.string(), syn.data);
  else write_binary(data.string(), syn.data);
  write_json(out / "truth.json", {{"spec", to_json(syn.spec)},
                                  {"beta0", vector_json(syn.beta0)},
                                  {"beta0_std", vector_json(syn.beta0_std)},
                                  {"sigma", real(syn.sigma)},
                                  {"signal_var", real(syn.signal_var)},
                                  {"convention", kDataConvention}});
  log.info("gen: wrote ", data.string());
  return 0;
}

int execute(const RunConfig& c) {
  const Log log(c.global.log_level);
  if (c.subcommand == "fit" && c.fit) return run_fit(c, log);
  if (c.subcommand == "bounds" && c.fit) return run_bounds(c, log);
  if (c.subcommand == "sweep" && c.sweep) return run_sweep(c, log);
  if (c.subcommand == "bench" && c.bench) return run_bench(c, log);
  if (c.subcommand == "gen" && c.gen) return run_gen(c, log);
  fail(ErrorKind::ConfigError, "config has no parameters for subcommand '" + c.subcommand + "'");
}

void report_error(const std::string& kind, const std::string& message, const std::string& out_dir) {
  const json j = {{"error", {{"kind", kind}, {"message", message}}}};
  std::cerr << j.dump() << "\n";
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!ec) {
    std::ofstream f(fs::path(out_dir) / "error.json", std::ios::binary);
    if (f) f << j.dump(2) << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Best subset selection by first-order methods and branch and bound"};
  app.require_subcommand(1);
  app.fallthrough();

  RunConfig cfg;
  cfg.global.threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  bool no_timing = false;
  app.add_option("--seed", cfg.global.seed, "Random seed");
  app.add_option("--threads", cfg.global.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", cfg.global.out_dir, "Output directory")->capture_default_str();
  app.add_option("--log-level", cfg.global.log_level, "quiet, info or debug")
      ->check(CLI::IsMember({"quiet", "info", "debug"}));
  app.add_flag("--no-timing", no_timing, "Write 0 for wall-clock fields in CSV outputs");

  FitParams fit;
  auto add_fit_options = [&](CLI::App* sub) {
    sub->add_option("--input", fit.input, "CSV or SSEL1 data file")->required();
    sub->add_option("--k", fit.k, "Sparsity level")->required();
    sub->add_option("--loss", fit.loss, "ls or lad")->capture_default_str();
    sub->add_option("--bounds", fit.bounds, "analytic, qp or warmstart:TAU")->capture_default_str();
    sub->add_option("--starts", fit.starts, "First-order starting points")->capture_default_str();
  };
  CLI::App* fit_cmd = app.add_subcommand("fit", "Solve one k");
  add_fit_options(fit_cmd);
  fit_cmd->add_option("--method", fit.method, "fo, mio-cold or mio-warm")->capture_default_str();
  fit_cmd->add_option("--time-limit", fit.time_limit_s, "Seconds");
  fit_cmd->add_option("--gap-tol", fit.gap_tol, "Relative gap")->capture_default_str();
  fit_cmd->add_option("--node-limit", fit.node_limit, "Node cap");
  fit_cmd->add_option("--beta-radius", fit.beta_radius, "l1 box radius around the warm start");
  fit_cmd->add_option("--fit-radius", fit.fit_radius, "l1 box radius on the fitted values");
  fit_cmd->add_option("--tau-relax", fit.tau_relax, "LAD relaxation smoothing");
  fit_cmd->add_flag("--trace", fit.trace, "Write first-order iterations to trace.jsonl");

  CLI::App* bounds_cmd = app.add_subcommand("bounds", "Compute parameter bounds");
  bounds_cmd->alias("certify");
  add_fit_options(bounds_cmd);

  SweepParams sweep;
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "Solve k from --k-from down to --k-to");
  sweep_cmd->add_option("--input", sweep.input, "CSV or SSEL1 data file")->required();
  sweep_cmd->add_option("--k-from", sweep.k_from)->required();
  sweep_cmd->add_option("--k-to", sweep.k_to)->required();
  sweep_cmd->add_option("--bounds", sweep.bounds)->capture_default_str();
  sweep_cmd->add_option("--time-limit", sweep.time_limit_s, "Seconds per k")->capture_default_str();
  sweep_cmd->add_option("--gap-tol", sweep.gap_tol)->capture_default_str();
  sweep_cmd->add_option("--starts", sweep.starts)->capture_default_str();
  sweep_cmd->add_option("--node-limit", sweep.node_limit);
  sweep_cmd->add_flag("--resume", sweep.resume, "Skip k values already in OUT/sweep");

  std::string experiment;
  CLI::App* bench_cmd = app.add_subcommand("bench", "Run a method comparison from a JSON file");
  bench_cmd->add_option("--config", experiment, "Experiment JSON")->required();

  GenParams gen;
  std::string example = "Ex1", noise = "gaussian";
  CLI::App* gen_cmd = app.add_subcommand("gen", "Write a synthetic dataset");
  gen_cmd->add_option("--example", example)->check(CLI::IsMember({"Ex1", "Ex2", "Ex3", "Ex4"}));
  gen_cmd->add_option("--n", gen.spec.n)->capture_default_str();
  gen_cmd->add_option("--p", gen.spec.p)->capture_default_str();
  gen_cmd->add_option("--rho", gen.spec.rho);
  gen_cmd->add_option("--k0", gen.spec.k0);
  gen_cmd->add_option("--snr", gen.spec.snr)->capture_default_str();
  gen_cmd->add_option("--noise", noise)->check(CLI::IsMember({"gaussian", "laplace"}));
  gen_cmd->add_option("--format", gen.format)->check(CLI::IsMember({"csv", "binary"}));

  std::string replay;
  CLI::App* replay_cmd = app.add_subcommand("replay", "Rerun a manifest.json or config JSON");
  replay_cmd->add_option("file", replay)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("ConfigError", e.what(), cfg.global.out_dir);
    return kExitError;
  }

  cfg.global.record_time = !no_timing;
  try {
    if (fit_cmd->parsed()) {
      cfg.subcommand = "fit";
      cfg.fit = fit;
    } else if (bounds_cmd->parsed()) {
      cfg.subcommand = "bounds";
      cfg.fit = fit;
    } else if (sweep_cmd->parsed()) {
      cfg.subcommand = "sweep";
      cfg.sweep = sweep;
    } else if (bench_cmd->parsed()) {
      cfg.subcommand = "bench";
      cfg.bench = bench_from(read_json(experiment), "bench");
      cfg.global.seed = cfg.bench->spec.seed;
    } else if (gen_cmd->parsed()) {
      cfg.subcommand = "gen";
      gen.spec.example = example == "Ex1"   ? Example::Ex1
                         : example == "Ex2" ? Example::Ex2
                         : example == "Ex3" ? Example::Ex3
                                            : Example::Ex4;
      if (gen_cmd->count("--k0") == 0 && gen.spec.example != Example::Ex1) gen.spec.k0 = 0;
      gen.spec.noise = noise == "laplace" ? Noise::laplace : Noise::gaussian;
      gen.spec.seed = cfg.global.seed;
      cfg.gen = gen;
    } else {
      const json j = read_json(replay);
      RunConfig r = run_config_from(j.contains("config") && j.contains("config_hash") ? j.at("config") : j);
      if (app.count("--out")) r.global.out_dir = cfg.global.out_dir;
      if (app.count("--log-level")) r.global.log_level = cfg.global.log_level;
      cfg = r;
    }
    return execute(cfg);
  } catch (const Error& e) {
    report_error(to_string(e.kind()), e.what(), cfg.global.out_dir);
  } catch (const std::exception& e) {
    report_error("InternalError", e.what(), cfg.global.out_dir);
  }
  return kExitError;
}
