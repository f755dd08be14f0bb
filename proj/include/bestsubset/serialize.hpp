#pragma once

// JSON forms of reports and configs.  Needs nlohmann/json (json.hpp).

#include <cmath>
#include <cstdio>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "bestsubset/bench.hpp"
#include "bestsubset/bounds.hpp"
#include "bestsubset/first_order.hpp"
#include "bestsubset/io.hpp"
#include "bestsubset/miqp.hpp"

namespace bestsubset {

using json = nlohmann::json;

inline constexpr const char* kVersion = "1.0.0";

/// Non-finite reals travel as the strings "inf", "-inf", "nan".
inline json real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline double real_from(const json& j, const std::string& where) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    if (s == "nan") return std::nan("");
  }
  fail(ErrorKind::ConfigError, "field '" + where + "' must be a number");
}

inline json vector_json(const Vector& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(real(v(i)));
  return a;
}

inline Vector vector_from(const json& j, const std::string& where) {
  if (!j.is_array()) fail(ErrorKind::ConfigError, "field '" + where + "' must be an array");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = real_from(j[i], where);
  return v;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---------------------------------------------------------------- reports

inline json to_json(const SparseSolution& s) {
  return {{"beta", vector_json(s.beta)},
          {"support", s.support},
          {"objective", real(s.objective)},
          {"provenance", to_string(s.provenance)}};
}

inline json to_json(const StationaryPoint& sp) {
  return {{"beta", vector_json(sp.beta)},
          {"support", sp.support},
          {"objective", real(sp.objective)},
          {"iterations", sp.iterations},
          {"converged", sp.converged},
          {"stationarity_residual", real(sp.stationarity_residual)},
          {"L", real(sp.L)}};
}

inline json intervals_json(const std::optional<std::vector<Interval>>& v) {
  if (!v) return nullptr;
  json a = json::array();
  for (const auto& [lo, hi] : *v) a.push_back({real(lo), real(hi)});
  return a;
}

inline json to_json(const ParamBounds& b) {
  return {{"beta_inf", real(b.beta_inf)},
          {"beta_l1", real(b.beta_l1)},
          {"fit_inf", real(b.fit_inf)},
          {"fit_l1", real(b.fit_l1)},
          {"per_coord_beta", intervals_json(b.per_coord_beta)},
          {"per_coord_fit", intervals_json(b.per_coord_fit)},
          {"provenance", to_string(b.provenance)},
          {"valid_certificate", b.valid_certificate}};
}

inline std::optional<std::vector<Interval>> intervals_from(const json& j, const std::string& where) {
  if (j.is_null()) return std::nullopt;
  if (!j.is_array()) fail(ErrorKind::ConfigError, "field '" + where + "' must be an array");
  std::vector<Interval> out;
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 2)
      fail(ErrorKind::ConfigError, "field '" + where + "' must hold [lo, hi] pairs");
    out.emplace_back(real_from(e[0], where), real_from(e[1], where));
  }
  return out;
}

inline BoundsProvenance bounds_provenance_from(const std::string& s) {
  for (auto p : {BoundsProvenance::analytic, BoundsProvenance::qp, BoundsProvenance::warmstart})
    if (s == to_string(p)) return p;
  fail(ErrorKind::ConfigError, "unknown bounds provenance '" + s + "'");
}

inline json to_json(const SolveReport& r) {
  return {{"status", to_string(r.status)},
          {"has_incumbent", r.has_incumbent},
          {"incumbent", to_json(r.incumbent)},
          {"upper_bound", real(r.has_incumbent ? r.incumbent.objective : kInf)},
          {"lower_bound", real(r.lower_bound)},
          {"gap", real(r.gap)},
          {"nodes_explored", r.nodes_explored},
          {"elapsed_s", real(r.elapsed_s)}};
}

/// Columns: elapsed_s, ub, lb, gap, nodes.
inline std::string timeline_csv(const SolveReport& r, bool record_time = true) {
  std::string out = "elapsed_s,ub,lb,gap,nodes\n";
  for (const auto& e : r.timeline)
    out += fmt_g(record_time ? e.elapsed_s : 0.0) + "," + fmt_g(e.ub) + "," + fmt_g(e.lb) + "," +
           fmt_g(relative_gap(e.ub, e.lb)) + "," + std::to_string(e.nodes) + "\n";
  return out;
}

// ---------------------------------------------------------------- configs

/// Reads an object field by field and rejects keys nobody asked for.
class StrictObject {
 public:
  StrictObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(ErrorKind::ConfigError, "'" + path_ + "' must be an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json& at(const std::string& key) {
    if (!has(key)) fail(ErrorKind::ConfigError, "missing field '" + name(key) + "'");
    return j_.at(key);
  }

  template <class T>
  void get(const std::string& key, T& out, bool required = false) {
    if (!has(key)) {
      if (required) fail(ErrorKind::ConfigError, "missing field '" + name(key) + "'");
      return;
    }
    const json& v = j_.at(key);
    if constexpr (std::is_same_v<T, double>) {
      out = real_from(v, name(key));
    } else {
      try {
        out = v.get<T>();
      } catch (const json::exception&) {
        fail(ErrorKind::ConfigError, "field '" + name(key) + "' has the wrong type");
      }
    }
  }

  std::string name(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  /// Call after all reads.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        fail(ErrorKind::ConfigError, "unknown field '" + name(it.key()) + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline ParamBounds bounds_from(const json& j, const std::string& path = "bounds") {
  StrictObject o(j, path);
  ParamBounds b;
  b.beta_inf = real_from(o.at("beta_inf"), o.name("beta_inf"));
  b.beta_l1 = real_from(o.at("beta_l1"), o.name("beta_l1"));
  b.fit_inf = real_from(o.at("fit_inf"), o.name("fit_inf"));
  b.fit_l1 = real_from(o.at("fit_l1"), o.name("fit_l1"));
  if (o.has("per_coord_beta")) b.per_coord_beta = intervals_from(j.at("per_coord_beta"), o.name("per_coord_beta"));
  if (o.has("per_coord_fit")) b.per_coord_fit = intervals_from(j.at("per_coord_fit"), o.name("per_coord_fit"));
  std::string prov;
  o.get("provenance", prov, true);
  b.provenance = bounds_provenance_from(prov);
  o.get("valid_certificate", b.valid_certificate, true);
  o.finish();
  return b;
}

struct GlobalConfig {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out_dir = "out";
  std::string log_level = "info";  ///< quiet | info | debug
  bool record_time = true;         ///< false writes 0 for every wall-clock field in CSVs
};

struct FitParams {
  std::string input;
  Index k = 0;
  std::string loss = "ls";          ///< ls | lad
  std::string method = "mio-warm";  ///< fo | mio-cold | mio-warm
  std::string bounds = "qp";        ///< analytic | qp | warmstart:TAU
  double time_limit_s = kInf;
  double gap_tol = 1e-4;
  int starts = 50;
  long node_limit = 1000000;
  double beta_radius = 0.0;  ///< > 0 adds an l1 box around the warm start
  double fit_radius = 0.0;
  double tau_relax = 0.0;    ///< LAD relaxation smoothing; 0 derives it
  bool trace = false;
};

struct SweepParams {
  std::string input;
  Index k_from = 0;
  Index k_to = 0;
  std::string bounds = "qp";
  double time_limit_s = 900.0;
  double gap_tol = 0.01;
  int starts = 50;
  long node_limit = 1000000;
  bool resume = false;
};

struct BenchParams {
  SyntheticSpec spec;
  std::vector<std::string> methods;
  std::vector<Index> k_grid;
  int replications = 1;
  ComparisonConfig comparison;
};

struct GenParams {
  SyntheticSpec spec;
  std::string format = "csv";  ///< csv | binary
};

struct RunConfig {
  std::string subcommand;
  GlobalConfig global;
  std::optional<FitParams> fit;  ///< fit and bounds
  std::optional<SweepParams> sweep;
  std::optional<BenchParams> bench;
  std::optional<GenParams> gen;
};

inline json to_json(const GlobalConfig& g) {
  return {{"seed", g.seed}, {"threads", g.threads}, {"out_dir", g.out_dir},
          {"log_level", g.log_level}, {"record_time", g.record_time}};
}

inline GlobalConfig global_from(const json& j, const std::string& path) {
  GlobalConfig g;
  StrictObject o(j, path);
  o.get("seed", g.seed);
  o.get("threads", g.threads);
  o.get("out_dir", g.out_dir);
  o.get("log_level", g.log_level);
  o.get("record_time", g.record_time);
  o.finish();
  if (g.threads < 1) fail(ErrorKind::ConfigError, "threads must be >= 1");
  if (g.log_level != "quiet" && g.log_level != "info" && g.log_level != "debug")
    fail(ErrorKind::ConfigError, "log_level must be quiet, info or debug");
  return g;
}

inline json to_json(const FitParams& f) {
  return {{"input", f.input},         {"k", f.k},
          {"loss", f.loss},           {"method", f.method},
          {"bounds", f.bounds},       {"time_limit_s", real(f.time_limit_s)},
          {"gap_tol", real(f.gap_tol)}, {"starts", f.starts},
          {"node_limit", f.node_limit}, {"beta_radius", real(f.beta_radius)},
          {"fit_radius", real(f.fit_radius)}, {"tau_relax", real(f.tau_relax)},
          {"trace", f.trace}};
}

inline FitParams fit_from(const json& j, const std::string& path) {
  FitParams f;
  StrictObject o(j, path);
  o.get("input", f.input, true);
  o.get("k", f.k, true);
  o.get("loss", f.loss);
  o.get("method", f.method);
  o.get("bounds", f.bounds);
  o.get("time_limit_s", f.time_limit_s);
  o.get("gap_tol", f.gap_tol);
  o.get("starts", f.starts);
  o.get("node_limit", f.node_limit);
  o.get("beta_radius", f.beta_radius);
  o.get("fit_radius", f.fit_radius);
  o.get("tau_relax", f.tau_relax);
  o.get("trace", f.trace);
  o.finish();
  return f;
}

inline json to_json(const SweepParams& s) {
  return {{"input", s.input},       {"k_from", s.k_from},
          {"k_to", s.k_to},         {"bounds", s.bounds},
          {"time_limit_s", real(s.time_limit_s)}, {"gap_tol", real(s.gap_tol)},
          {"starts", s.starts},     {"node_limit", s.node_limit},
          {"resume", s.resume}};
}

inline SweepParams sweep_from(const json& j, const std::string& path) {
  SweepParams s;
  StrictObject o(j, path);
  o.get("input", s.input, true);
  o.get("k_from", s.k_from, true);
  o.get("k_to", s.k_to, true);
  o.get("bounds", s.bounds);
  o.get("time_limit_s", s.time_limit_s);
  o.get("gap_tol", s.gap_tol);
  o.get("starts", s.starts);
  o.get("node_limit", s.node_limit);
  o.get("resume", s.resume);
  o.finish();
  return s;
}

inline json to_json(const SyntheticSpec& s) {
  return {{"example", to_string(s.example)}, {"n", s.n},     {"p", s.p},
          {"rho", real(s.rho)},              {"k0", s.k0},   {"snr", real(s.snr)},
          {"noise", to_string(s.noise)},     {"seed", s.seed}};
}

inline SyntheticSpec spec_from(const json& j, const std::string& path) {
  SyntheticSpec s;
  StrictObject o(j, path);
  std::string ex, noise = "gaussian";
  o.get("example", ex, true);
  if (ex == "Ex1") s.example = Example::Ex1;
  else if (ex == "Ex2") s.example = Example::Ex2;
  else if (ex == "Ex3") s.example = Example::Ex3;
  else if (ex == "Ex4") s.example = Example::Ex4;
  else fail(ErrorKind::ConfigError, "field '" + o.name("example") + "' must be Ex1..Ex4");
  o.get("n", s.n, true);
  o.get("p", s.p, true);
  o.get("rho", s.rho);
  s.k0 = s.example == Example::Ex1 ? 5 : 0;
  o.get("k0", s.k0);
  o.get("snr", s.snr, true);
  o.get("noise", noise);
  if (noise == "gaussian") s.noise = Noise::gaussian;
  else if (noise == "laplace") s.noise = Noise::laplace;
  else fail(ErrorKind::ConfigError, "field '" + o.name("noise") + "' must be gaussian or laplace");
  o.get("seed", s.seed, true);
  o.finish();
  return s;
}

inline json to_json(const ComparisonConfig& c) {
  return {{"fo_starts", c.fo_starts},
          {"mio_node_limit", c.mio_node_limit},
          {"mio_time_limit_s", real(c.mio_time_limit_s)},
          {"mio_gap_tol", real(c.mio_gap_tol)},
          {"lad_node_limit", c.lad_node_limit},
          {"lad_warm_tau", real(c.lad_warm_tau)},
          {"lasso_grid", c.lasso_grid},
          {"lad_lasso_grid", c.lad_lasso_grid},
          {"record_time", c.record_time}};
}

inline ComparisonConfig comparison_from(const json& j, const std::string& path) {
  ComparisonConfig c;
  StrictObject o(j, path);
  o.get("fo_starts", c.fo_starts);
  o.get("mio_node_limit", c.mio_node_limit);
  o.get("mio_time_limit_s", c.mio_time_limit_s);
  o.get("mio_gap_tol", c.mio_gap_tol);
  o.get("lad_node_limit", c.lad_node_limit);
  o.get("lad_warm_tau", c.lad_warm_tau);
  o.get("lasso_grid", c.lasso_grid);
  o.get("lad_lasso_grid", c.lad_lasso_grid);
  o.get("record_time", c.record_time);
  o.finish();
  return c;
}

inline json to_json(const BenchParams& b) {
  return {{"spec", to_json(b.spec)},
          {"methods", b.methods},
          {"k_grid", b.k_grid},
          {"replications", b.replications},
          {"comparison", to_json(b.comparison)}};
}

inline BenchParams bench_from(const json& j, const std::string& path) {
  BenchParams b;
  StrictObject o(j, path);
  b.spec = spec_from(o.at("spec"), o.name("spec"));
  o.get("methods", b.methods, true);
  for (const auto& m : b.methods) method_from_string(m);
  o.get("k_grid", b.k_grid);
  o.get("replications", b.replications, true);
  if (o.has("comparison")) b.comparison = comparison_from(o.at("comparison"), o.name("comparison"));
  o.finish();
  return b;
}

inline json to_json(const GenParams& g) {
  return {{"spec", to_json(g.spec)}, {"format", g.format}};
}

inline GenParams gen_from(const json& j, const std::string& path) {
  GenParams g;
  StrictObject o(j, path);
  g.spec = spec_from(o.at("spec"), o.name("spec"));
  o.get("format", g.format);
  o.finish();
  if (g.format != "csv" && g.format != "binary")
    fail(ErrorKind::ConfigError, "field '" + o.name("format") + "' must be csv or binary");
  return g;
}

inline json to_json(const RunConfig& c) {
  json j = {{"subcommand", c.subcommand}, {"global", to_json(c.global)}};
  if (c.fit) j["fit"] = to_json(*c.fit);
  if (c.sweep) j["sweep"] = to_json(*c.sweep);
  if (c.bench) j["bench"] = to_json(*c.bench);
  if (c.gen) j["gen"] = to_json(*c.gen);
  return j;
}

inline RunConfig run_config_from(const json& j) {
  RunConfig c;
  StrictObject o(j, "");
  o.get("subcommand", c.subcommand, true);
  if (o.has("global")) c.global = global_from(o.at("global"), "global");
  if (o.has("fit")) c.fit = fit_from(o.at("fit"), "fit");
  if (o.has("sweep")) c.sweep = sweep_from(o.at("sweep"), "sweep");
  if (o.has("bench")) c.bench = bench_from(o.at("bench"), "bench");
  if (o.has("gen")) c.gen = gen_from(o.at("gen"), "gen");
  o.finish();
  return c;
}

/// FNV-1a of the canonical (sorted-key, compact) JSON dump.
inline std::string config_hash(const RunConfig& c) {
  const std::string s = to_json(c).dump();
  return hex64(fnv1a(s.data(), s.size()));
}

inline json manifest(const RunConfig& c) {
  return {{"tool", "bestsubset"},
          {"version", kVersion},
          {"config_hash", config_hash(c)},
          {"seed", c.global.seed},
          {"threads", c.global.threads},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                        "." + std::to_string(EIGEN_MINOR_VERSION)},
          {"json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                       std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                       std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
          {"compiler", __VERSION__},
          {"config", to_json(c)}};
}

inline json error_json(const Error& e) {
  return {{"error", {{"kind", to_string(e.kind())}, {"message", e.what()}}}};
}

}  // namespace bestsubset
