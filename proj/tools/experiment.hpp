#pragma once

// Experiment configuration: one JSON document (schema_version 1) resolved into
// library types, with every default written back so it can be logged.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "coxballs/field.hpp"
#include "coxballs/limits.hpp"
#include "coxballs/stats.hpp"

namespace coxballs::cli {

using json = nlohmann::json;

struct NamedMeasure {
  std::string name;
  TestMeasure mu;
};

struct VerifySettings {
  double bias_allowance = 0.05;     // limit comparisons only
  double z_threshold = 3.0;
  double variance_tolerance = 0.05;
  bool require_monotone = false;    // limitcf: sup deviation must decrease as rho decreases
  std::size_t hill_k = 0;           // 0: floor(sqrt(N))
  std::vector<double> hill_range;   // empty: expected index +- 0.2
  std::size_t largeball_replicates = 2000;
  std::vector<double> largeball_rho;  // empty: the run's rho list
  double theory_beta = 0;             // 0: the model's beta
};

struct ExperimentConfig {
  ModelSpec model;
  std::vector<NamedMeasure> measures;
  std::vector<double> rho;
  std::size_t replicates = 1000;
  std::vector<double> thetas;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  FieldOptions field;
  CFOptions cf;
  VerifySettings verify;
  std::string output = "out";
  json resolved;  // the config with all defaults filled in
};

namespace detail {

inline double num(const json& j, const char* key, double dflt, json& out) {
  double v = dflt;
  if (j.contains(key)) {
    if (!j.at(key).is_number()) throw ValidationError(std::string("config field '") + key + "' must be a number");
    v = j.at(key).get<double>();
  }
  out[key] = v;
  return v;
}

inline std::string str(const json& j, const char* key, const std::string& dflt, json& out) {
  std::string v = dflt;
  if (j.contains(key)) {
    if (!j.at(key).is_string()) throw ValidationError(std::string("config field '") + key + "' must be a string");
    v = j.at(key).get<std::string>();
  }
  out[key] = v;
  return v;
}

inline const json& obj(const json& j, const char* key) {
  static const json empty = json::object();
  if (!j.contains(key)) return empty;
  if (!j.at(key).is_object()) throw ValidationError(std::string("config field '") + key + "' must be an object");
  return j.at(key);
}

inline Point point(const json& j, int d, const char* what) {
  if (!j.is_array() || static_cast<int>(j.size()) != d)
    throw ValidationError(std::string(what) + " must be an array of " + std::to_string(d) + " numbers");
  Point p{0, 0, 0};
  for (int i = 0; i < d; ++i) p[i] = j[i].get<double>();
  return p;
}

inline MarkLaw parse_marks(const json& j, json& out) {
  const std::string fam = str(j, "family", "rademacher", out);
  MarkLaw m = MarkLaw::rademacher();
  if (fam == "rademacher") {
  } else if (fam == "gaussian") {
    m = MarkLaw::gaussian(num(j, "scale", 1.0, out));
  } else if (fam == "exact-stable") {
    StableParams p{num(j, "alpha", 1.8, out), num(j, "sigma", 1.0, out), num(j, "skew", 0.0, out)};
    m = MarkLaw::exact_stable(p);
  } else if (fam == "two-sided-pareto") {
    m = MarkLaw::two_sided_pareto(num(j, "alpha", 1.8, out), num(j, "m0", 1.0, out), num(j, "p_right", 0.5, out));
  } else if (fam == "dirac") {
    m = MarkLaw::dirac(num(j, "value", 1.0, out));
  } else {
    throw ValidationError("unknown mark family '" + fam + "'");
  }
  const double c = num(j, "multiplier", 1.0, out);
  return c == 1.0 ? m : m.scaled(c);
}

inline TestMeasure parse_measure(const json& j, int d, json& out) {
  const std::string type = str(j, "type", "interval", out);
  const double w = num(j, "weight", 1.0, out);
  if (type == "interval") {
    if (d != 1) throw ValidationError("interval measures need d = 1");
    return TestMeasure::interval(num(j, "lo", 0.0, out), num(j, "hi", 1.0, out), w);
  }
  if (type == "box") {
    if (!j.contains("lo") || !j.contains("hi")) throw ValidationError("box measures need 'lo' and 'hi'");
    out["lo"] = j["lo"];
    out["hi"] = j["hi"];
    return TestMeasure::box(d, point(j["lo"], d, "box 'lo'"), point(j["hi"], d, "box 'hi'"), w);
  }
  if (type == "ball") {
    if (!j.contains("center")) throw ValidationError("ball measures need 'center'");
    out["center"] = j["center"];
    return TestMeasure::ball(d, point(j["center"], d, "ball 'center'"), num(j, "radius", 1.0, out), w);
  }
  if (type == "sum") {
    if (!j.contains("terms") || !j["terms"].is_array() || j["terms"].empty())
      throw ValidationError("sum measures need a non-empty 'terms' array");
    std::vector<std::pair<double, TestMeasure>> terms;
    out["terms"] = json::array();
    for (const auto& t : j["terms"]) {
      json to;
      const double c = num(t, "coef", 1.0, to);
      json mo;
      terms.emplace_back(c, parse_measure(t.contains("measure") ? t["measure"] : json::object(), d, mo));
      to["measure"] = mo;
      out["terms"].push_back(to);
    }
    return TestMeasure::sum(terms).scaled(w);
  }
  if (type == "dirac") return TestMeasure::dirac(d, Point{0, 0, 0});
  throw ValidationError("unknown measure type '" + type + "'");
}

inline std::vector<double> number_list(const json& j, const char* what) {
  if (j.is_number()) return {j.get<double>()};
  if (!j.is_array()) throw ValidationError(std::string(what) + " must be a number or an array of numbers");
  std::vector<double> v;
  for (const auto& x : j) {
    if (!x.is_number()) throw ValidationError(std::string(what) + " must contain numbers only");
    v.push_back(x.get<double>());
  }
  return v;
}

}  // namespace detail

/// Parses and validates a configuration. Throws ValidationError on any problem,
/// including a model that cannot be classified.
inline ExperimentConfig parse_config(const json& j) {
  using namespace detail;
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  ExperimentConfig c;
  json& r = c.resolved;
  const double version = num(j, "schema_version", 1, r);
  if (version != 1) throw ValidationError("unsupported schema_version (expected 1)");

  const json& jm = obj(j, "model");
  json rm;
  ModelSpec& m = c.model;
  m.d = static_cast<int>(num(jm, "d", 1, rm));
  check_dimension(m.d);
  {
    const json& jk = obj(jm, "kernel");
    json rk;
    const std::string fam = str(jk, "family", "gaussian", rk);
    if (fam == "gaussian") m.kernel.family = KernelFamily::gaussian;
    else if (fam == "uniform-ball") m.kernel.family = KernelFamily::uniform_ball;
    else throw ValidationError("unknown kernel family '" + fam + "'");
    m.kernel.bandwidth = num(jk, "bandwidth", 1.0, rk);
    m.kernel.dim = m.d;
    rm["kernel"] = rk;
  }
  {
    const json& jr = obj(jm, "radius");
    json rr;
    m.radius.beta = num(jr, "beta", 1.5, rr);
    m.radius.r0 = num(jr, "r0", 1.0, rr);
    rm["radius"] = rr;
  }
  {
    json rk;
    m.marks = parse_marks(obj(jm, "marks"), rk);
    rm["marks"] = rk;
  }
  {
    const json& js = obj(jm, "scaling");
    json rs;
    const std::string sc = str(js, "scenario", "local", rs);
    if (sc == "local") m.scaling.scenario = Scenario::local;
    else if (sc == "global") m.scaling.scenario = Scenario::global;
    else throw ValidationError("unknown scenario '" + sc + "' (expected local or global)");
    m.scaling.u = num(js, "u", 0.0, rs);
    m.scaling.v = num(js, "v", 0.0, rs);
    m.scaling.c_kappa = num(js, "c_kappa", 1.0, rs);
    m.scaling.c_lambda = num(js, "c_lambda", 1.0, rs);
    rm["scaling"] = rs;
  }
  r["model"] = rm;
  classify_regime(m);  // full model validation

  r["measures"] = json::array();
  if (j.contains("measures")) {
    if (!j["measures"].is_array() || j["measures"].empty()) throw ValidationError("'measures' must be a non-empty array");
    int k = 0;
    for (const auto& jmu : j["measures"]) {
      json rmu;
      const std::string name = str(jmu, "name", "mu" + std::to_string(k++), rmu);
      c.measures.push_back({name, parse_measure(jmu, m.d, rmu)});
      r["measures"].push_back(rmu);
    }
  } else {
    json rmu;
    const std::string name = str(json::object(), "name", "mu0", rmu);
    c.measures.push_back({name, m.d == 1 ? parse_measure(json::object(), 1, rmu)
                                         : TestMeasure::box(m.d, {0, 0, 0}, {1, 1, m.d > 2 ? 1.0 : 0.0})});
    if (m.d > 1) {
      rmu["type"] = "box";
      rmu["lo"] = std::vector<double>(m.d, 0.0);
      rmu["hi"] = std::vector<double>(m.d, 1.0);
      rmu["weight"] = 1.0;
    }
    r["measures"].push_back(rmu);
  }
  for (std::size_t a = 0; a < c.measures.size(); ++a)
    for (std::size_t b = a + 1; b < c.measures.size(); ++b)
      if (c.measures[a].name == c.measures[b].name) throw ValidationError("measure names must be unique");

  c.rho = j.contains("rho") ? number_list(j["rho"], "'rho'") : std::vector<double>{0.1};
  for (double x : c.rho) require(x > 0 && x < 1, "every rho must lie in (0, 1)");
  r["rho"] = c.rho;
  const double N = num(j, "replicates", 1000, r);
  require(N >= 0 && N == std::floor(N), "'replicates' must be a nonnegative integer");
  c.replicates = static_cast<std::size_t>(N);

  if (j.contains("theta")) {
    c.thetas = number_list(j["theta"], "'theta'");
  } else {
    json rt;
    const json& jt = obj(j, "theta_grid");
    const double pts = num(jt, "points", 41, rt), hw = num(jt, "half_width", 4.0, rt);
    require(pts >= 2 && pts == std::floor(pts), "'theta_grid.points' must be an integer >= 2");
    c.thetas = default_theta_grid(static_cast<int>(pts), hw);
    r["theta_grid"] = rt;
  }
  r["theta"] = c.thetas;

  if (j.contains("seed")) {
    const auto& s = j["seed"];
    if (s.is_number_unsigned()) c.seed = s.get<std::uint64_t>();
    else if (s.is_number_integer() && s.get<std::int64_t>() >= 0) c.seed = static_cast<std::uint64_t>(s.get<std::int64_t>());
    else throw ValidationError("'seed' must be a nonnegative integer");
  }
  r["seed"] = c.seed;
  c.threads = static_cast<unsigned>(num(j, "threads", 0, r));

  {
    const json& jf = obj(j, "field");
    json rf;
    if (jf.contains("r_max") && !jf["r_max"].is_null()) c.field.r_max = num(jf, "r_max", 0, rf);
    else rf["r_max"] = nullptr;
    c.field.auto_truncation = jf.value("auto_truncation", false);
    rf["auto_truncation"] = c.field.auto_truncation;
    c.field.bias_target_fraction = num(jf, "bias_target_fraction", c.field.bias_target_fraction, rf);
    c.field.kernel_eps = num(jf, "kernel_eps", c.field.kernel_eps, rf);
    r["field"] = rf;
  }
  {
    const json& jt = obj(j, "tolerances");
    json rt;
    c.cf.r_opt.rel_tol = num(jt, "radius_rel", c.cf.r_opt.rel_tol, rt);
    c.cf.r_opt.abs_tol = num(jt, "radius_abs", c.cf.r_opt.abs_tol, rt);
    c.cf.z_opt.rel_tol = num(jt, "kernel_rel", c.cf.z_opt.rel_tol, rt);
    c.cf.z_opt.abs_tol = num(jt, "kernel_abs", c.cf.z_opt.abs_tol, rt);
    c.cf.y_opt.rel_tol = num(jt, "center_rel", c.cf.y_opt.rel_tol, rt);
    c.cf.y_opt.abs_tol = num(jt, "center_abs", c.cf.y_opt.abs_tol, rt);
    c.cf.grid_fraction = num(jt, "grid_fraction", c.cf.grid_fraction, rt);
    c.cf.ball.inner.rel_tol = num(jt, "ball_inner_rel", c.cf.ball.inner.rel_tol, rt);
    c.cf.ball.outer.rel_tol = num(jt, "ball_outer_rel", c.cf.ball.outer.rel_tol, rt);
    c.cf.ball.qmc_points = static_cast<std::size_t>(num(jt, "qmc_points", static_cast<double>(c.cf.ball.qmc_points), rt));
    r["tolerances"] = rt;
  }
  {
    const json& jv = obj(j, "verify");
    json rv;
    VerifySettings& v = c.verify;
    v.bias_allowance = num(jv, "bias_allowance", v.bias_allowance, rv);
    v.z_threshold = num(jv, "z_threshold", v.z_threshold, rv);
    v.variance_tolerance = num(jv, "variance_tolerance", v.variance_tolerance, rv);
    v.require_monotone = jv.value("require_monotone", false);
    rv["require_monotone"] = v.require_monotone;
    v.hill_k = static_cast<std::size_t>(num(jv, "hill_k", 0, rv));
    if (jv.contains("hill_range")) {
      v.hill_range = number_list(jv["hill_range"], "'verify.hill_range'");
      require(v.hill_range.size() == 2 && v.hill_range[0] < v.hill_range[1], "'verify.hill_range' must be [lo, hi]");
      rv["hill_range"] = v.hill_range;
    } else {
      rv["hill_range"] = nullptr;
    }
    v.largeball_replicates = static_cast<std::size_t>(num(jv, "largeball_replicates", 2000, rv));
    if (jv.contains("largeball_rho")) v.largeball_rho = number_list(jv["largeball_rho"], "'verify.largeball_rho'");
    rv["largeball_rho"] = v.largeball_rho.empty() ? json(c.rho) : json(v.largeball_rho);
    v.theory_beta = num(jv, "theory_beta", 0, rv);
    r["verify"] = rv;
  }
  c.output = str(j, "output", "out", r);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

/// Per-(measure, rho) seed derived from the master seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::size_t measure, std::size_t rho_index) {
  return splitmix64(seed ^ splitmix64(0x1000193ULL * (measure + 1) + rho_index));
}

inline std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// rho formatted for file names.
inline std::string rho_tag(double rho) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", rho);
  return buf;
}

inline std::string fluctuation_csv(const FluctuationRun& run) {
  std::ostringstream o;
  o << "seed_index,rho,value,centering,normalized\n";
  for (const auto& s : run.samples)
    o << s.seed_index << ',' << fmt(s.rho) << ',' << fmt(s.value) << ',' << fmt(s.centering) << ','
      << fmt(s.normalized) << '\n';
  return o.str();
}

inline std::string cf_csv(const CFReport& r) {
  std::ostringstream o;
  o << "theta,ecf_re,ecf_im,th_re,th_im,se,z\n";
  for (std::size_t i = 0; i < r.thetas.size(); ++i)
    o << fmt(r.thetas[i]) << ',' << fmt(r.empirical[i].real()) << ',' << fmt(r.empirical[i].imag()) << ','
      << fmt(r.theoretical[i].real()) << ',' << fmt(r.theoretical[i].imag()) << ',' << fmt(r.se[i]) << ','
      << fmt(r.z[i]) << '\n';
  return o.str();
}

inline json cf_summary(const CFReport& r) {
  return {{"sup_deviation", r.sup_deviation}, {"sup_z", r.sup_z},         {"N", r.N},
          {"bias_allowance", r.bias_allowance}, {"z_threshold", r.threshold_z}, {"pass", r.pass}};
}

inline std::vector<double> normalized_values(const FluctuationRun& run) {
  std::vector<double> v;
  v.reserve(run.samples.size());
  for (const auto& s : run.samples) v.push_back(s.normalized);
  return v;
}

}  // namespace coxballs::cli
