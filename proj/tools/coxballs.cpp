// Batch front-end: classify, simulate, verify and plot.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "experiment.hpp"
#include "svg.hpp"

namespace fs = std::filesystem;
using namespace coxballs;
using namespace coxballs::cli;

namespace {

enum Exit { kPass = 0, kFail = 1, kInvalid = 2, kRuntime = 3 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string out;
};

void add_common(CLI::App* app, Common& c, bool need_config = true) {
  auto* opt = app->add_option("--config", c.config, "experiment config (JSON)");
  if (need_config) opt->required();
  app->add_option("--seed", c.seed, "master seed (overrides the config)");
  app->add_option("--threads", c.threads, "worker threads (0: all cores)");
  app->add_option("--out", c.out, "output directory (overrides the config)");
}

ExperimentConfig load(const Common& c) {
  auto cfg = load_config(c.config);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.resolved["seed"] = cfg.seed;
  }
  if (c.threads) cfg.threads = *c.threads;
  if (!c.out.empty()) cfg.output = c.out;
  if (cfg.threads == 0) cfg.threads = std::max(1u, std::thread::hardware_concurrency());
  cfg.field.threads = cfg.threads;
  return cfg;
}

void write_file(const fs::path& p, const std::string& s) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream o(p, std::ios::binary);
  if (!o) throw std::runtime_error("cannot write '" + p.string() + "'");
  o << s;
}

std::string file_stem(const std::string& prefix, const std::string& name, double rho) {
  return prefix + "_" + name + "_rho" + rho_tag(rho);
}

// the resolved config, minus runtime-only fields, so metadata is a function of (config, seed)
json metadata_base(const ExperimentConfig& c, const std::string& command) {
  json m;
  m["command"] = command;
  m["config"] = c.resolved;
  m["config"].erase("threads");
  m["config"].erase("output");
  return m;
}

FluctuationRun simulate_one(const ExperimentConfig& c, std::size_t mi, std::size_t ri, std::size_t N) {
  return sample_fluctuations(c.model, c.measures[mi].mu, c.rho[ri], N, derive_seed(c.seed, mi, ri), c.field);
}

json run_info(const ExperimentConfig& c, std::size_t mi, std::size_t ri, const FluctuationRun& run) {
  return {{"measure", c.measures[mi].name},
          {"rho", c.rho[ri]},
          {"seed", derive_seed(c.seed, mi, ri)},
          {"N", run.samples.size()},
          {"regime", run.regime.summary()},
          {"n_rho", run.n},
          {"r_max", std::isfinite(run.r_max) ? json(run.r_max) : json(nullptr)},
          {"windowed", run.windowed},
          {"truncation_bias_bound", run.truncation_bias},
          {"window_bias_bound", run.window_bias},
          {"centering_error_bound", run.centering_error}};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void print_line(bool pass, const std::string& what) { std::printf("%s %s\n", pass ? "PASS" : "FAIL", what.c_str()); }

// ---------------------------------------------------------------- commands

int cmd_classify(const Common& cm) {
  auto c = load(cm);
  const Regime r = classify_regime(c.model);
  std::printf("%s\n", r.summary().c_str());
  json j = metadata_base(c, "classify");
  j["regime"] = {{"kind", to_string(r.kind)}, {"summary", r.summary()},   {"alpha", r.alpha},
                 {"gamma", r.gamma},          {"a", r.a},                 {"n_exponent", r.n_exponent},
                 {"n_coefficient", r.n_coefficient}};
  if (!cm.out.empty()) write_file(fs::path(c.output) / "classify.json", j.dump(2) + "\n");
  return kPass;
}

int cmd_simulate(const Common& cm) {
  auto c = load(cm);
  json meta = metadata_base(c, "simulate");
  json timing;
  timing["threads"] = c.threads;
  meta["runs"] = json::array();
  for (std::size_t mi = 0; mi < c.measures.size(); ++mi)
    for (std::size_t ri = 0; ri < c.rho.size(); ++ri) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto run = simulate_one(c, mi, ri, c.replicates);
      const std::string stem = file_stem("fluct", c.measures[mi].name, c.rho[ri]);
      write_file(fs::path(c.output) / (stem + ".csv"), fluctuation_csv(run));
      auto info = run_info(c, mi, ri, run);
      info["file"] = stem + ".csv";
      meta["runs"].push_back(info);
      timing[stem] = seconds_since(t0);
      std::printf("wrote %s.csv (%zu rows)\n", stem.c_str(), run.samples.size());
    }
  write_file(fs::path(c.output) / "simulate.json", meta.dump(2) + "\n");
  write_file(fs::path(c.output) / "simulate_timings.json", timing.dump(2) + "\n");
  return kPass;
}

int verify_largeballs(const ExperimentConfig& c, json& summary) {
  ModelSpec theory = c.model;
  if (c.verify.theory_beta > 0) theory.radius.beta = c.verify.theory_beta;
  const auto rhos = c.verify.largeball_rho.empty() ? c.rho : c.verify.largeball_rho;
  const std::size_t N = c.verify.largeball_replicates;
  require(N >= 1, "large-ball check needs at least one replicate");
  Box target{c.model.d, {0, 0, 0}, {0, 0, 0}};
  for (int i = 0; i < c.model.d; ++i) {
    target.lo[i] = -0.01;
    target.hi[i] = 0.01;
  }
  std::ostringstream csv;
  csv << "rho,expected,mean,band,N,pass\n";
  bool all = true;
  summary["largeballs"] = json::array();
  for (std::size_t ri = 0; ri < rhos.size(); ++ri) {
    std::vector<double> counts(N);
    const std::uint64_t seed = derive_seed(c.seed, 1000, ri);
    parallel_for(N, c.threads, [&](std::size_t i) {
      RandomStream rng(seed, i);
      counts[i] = static_cast<double>(count_large_balls(sample_realization(c.model, rhos[ri], target, rng)));
    });
    const double mean = pairwise_sum(counts) / static_cast<double>(N);
    const double expect = expected_large_balls(theory, rhos[ri]);
    const double band = c.verify.z_threshold * std::sqrt(expect / static_cast<double>(N));
    const bool pass = std::abs(mean - expect) <= band;
    all = all && pass;
    csv << fmt(rhos[ri]) << ',' << fmt(expect) << ',' << fmt(mean) << ',' << fmt(band) << ',' << N << ','
        << (pass ? 1 : 0) << '\n';
    summary["largeballs"].push_back(
        {{"rho", rhos[ri]}, {"expected", expect}, {"mean", mean}, {"band", band}, {"N", N}, {"seed", seed}, {"pass", pass}});
    char buf[200];
    std::snprintf(buf, sizeof buf, "largeballs rho=%g mean=%.4f expected=%.4f band=%.4f", rhos[ri], mean, expect, band);
    print_line(pass, buf);
  }
  write_file(fs::path(c.output) / "largeballs.csv", csv.str());
  return all ? kPass : kFail;
}

// theory on the whole grid, evaluated in parallel
std::vector<CFValue> theory_grid(const ExperimentConfig& c, const std::function<CFValue(double)>& f) {
  std::vector<CFValue> v(c.thetas.size());
  parallel_for(c.thetas.size(), c.threads, [&](std::size_t i) { v[i] = f(c.thetas[i]); });
  return v;
}

CFReport compare_grid(const ExperimentConfig& c, const std::vector<double>& x, const std::vector<CFValue>& th,
                      double allowance) {
  std::size_t i = 0;
  return compare(x, [&](double) { return th[i++]; }, c.thetas, allowance, c.verify.z_threshold);
}

int verify_cf(const ExperimentConfig& c, bool exact, json& summary) {
  const char* key = exact ? "exactcf" : "limitcf";
  summary[key] = json::array();
  const Regime reg = classify_regime(c.model);
  bool all = true;
  for (std::size_t mi = 0; mi < c.measures.size(); ++mi) {
    std::vector<double> sups;
    bool last = false;
    for (std::size_t ri = 0; ri < c.rho.size(); ++ri) {
      const auto run = simulate_one(c, mi, ri, c.replicates);
      const auto x = normalized_values(run);
      const TestMeasure& mu = c.measures[mi].mu;
      const double rho = c.rho[ri];
      std::vector<CFValue> th;
      if (exact)
        th = theory_grid(c, [&](double t) { return exact_cf(c.model, mu, rho, t, c.cf, run.r_max); });
      else
        th = theory_grid(c, [&](double t) { return limit_cf(reg, c.model, mu, t, c.cf); });
      const auto rep = compare_grid(c, x, th, exact ? 0.0 : c.verify.bias_allowance);
      const std::string stem = file_stem(key, c.measures[mi].name, rho);
      write_file(fs::path(c.output) / (stem + ".csv"), cf_csv(rep));
      auto info = run_info(c, mi, ri, run);
      info["report"] = cf_summary(rep);
      info["file"] = stem + ".csv";
      summary[key].push_back(info);
      sups.push_back(rep.sup_deviation);
      char buf[200];
      std::snprintf(buf, sizeof buf, "%s %s rho=%g sup_dev=%.5f sup_z=%.2f N=%zu", key, c.measures[mi].name.c_str(), rho,
                    rep.sup_deviation, rep.sup_z, rep.N);
      print_line(rep.pass, buf);
      if (exact) all = all && rep.pass;
      last = rep.pass;
    }
    if (!exact) {
      // the smallest rho decides; optionally the deviation must shrink with rho
      std::vector<std::size_t> order(c.rho.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](auto a, auto b) { return c.rho[a] > c.rho[b]; });
      bool mono = true;
      for (std::size_t k = 1; k < order.size(); ++k) mono = mono && sups[order[k]] < sups[order[k - 1]];
      const bool smallest_pass = [&] {
        const std::size_t i = order.back();
        return summary[key][summary[key].size() - c.rho.size() + i]["report"]["pass"].get<bool>();
      }();
      (void)last;
      const bool pass = smallest_pass && (!c.verify.require_monotone || mono);
      all = all && pass;
      print_line(pass, std::string("limitcf ") + c.measures[mi].name + " (smallest rho" +
                           (c.verify.require_monotone ? ", monotone in rho" : "") + (mono ? ", monotone: yes)" : ", monotone: no)"));
    }
  }
  return all ? kPass : kFail;
}

double smallest_rho_index(const ExperimentConfig& c) {
  return static_cast<double>(std::min_element(c.rho.begin(), c.rho.end()) - c.rho.begin());
}

int verify_variance(const ExperimentConfig& c, json& summary) {
  const Regime reg = classify_regime(c.model);
  if (!(reg.kind == RegimeKind::global_stable || reg.kind == RegimeKind::local_stable) || reg.alpha != 2.0)
    throw ValidationError("variance check needs a stable regime with alpha = 2 marks (got " + reg.summary() + ")");
  summary["variance"] = json::array();
  bool all = true;
  const auto smallest = static_cast<std::size_t>(smallest_rho_index(c));
  for (std::size_t mi = 0; mi < c.measures.size(); ++mi) {
    const auto AB = signed_alpha_integrals(c.measures[mi].mu, 2.0, c.model.radius, c.cf.ball);
    const double predicted = 2 * c.model.marks.sigma_alpha() * AB.A;
    for (std::size_t ri = 0; ri < c.rho.size(); ++ri) {
      const auto run = simulate_one(c, mi, ri, c.replicates);
      const auto v = variance_check(normalized_values(run), predicted, c.verify.variance_tolerance);
      auto info = run_info(c, mi, ri, run);
      info["variance"] = {{"sample_variance", v.sample_variance}, {"predicted", predicted}, {"ratio", v.ratio},
                          {"band", v.band},  {"tolerance", v.tolerance}, {"A", AB.A}, {"A_error", AB.error_estimate},
                          {"pass", v.pass}};
      summary["variance"].push_back(info);
      char buf[200];
      std::snprintf(buf, sizeof buf, "variance %s rho=%g sample=%.5f predicted=%.5f ratio=%.4f", c.measures[mi].name.c_str(),
                    c.rho[ri], v.sample_variance, predicted, v.ratio);
      print_line(v.pass, buf);
      if (ri == smallest) all = all && v.pass;
    }
  }
  return all ? kPass : kFail;
}

int verify_tail(const ExperimentConfig& c, json& summary) {
  const Regime reg = classify_regime(c.model);
  std::vector<double> range = c.verify.hill_range;
  if (range.empty()) {
    double expect = 0;
    if (reg.kind == RegimeKind::global_stable || reg.kind == RegimeKind::local_stable) expect = reg.alpha;
    else if (reg.is_small_balls()) expect = reg.gamma;
    else throw ValidationError("no power tail is predicted for " + reg.summary() + "; set verify.hill_range");
    range = {expect - 0.2, expect + 0.2};
  }
  summary["tail"] = json::array();
  bool all = true;
  const auto smallest = static_cast<std::size_t>(smallest_rho_index(c));
  for (std::size_t mi = 0; mi < c.measures.size(); ++mi)
    for (std::size_t ri = 0; ri < c.rho.size(); ++ri) {
      const auto run = simulate_one(c, mi, ri, c.replicates);
      const auto h = hill_tail_index(normalized_values(run), c.verify.hill_k);
      const bool pass = h.index >= range[0] && h.index <= range[1];
      auto info = run_info(c, mi, ri, run);
      info["tail"] = {{"hill_index", h.index}, {"k", h.k}, {"no_power_tail", h.no_power_tail}, {"range", range}, {"pass", pass}};
      summary["tail"].push_back(info);
      char buf[200];
      std::snprintf(buf, sizeof buf, "tail %s rho=%g hill=%.3f k=%zu range=[%g, %g]%s", c.measures[mi].name.c_str(), c.rho[ri],
                    h.index, h.k, range[0], range[1], h.no_power_tail ? " (no power tail)" : "");
      print_line(pass, buf);
      if (ri == smallest) all = all && pass;
    }
  return all ? kPass : kFail;
}

int cmd_verify(const Common& cm, const std::string& which) {
  auto c = load(cm);
  json summary = metadata_base(c, "verify " + which);
  int code = kPass;
  if (which == "largeballs") code = verify_largeballs(c, summary);
  else if (which == "exactcf") code = verify_cf(c, true, summary);
  else if (which == "limitcf") code = verify_cf(c, false, summary);
  else if (which == "variance") code = verify_variance(c, summary);
  else if (which == "tail") code = verify_tail(c, summary);
  summary["pass"] = code == kPass;
  write_file(fs::path(c.output) / ("verify_" + which + ".json"), summary.dump(2) + "\n");
  return code;
}

// ---------------------------------------------------------------- plot

std::vector<std::vector<double>> read_csv(const std::string& path, std::string& header) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open report '" + path + "'");
  if (!std::getline(in, header)) throw ValidationError("report '" + path + "' is empty");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ValidationError("malformed number '" + cell + "' in report '" + path + "'");
      }
    }
    rows.push_back(row);
  }
  return rows;
}

std::string plot_report(const std::string& path) {
  std::string header;
  const auto rows = read_csv(path, header);
  if (header == "theta,ecf_re,ecf_im,th_re,th_im,se,z") {
    if (rows.empty()) throw ValidationError("report '" + path + "' has an empty theta grid");
    Panel re{"Re CF", "theta", {{}, {}, "#2166ac", "empirical"}, {{}, {}, "#b2182b", "theory"}, {}, false};
    Panel im{"Im CF", "theta", {{}, {}, "#2166ac", "empirical"}, {{}, {}, "#b2182b", "theory"}, {}, false};
    for (const auto& r : rows) {
      if (r.size() != 7) throw ValidationError("CF report rows need 7 columns");
      for (Panel* p : {&re, &im}) {
        const bool isre = p == &re;
        p->a.x.push_back(r[0]);
        p->a.y.push_back(isre ? r[1] : r[2]);
        p->b.x.push_back(r[0]);
        p->b.y.push_back(isre ? r[3] : r[4]);
        p->band.x.push_back(r[0]);
        p->band.lo.push_back((isre ? r[3] : r[4]) - 3 * r[5]);
        p->band.hi.push_back((isre ? r[3] : r[4]) + 3 * r[5]);
      }
    }
    return render_svg({re, im});
  }
  if (header == "rho,expected,mean,band,N,pass") {
    if (rows.empty()) throw ValidationError("report '" + path + "' has no rows");
    Panel p{"large balls covering the origin", "rho", {{}, {}, "#2166ac", "sample mean"},
            {{}, {}, "#b2182b", "expected"}, {}, true};
    auto sorted = rows;
    std::sort(sorted.begin(), sorted.end());
    for (const auto& r : sorted) {
      if (r.size() != 6) throw ValidationError("large-ball report rows need 6 columns");
      if (!(r[0] > 0)) throw ValidationError("large-ball report needs positive rho");
      p.a.x.push_back(r[0]);
      p.a.y.push_back(r[2]);
      p.b.x.push_back(r[0]);
      p.b.y.push_back(r[1]);
      p.band.x.push_back(r[0]);
      p.band.lo.push_back(r[1] - r[3]);
      p.band.hi.push_back(r[1] + r[3]);
    }
    return render_svg({p});
  }
  throw ValidationError("unrecognized report header in '" + path + "'");
}

int cmd_plot(const std::vector<std::string>& files, const std::string& out) {
  if (files.empty()) throw ValidationError("plot needs at least one report file");
  for (const auto& f : files) {
    const std::string svg = plot_report(f);
    fs::path dst = fs::path(f).replace_extension(".svg");
    if (!out.empty()) dst = fs::path(out) / dst.filename();
    write_file(dst, svg);
    std::printf("wrote %s\n", dst.string().c_str());
  }
  return kPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random-ball field simulation and characteristic-function verification"};
  app.require_subcommand(1);
  Common cm;
  auto* classify = app.add_subcommand("classify", "print the limit regime of a model");
  add_common(classify, cm);
  auto* simulate = app.add_subcommand("simulate", "write normalized fluctuation samples");
  add_common(simulate, cm);
  auto* verify = app.add_subcommand("verify", "compare simulation with theory");
  verify->require_subcommand(1);
  std::string which;
  for (const char* name : {"largeballs", "exactcf", "limitcf", "variance", "tail"}) {
    auto* s = verify->add_subcommand(name);
    add_common(s, cm);
    s->callback([&which, name] { which = name; });
  }
  auto* plot = app.add_subcommand("plot", "render CF or large-ball reports as SVG");
  std::vector<std::string> files;
  plot->add_option("reports", files, "report CSV files")->required();
  plot->add_option("--out", cm.out, "output directory (default: next to each report)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kInvalid;
  }
  try {
    if (*classify) return cmd_classify(cm);
    if (*simulate) return cmd_simulate(cm);
    if (*verify) return cmd_verify(cm, which);
    if (*plot) return cmd_plot(files, cm.out);
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInvalid;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime error: %s\n", e.what());
    return kRuntime;
  }
  return kInvalid;
}
