#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <regex>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(COXBALLS_CLI) + " " + args + " 2>&1";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int st = pclose(p);
  r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::path(COXBALLS_SCRATCH) / "cli" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void put(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

std::string config(const std::string& scaling, const std::string& extra = "", const std::string& marks = R"({"family": "rademacher"})") {
  return R"({"schema_version": 1,
  "model": {"d": 1, "kernel": {"family": "gaussian", "bandwidth": 1.0}, "radius": {"beta": 1.5, "r0": 1.0},
            "marks": )" + marks + R"(, "scaling": )" + scaling + R"(},
  "measures": [{"name": "unit", "type": "interval", "lo": 0.0, "hi": 1.0}])" +
         extra + "}";
}

std::size_t count(const std::string& s, const std::string& what) {
  std::size_t n = 0;
  for (auto p = s.find(what); p != std::string::npos; p = s.find(what, p + 1)) ++n;
  return n;
}

const std::string kLocal = R"({"scenario": "local", "u": 0, "v": 2})";

}  // namespace

TEST(Cli, Classify) {
  const auto d = scratch("classify");
  put(d / "poisson.json", config(R"({"scenario": "global", "u": 1.5, "v": 0})"));
  auto r = run("classify --config " + (d / "poisson.json").string());
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "global-poisson, a=1, n(rho)=1\n");

  put(d / "inter.json", config(R"({"scenario": "local", "u": 0, "v": 1.5})"));
  r = run("classify --config " + (d / "inter.json").string() + " --out " + (d / "o").string());
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out.rfind("local-intermediate", 0), 0u) << r.out;
  EXPECT_TRUE(fs::exists(d / "o" / "classify.json"));

  put(d / "gamma.json", config(R"({"scenario": "global", "u": 1, "v": -1.5})"));
  r = run("classify --config " + (d / "gamma.json").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("u + v > 0"), std::string::npos) << r.out;
}

TEST(Cli, ValidationErrors) {
  const auto d = scratch("invalid");
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("classify").code, 2);
  EXPECT_EQ(run("classify --config " + (d / "missing.json").string()).code, 2);
  put(d / "bad.json", "{ not json");
  EXPECT_EQ(run("classify --config " + (d / "bad.json").string()).code, 2);
  put(d / "beta.json", config(kLocal).replace(config(kLocal).find("1.5"), 3, "0.5"));
  EXPECT_EQ(run("simulate --config " + (d / "beta.json").string()).code, 2);
  put(d / "rho.json", config(kLocal, R"(, "rho": 1.5)"));
  EXPECT_EQ(run("simulate --config " + (d / "rho.json").string()).code, 2);
  put(d / "dup.json", config(kLocal, R"(, "measures": [{"name": "a"}, {"name": "a"}])"));
  EXPECT_EQ(run("classify --config " + (d / "dup.json").string()).code, 2);
  // no power tail is predicted in the Poisson regime
  put(d / "tail.json", config(R"({"scenario": "global", "u": 1.5, "v": 0})", R"(, "replicates": 20)"));
  EXPECT_EQ(run("verify tail --config " + (d / "tail.json").string() + " --out " + (d / "o").string()).code, 2);
}

TEST(Cli, RuntimeErrorExitCode) {
  const auto d = scratch("runtime");
  put(d / "c.json", config(kLocal, R"(, "replicates": 2, "rho": 0.1)"));
  put(d / "blocker", "a file, not a directory");
  EXPECT_EQ(run("simulate --config " + (d / "c.json").string() + " --out " + (d / "blocker" / "sub").string()).code, 3);
}

TEST(Cli, SimulateDeterministicAcrossThreads) {
  const auto d = scratch("simulate");
  put(d / "c.json", config(kLocal, R"(, "replicates": 10, "rho": [0.2, 0.1], "seed": 5)"));
  std::string first;
  for (const char* t : {"1", "4", "1"}) {
    const auto out = d / (std::string("t") + t);
    ASSERT_EQ(run("simulate --config " + (d / "c.json").string() + " --threads " + t + " --out " + out.string()).code, 0);
    const std::string csv = slurp(out / "fluct_unit_rho0.1.csv") + slurp(out / "fluct_unit_rho0.2.csv");
    const std::string meta = slurp(out / "simulate.json");
    if (first.empty()) first = csv + meta;
    EXPECT_EQ(csv + meta, first);
  }
  const std::string csv = slurp(d / "t1" / "fluct_unit_rho0.1.csv");
  EXPECT_EQ(csv.rfind("seed_index,rho,value,centering,normalized\n", 0), 0u);
  EXPECT_EQ(count(csv, "\n"), 11u);

  // the seed override changes the draws
  ASSERT_EQ(run("simulate --config " + (d / "c.json").string() + " --seed 6 --out " + (d / "s6").string()).code, 0);
  EXPECT_NE(slurp(d / "s6" / "fluct_unit_rho0.1.csv"), csv);

  // metadata carries the defaults
  const std::string meta = slurp(d / "t1" / "simulate.json");
  for (const char* key : {"\"kernel_eps\"", "\"bias_target_fraction\"", "\"radius_rel\"", "\"center_rel\"",
                          "\"bias_allowance\"", "\"z_threshold\"", "\"largeball_replicates\"", "\"truncation_bias_bound\"",
                          "\"theta\"", "\"c_kappa\""})
    EXPECT_NE(meta.find(key), std::string::npos) << key;
  EXPECT_TRUE(fs::exists(d / "t1" / "simulate_timings.json"));
}

TEST(Cli, SimulateZeroReplicates) {
  const auto d = scratch("zero");
  put(d / "c.json", config(kLocal, R"(, "replicates": 0, "rho": 0.1)"));
  ASSERT_EQ(run("simulate --config " + (d / "c.json").string() + " --out " + d.string()).code, 0);
  EXPECT_EQ(slurp(d / "fluct_unit_rho0.1.csv"), "seed_index,rho,value,centering,normalized\n");
}

TEST(Cli, VerifyLargeBalls) {
  const auto d = scratch("largeballs");
  auto r = run("verify largeballs --config " + std::string(COXBALLS_CONFIGS) + "/large_balls.json --out " + d.string());
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(count(r.out, "PASS largeballs"), 3u) << r.out;
  EXPECT_NE(slurp(d / "largeballs.csv").find("0.10000000000000001,18.97366596101027"), std::string::npos);

  // theory with the wrong radius exponent is rejected
  put(d / "wrong.json", config(kLocal, R"(, "rho": 0.1, "seed": 20261019, "verify": {"theory_beta": 2.0})"));
  r = run("verify largeballs --config " + (d / "wrong.json").string() + " --out " + (d / "w").string());
  EXPECT_EQ(r.code, 1) << r.out;
  EXPECT_NE(r.out.find("FAIL largeballs"), std::string::npos);
  EXPECT_NE(slurp(d / "w" / "verify_largeballs.json").find("\"pass\": false"), std::string::npos);
}

TEST(Cli, VerifyExactCf) {
  const auto d = scratch("exactcf");
  put(d / "c.json", config(kLocal, R"(, "rho": 0.2, "replicates": 4000, "seed": 11, "theta_grid": {"points": 9, "half_width": 2})"));
  auto r = run("verify exactcf --config " + (d / "c.json").string() + " --out " + d.string());
  EXPECT_EQ(r.code, 0) << r.out;
  const std::string csv = slurp(d / "exactcf_unit_rho0.2.csv");
  EXPECT_EQ(csv.rfind("theta,ecf_re,ecf_im,th_re,th_im,se,z\n", 0), 0u);
  EXPECT_EQ(count(csv, "\n"), 10u);
  EXPECT_TRUE(fs::exists(d / "verify_exactcf.json"));
}

TEST(Cli, Plot) {
  const auto d = scratch("plot");
  put(d / "cf.csv",
      "theta,ecf_re,ecf_im,th_re,th_im,se,z\n-1,0.5,-0.1,0.52,-0.09,0.02,1\n0,1,0,1,0,0,0\n1,0.5,0.1,0.52,0.09,0.02,1\n");
  auto r = run("plot " + (d / "cf.csv").string());
  ASSERT_EQ(r.code, 0) << r.out;
  const std::string svg = slurp(d / "cf.svg");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_EQ(count(svg, "<g>"), 2u);
  EXPECT_EQ(count(svg, "class=\"curve\""), 4u);
  EXPECT_EQ(count(svg, "class=\"band\""), 2u);
  ASSERT_EQ(run("plot " + (d / "cf.csv").string() + " --out " + (d / "again").string()).code, 0);
  EXPECT_EQ(slurp(d / "again" / "cf.svg"), svg);

  put(d / "lb.csv", "rho,expected,mean,band,N,pass\n0.1,18.97,19.01,0.29,2000,1\n0.2,13.41,13.38,0.25,2000,1\n");
  ASSERT_EQ(run("plot " + (d / "lb.csv").string()).code, 0);
  const std::string lb = slurp(d / "lb.svg");
  EXPECT_EQ(count(lb, "class=\"curve\""), 2u);
  EXPECT_EQ(count(lb, "class=\"band\""), 1u);

  put(d / "empty.csv", "theta,ecf_re,ecf_im,th_re,th_im,se,z\n");
  EXPECT_EQ(run("plot " + (d / "empty.csv").string()).code, 2);
  put(d / "junk.csv", "theta,ecf_re,ecf_im,th_re,th_im,se,z\n1,abc,0,0,0,0,0\n");
  EXPECT_EQ(run("plot " + (d / "junk.csv").string()).code, 2);
  put(d / "other.csv", "a,b\n1,2\n");
  EXPECT_EQ(run("plot " + (d / "other.csv").string()).code, 2);
  EXPECT_EQ(run("plot " + (d / "nothere.csv").string()).code, 2);
}
