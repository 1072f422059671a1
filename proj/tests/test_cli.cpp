#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "trapsim/cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = trapsim::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json load_json(const fs::path& p) { return json::parse(slurp(p)); }

std::size_t line_count(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

// Fresh scratch directory per test case.
struct Scratch {
  fs::path root;
  explicit Scratch(const std::string& name) {
    root = fs::temp_directory_path() / ("trapsim_cli_" + std::to_string(::getpid()) + "_" + name);
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Scratch() { fs::remove_all(root); }
  std::string operator/(const std::string& leaf) const { return (root / leaf).string(); }
};

fs::path only_file(const fs::path& dir, const std::string& ext) {
  fs::path found;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ext) {
      REQUIRE(found.empty());
      found = e.path();
    }
  }
  REQUIRE_FALSE(found.empty());
  return found;
}

const std::vector<std::string> kDynamics{"--load-rate-probe", "1", "--load-rate-mot", "1", "--loss-rate",
                                         "3.3333333333333335", "--atom-rate", "1000", "--background-rate", "100"};

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("depth report") {
  Scratch s("depth");
  auto r = run({"--out", s / "d", "depth", "--pp-mw", "10", "--panc-mw", "0"});
  REQUIRE(r.code == 0);
  const json rep = json::parse(r.out);
  CHECK(rep["depth_mK"].get<double>() == doctest::Approx(0.5729).epsilon(1e-4));
  CHECK(rep["enhancement_exact"].get<double>() == 0.0);

  const json side = load_json(s / "d/depth.json");
  CHECK(side["tool"] == "trapsim");
  CHECK(side["version"] == trapsim::cli::kVersion);
  CHECK(side["command"] == "depth");
  CHECK(side["config"]["primary.power_mw"].get<double>() == 10.0);
  CHECK(side["config"].contains("run.seed"));
  CHECK(side["report"] == rep);

  r = run({"--out", s / "d", "depth", "--pp-mw", "10", "--panc-mw", "1.3"});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["enhancement_exact"].get<double>() == doctest::Approx(0.9654).epsilon(1e-4));

  r = run({"--out", s / "d", "depth", "--pp-mw", "10", "--panc-mw", "0.1", "--zeta-both"});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["enhancement_exact"].get<double>() == doctest::Approx(0.13218).epsilon(1e-4));

  r = run({"--out", s / "d", "depth", "--pp-mw", "10", "--panc-mw", "1", "--theta-deg", "143"});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["kappa"].get<double>() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("usage errors") {
  Scratch s("usage");
  auto r = run({"--out", s / "u", "depth", "--panc-mw", "0"});
  CHECK(r.code == 1);
  CHECK(r.err.find("primary.power_mw") != std::string::npos);
  CHECK(run({}).code == 1);
  CHECK(run({"depth", "--pp-mw", "ten"}).code == 1);
  CHECK(run({"depth", "--pp-mw", "10", "--bogus"}).code == 1);
  CHECK(run({"--out", s / "u", "--set", "primary.colour=3", "depth", "--pp-mw", "10"}).code == 1);
  CHECK(run({"--out", s / "u", "depth", "--pp-mw", "-4"}).code == 1);
  CHECK(run({"--out", s / "u", "depth", "--pp-mw", "10", "--kappa", "2"}).code == 1);
  CHECK(run({"--config", s / "missing.json", "depth", "--pp-mw", "10"}).code != 0);
  CHECK(run({"--version"}).code == 0);
}

TEST_CASE("config files and overrides") {
  Scratch s("config");
  std::ofstream(s / "c.json") << R"({"primary.power_mw": 15.2, "ancillary.power_mw": 0})";
  auto r = run({"--config", s / "c.json", "--out", s / "o", "depth"});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["depth_mK"].get<double>() == doctest::Approx(0.87075).epsilon(1e-5));

  r = run({"--config", s / "c.json", "--out", s / "o", "depth", "--pp-mw", "10"});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["depth_mK"].get<double>() == doctest::Approx(0.57286).epsilon(1e-5));

  r = run({"--config", s / "c.json", "--out", s / "o", "--set", "primary.zeta=0.5", "depth"});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["depth_mK"].get<double>() == doctest::Approx(0.87075 * 0.5 / 0.33).epsilon(1e-5));

  std::ofstream(s / "bad.json") << R"({"primary.powr_mw": 15.2})";
  r = run({"--config", s / "bad.json", "--out", s / "o", "depth"});
  CHECK(r.code == 1);
  CHECK(r.err.find("primary.powr_mw") != std::string::npos);
}

TEST_CASE("numeric flags survive the sidecar exactly") {
  Scratch s("roundtrip");
  const std::vector<std::string> values{"10.000000000000002", "0.1", "1e-7", "3.3333333333333335", "15.2"};
  for (const auto& v : values) {
    REQUIRE(run({"--out", s / "n", "depth", "--pp-mw", v, "--panc-mw", v}).code == 0);
    const json side = load_json(s / "n/depth.json");
    CHECK(side["config"]["primary.power_mw"].get<double>() == std::strtod(v.c_str(), nullptr));
    CHECK(side["config"]["ancillary.power_mw"].get<double>() == std::strtod(v.c_str(), nullptr));

    // Running again from the sidecar gives the same report.
    const std::string first = slurp(s / "n/depth.json");
    REQUIRE(run({"--config", s / "n/depth.json", "--out", s / "n", "depth"}).code == 0);
    CHECK(slurp(s / "n/depth.json") == first);
  }
}

TEST_CASE("profile output") {
  Scratch s("profile");
  auto r = run({"--out", s / "p", "profile", "--pp-mw", "10", "--panc-mw", "0.5", "--kappa", "0", "--z-min", "0",
                "--z-max", "6", "--n-points", "301"});
  REQUIRE(r.code == 0);
  std::istringstream csv(slurp(s / "p/profile.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "z_um,depth_mK");
  std::vector<double> depth;
  while (std::getline(csv, line)) depth.push_back(std::stod(line.substr(line.find(',') + 1)));
  CHECK(depth.size() == 301);
  for (std::size_t i = 1; i < depth.size(); ++i) CHECK(depth[i] < depth[i - 1]);
  CHECK(load_json(s / "p/profile.json")["command"] == "profile");

  r = run({"--out", s / "q", "profile", "--pp-mw", "10", "--panc-mw", "0.5", "--z-min", "-1", "--z-max", "1",
           "--n-points", "2001"});
  REQUIRE(r.code == 0);
  std::istringstream csv2(slurp(s / "q/profile.csv"));
  std::getline(csv2, line);
  std::vector<double> z, d;
  while (std::getline(csv2, line)) {
    z.push_back(std::stod(line.substr(0, line.find(','))));
    d.push_back(std::stod(line.substr(line.find(',') + 1)));
  }
  std::vector<double> peaks;
  for (std::size_t i = 1; i + 1 < d.size(); ++i)
    if (d[i] > d[i - 1] && d[i] >= d[i + 1]) peaks.push_back(z[i]);
  REQUIRE(peaks.size() >= 4);
  for (std::size_t i = 1; i < peaks.size(); ++i) CHECK(peaks[i] - peaks[i - 1] == doctest::Approx(0.426).epsilon(0.01));

  CHECK(run({"--out", s / "p", "profile", "--pp-mw", "10", "--n-points", "1"}).code == 1);
  CHECK(run({"--out", s / "p", "profile", "--pp-mw", "10", "--z-min", "3", "--z-max", "1"}).code == 1);
}

TEST_CASE("unwritable output directory") {
  Scratch s("unwritable");
  std::ofstream(s / "file") << "x";
  const auto r = run({"--out", s / "file", "depth", "--pp-mw", "10"});
  CHECK(r.code == 2);
  CHECK_FALSE(r.err.empty());
}

TEST_CASE("simulate output and reproducibility") {
  Scratch s("simulate");
  const auto args = concat({"--seed", "17", "--out", s / "a", "simulate", "--n-cycles", "7"}, kDynamics);
  REQUIRE(run(args).code == 0);
  const std::string trace = slurp(s / "a/trace.csv");
  CHECK(trace.rfind("t_ms,counts,phase\n", 0) == 0);
  CHECK(line_count(trace) == 1 + 7 * 120);

  auto again = args;
  again[3] = s / "b";
  REQUIRE(run(again).code == 0);
  CHECK(slurp(s / "b/trace.csv") == trace);

  REQUIRE(run({"--config", s / "a/trace.json", "--out", s / "c", "simulate"}).code == 0);
  CHECK(slurp(s / "c/trace.csv") == trace);

  auto other = args;
  other[1] = "18";
  other[3] = s / "d";
  REQUIRE(run(other).code == 0);
  CHECK(slurp(s / "d/trace.csv") != trace);

  const json side = load_json(s / "a/trace.json");
  CHECK(side["config"]["run.seed"].get<std::uint64_t>() == 17);
  CHECK(side["config"]["cycle.n_cycles"].get<int>() == 7);
}

TEST_CASE("simulate without loading gives background only") {
  Scratch s("background");
  REQUIRE(run({"--out", s / "a", "simulate", "--n-cycles", "50", "--atom-rate", "1000", "--background-rate", "100"})
              .code == 0);
  const auto r = run({"--out", s / "b", "analyze", s / "a/trace.csv"});
  REQUIRE(r.code == 0);
  const json rep = json::parse(r.out);
  CHECK(rep["n_components"] == 1);
  CHECK(rep["means"][0].get<double>() == doctest::Approx(5.0).epsilon(0.05));
  CHECK(rep["occupancy_probabilities"]["0"].get<double>() == 1.0);
}

TEST_CASE("analyze a simulated trace") {
  Scratch s("analyze");
  REQUIRE(run(concat({"--seed", "3", "--out", s / "a", "simulate", "--n-cycles", "300"}, kDynamics)).code == 0);
  auto r = run({"--out", s / "b", "analyze", s / "a/trace.csv", "--components", "2"});
  REQUIRE(r.code == 0);
  json rep = json::parse(r.out);
  CHECK(rep["model"] == "poisson");
  CHECK(rep["n_components"] == 2);
  CHECK(rep["n_bins"] == 300 * 39);
  CHECK(rep["step_counts"].get<double>() == doctest::Approx(50.0).epsilon(0.05));
  CHECK(rep["lifetime_ms"].get<double>() == doctest::Approx(300.0).epsilon(0.25));
  CHECK(rep["occupancy_probabilities"]["1"].get<double>() == doctest::Approx(0.23).epsilon(0.25));
  const json side = load_json(s / "b/analysis.json");
  CHECK(side["report"] == rep);
  CHECK(side["command"] == "analyze");

  r = run({"--out", s / "b", "analyze", s / "a/trace.csv", "--components", "2", "--model", "gaussian"});
  REQUIRE(r.code == 0);
  rep = json::parse(r.out);
  CHECK(rep["model"] == "gaussian");
  CHECK(rep.contains("variances"));

  r = run({"--out", s / "b", "analyze", s / "a/trace.csv", "--keep-first-bin"});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["n_bins"] == 300 * 40);

  CHECK(run({"--out", s / "b", "analyze", s / "a/trace.csv", "--model", "cauchy"}).code == 1);
  CHECK(run({"--out", s / "b", "analyze", s / "a/trace.csv", "--components", "9"}).code == 1);
}

TEST_CASE("analyze plain two-column traces and reject malformed rows") {
  Scratch s("plain");
  {
    std::ofstream f(s / "flat.csv");
    f << "t_ms,counts\n";
    for (int i = 0; i < 40; ++i) f << i * 50 << ",12\n";
  }
  auto r = run({"--out", s / "o", "analyze", s / "flat.csv", "--keep-first-bin"});
  REQUIRE(r.code == 0);
  json rep = json::parse(r.out);
  CHECK(rep["n_components"] == 1);
  CHECK(rep["degenerate"] == true);
  CHECK(rep["n_bins"] == 40);

  {
    std::ofstream f(s / "bad.csv");
    f << "t_ms,counts,phase\n0,3,probe\n50,4,probe\n100,x,probe\n";
  }
  r = run({"--out", s / "o", "analyze", s / "bad.csv"});
  CHECK(r.code == 2);
  CHECK(r.err.find("line 4") != std::string::npos);

  {
    std::ofstream f(s / "phase.csv");
    f << "t_ms,counts,phase\n0,3,probe\n50,4,dusk\n";
  }
  r = run({"--out", s / "o", "analyze", s / "phase.csv"});
  CHECK(r.code == 2);
  CHECK(r.err.find("line 3") != std::string::npos);

  {
    std::ofstream f(s / "uneven.csv");
    f << "t_ms,counts\n0,3\n50,4\n120,4\n";
  }
  CHECK(run({"--out", s / "o", "analyze", s / "uneven.csv"}).code == 2);
  CHECK(run({"--out", s / "o", "analyze", s / "nothing.csv"}).code == 2);
}

TEST_CASE("fit loading curve") {
  Scratch s("loading");
  {
    std::ofstream f(s / "pts.csv");
    f << "power_mW,probability,stderr\n";
    for (int i = 0; i < 15; ++i) {
      const double p = 3.0 + 0.5 * i;
      f << p << ',' << 0.47 * (std::erf(1.7 * (p - 6.3)) + 1.0) / 2.0 << ",0.01\n";
    }
  }
  auto r = run({"--out", s / "o", "fit-loading", s / "pts.csv"});
  REQUIRE(r.code == 0);
  const json rep = json::parse(r.out);
  CHECK(rep["p_half_mW"].get<double>() == doctest::Approx(6.3).epsilon(1e-6));
  CHECK(rep["alpha_per_mW"].get<double>() == doctest::Approx(1.7).epsilon(1e-5));
  CHECK(rep["eta0"].get<double>() == doctest::Approx(0.47).epsilon(1e-6));
  CHECK(rep.contains("rms_residual"));
  CHECK(load_json(s / "o/fit_loading.json")["report"] == rep);

  {
    std::ofstream f(s / "flat.csv");
    f << "power_mW,probability\n";
    for (int i = 0; i < 8; ++i) f << i << ",0.25\n";
  }
  r = run({"--out", s / "o", "fit-loading", s / "flat.csv"});
  CHECK(r.code == 2);
  CHECK(r.err.find("not identifiable") != std::string::npos);
}

TEST_CASE("sweep output and reproducibility") {
  Scratch s("sweep");
  auto r = run({"--seed", "4", "--out", s / "a", "sweep", "--pp-mw", "10", "--panc-mw", "0.1", "--param", "theta_deg",
                "--grid", "0:180:19", "--outputs", "kappa,trap_depth"});
  REQUIRE(r.code == 0);
  const fs::path csv = only_file(s.root / "a", ".csv");
  CHECK(csv.filename().string().rfind("sweep_theta_deg_", 0) == 0);
  const std::string text = slurp(csv);
  CHECK(line_count(text) == 20);
  CHECK(text.rfind("theta_deg,kappa,depth_mK,error\n", 0) == 0);
  const fs::path sidecar = csv.parent_path() / (csv.stem().string() + ".json");
  REQUIRE(fs::exists(sidecar));

  REQUIRE(run({"--config", sidecar.string(), "--out", s / "b", "sweep"}).code == 0);
  CHECK(slurp(only_file(s.root / "b", ".csv")) == text);

  // Stochastic outputs rerun from the sidecar too, on any thread count.
  const auto sto = concat({"--seed", "9", "--out", s / "c", "sweep", "--pp-mw", "10", "--param", "panc_mw", "--grid",
                           "0,0.1,0.2", "--outputs", "occupancy,lifetime", "--n-cycles", "30"},
                          kDynamics);
  REQUIRE(run(sto).code == 0);
  const fs::path c_csv = only_file(s.root / "c", ".csv");
  ::setenv("TRAPSIM_THREADS", "1", 1);
  REQUIRE(run({"--config", (c_csv.parent_path() / (c_csv.stem().string() + ".json")).string(), "--out", s / "d",
               "sweep"})
              .code == 0);
  ::unsetenv("TRAPSIM_THREADS");
  CHECK(slurp(only_file(s.root / "d", ".csv")) == slurp(c_csv));

  // A second sweep into the same directory does not overwrite the first.
  REQUIRE(run({"--config", sidecar.string(), "--out", s / "a", "sweep"}).code == 0);
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(s.root / "a")) n += e.path().extension() == ".csv";
  CHECK(n == 2);

  CHECK(run({"--out", s / "e", "sweep", "--pp-mw", "10", "--param", "theta_deg", "--grid", "5,5"}).code == 1);
  CHECK(run({"--out", s / "e", "sweep", "--pp-mw", "10", "--outputs", "colour", "--grid", "1,2"}).code == 1);
}
