// Command-line front end. Uses the C interface only.
#include "fgam/fgam.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

using nlohmann::json;

namespace {

constexpr const char* kSchema = "report-v1";

enum Exit { kOk = 0, kInternal = 1, kUsage = 2, kData = 3, kNumerical = 4 };

int exit_code(fgam_status s) {
  switch (s) {
    case FGAM_OK: return kOk;
    case FGAM_ERR_PARAMETER:
    case FGAM_ERR_CONFIG: return kUsage;
    case FGAM_ERR_SHAPE:
    case FGAM_ERR_DOMAIN:
    case FGAM_ERR_DATA:
    case FGAM_ERR_IO: return kData;
    case FGAM_ERR_NUMERICAL:
    case FGAM_ERR_CONVERGENCE:
    case FGAM_ERR_DEGENERATE:
    case FGAM_ERR_CAPACITY: return kNumerical;
    default: return kInternal;
  }
}

struct Failure {
  int code;
  std::string message;
};

void check(fgam_status s) {
  if (s != FGAM_OK) throw Failure{exit_code(s), std::string(fgam_status_name(s)) + " error: " + fgam_last_error()};
}

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
};

using Dataset = Handle<fgam_dataset, fgam_dataset_free>;
using Fit = Handle<fgam_fit, fgam_fit_free>;
using Result = Handle<fgam_test_result, fgam_test_result_free>;
using NullSample = Handle<fgam_null_sample, fgam_null_sample_free>;
using Study = Handle<fgam_study, fgam_study_free>;

json take_json(char* s) {
  std::unique_ptr<char, void (*)(char*)> owned(s, fgam_string_free);
  return json::parse(owned.get());
}

std::string take_string(char* s) {
  std::unique_ptr<char, void (*)(char*)> owned(s, fgam_string_free);
  return owned.get();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Failure{kData, "cannot write '" + path + "'"};
  out << text;
  if (!out) throw Failure{kData, "error writing '" + path + "'"};
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{kData, "cannot open '" + path + "'"};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fgam_quadrature parse_quadrature(const std::string& q) {
  return q == "midpoint" ? FGAM_QUAD_MIDPOINT : FGAM_QUAD_TRAPEZOID;
}

// Shared options.
struct Common {
  std::string out;
  std::uint64_t seed = 1;
  int threads = 1;
  bool no_timing = false;
};

struct DataArgs {
  std::string dir, y, x, t;
  bool header = false;

  void add(CLI::App* app, bool need_y) {
    app->add_option("--data", dir, "Directory holding y.csv, X.csv and t.csv");
    app->add_option("--y", y, need_y ? "Response CSV (N x 1)" : "Response CSV (N x 1, optional)");
    app->add_option("--x", x, "Predictor CSV (N x J, one curve per row)");
    app->add_option("--t", t, "Grid CSV (J values)");
    app->add_flag("--header", header, "CSV files start with a header row");
  }

  void load(Dataset& d, bool need_y) const {
    std::string yp = y, xp = x, tp = t;
    if (!dir.empty()) {
      if (yp.empty() && need_y) yp = dir + "/y.csv";
      if (xp.empty()) xp = dir + "/X.csv";
      if (tp.empty()) tp = dir + "/t.csv";
    }
    if (xp.empty() || tp.empty()) throw Failure{kUsage, "predictor and grid files are required (--data or --x/--t)"};
    if (need_y && yp.empty()) throw Failure{kUsage, "a response file is required (--data or --y)"};
    check(fgam_dataset_load_csv(yp.c_str(), xp.c_str(), tp.c_str(), header ? 1 : 0, &d.p));
  }

  json describe() const {
    return {{"data", dir}, {"y", y}, {"x", x}, {"t", t}, {"header", header}};
  }
};

void emit(const Common& c, const std::string& command, json config, json results, double seconds) {
  json warnings = json::array();
  if (results.contains("warnings")) warnings = results["warnings"];
  json env{{"schema", kSchema},
           {"tool", "fgam-cli"},
           {"version", fgam_version()},
           {"command", command},
           {"config", std::move(config)},
           {"results", std::move(results)},
           {"warnings", std::move(warnings)}};
  if (!c.no_timing) env["wall_clock_seconds"] = seconds;
  const std::string text = env.dump(2) + "\n";
  if (c.out.empty() || c.out == "-")
    std::cout << text;
  else
    write_file(c.out, text);
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void add_common(CLI::App* app, Common& c, bool monte_carlo) {
  app->add_option("-o,--out", c.out, "Report path (stdout when omitted)");
  if (monte_carlo) {
    app->add_option("--seed", c.seed, "Random seed")->capture_default_str();
    app->add_option("--threads", c.threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  }
  app->add_flag("--no-timing", c.no_timing, "Omit wall-clock time from the report");
}

// ---- fit ----

struct FitArgs {
  DataArgs data;
  Common common;
  std::string model = "fgamm";
  int kx = 10, kt = 10;
  std::string quadrature = "trapezoid";
  std::string surface;
  std::string verify;
};

int run_fit(const FitArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  Dataset d;
  a.data.load(d, a.verify.empty());
  const int n = fgam_dataset_n(d.p);

  if (!a.verify.empty()) {
    json report;
    try {
      report = json::parse(read_file(a.verify));
    } catch (const json::exception& e) {
      throw Failure{kData, "report '" + a.verify + "' is not valid JSON: " + e.what()};
    }
    if (!report.contains("results") || !report["results"].contains("summary") ||
        !report["results"].contains("fitted"))
      throw Failure{kData, "report '" + a.verify + "' has no fit summary"};
    const std::vector<double> stored = report["results"]["fitted"].get<std::vector<double>>();
    if (static_cast<int>(stored.size()) != n)
      throw Failure{kData, "report has " + std::to_string(stored.size()) + " fitted values but the data has " +
                               std::to_string(n) + " curves"};
    std::vector<double> recomputed(n);
    check(fgam_fitted_from_summary(report["results"]["summary"].dump().c_str(), d.p, recomputed.data()));
    double max_abs = 0.0, scale = 1.0;
    for (int i = 0; i < n; ++i) {
      max_abs = std::max(max_abs, std::abs(recomputed[i] - stored[i]));
      scale = std::max(scale, std::abs(stored[i]));
    }
    const bool ok = max_abs <= 1e-10 * scale;
    json res{{"max_abs_difference", max_abs}, {"tolerance", 1e-10 * scale}, {"verified", ok}};
    emit(a.common, "fit --verify", {{"report", a.verify}, {"dataset", a.data.describe()}}, res, elapsed(t0));
    return ok ? kOk : kNumerical;
  }

  fgam_model model;
  if (a.model == "fgamm")
    model = FGAM_MODEL_FGAMM;
  else if (a.model == "flm")
    model = FGAM_MODEL_FLM;
  else
    model = FGAM_MODEL_GCV;
  Fit f;
  check(fgam_fit_model(d.p, model, a.kx, a.kt, parse_quadrature(a.quadrature), &f.p));
  char* s = nullptr;
  check(fgam_fit_summary_json(f.p, &s));
  json summary = take_json(s);
  std::vector<double> fitted(n);
  check(fgam_fit_fitted(f.p, fitted.data()));

  if (!a.surface.empty()) {
    constexpr int g = 51;
    std::vector<double> xs(g), ts(g), par(g * g), xl(g * g), xsm(g * g), np(g * g), tot(g * g);
    check(fgam_fit_surface(f.p, g, g, xs.data(), ts.data(), par.data(), xl.data(), xsm.data(), np.data(),
                           tot.data()));
    std::ostringstream os;
    os << "x,t,parametric,x_linear,x_smooth,nonparametric,total\n";
    for (int i = 0; i < g; ++i)
      for (int k = 0; k < g; ++k) {
        const int c = i * g + k;
        os << fmt(xs[i]) << ',' << fmt(ts[k]) << ',' << fmt(par[c]) << ',' << fmt(xl[c]) << ',' << fmt(xsm[c])
           << ',' << fmt(np[c]) << ',' << fmt(tot[c]) << '\n';
      }
    write_file(a.surface, os.str());
  }

  json res{{"summary", summary}, {"fitted", fitted}, {"warnings", summary["warnings"]}};
  json cfg{{"model", a.model},
           {"kx", a.kx},
           {"kt", a.kt},
           {"quadrature", a.quadrature},
           {"surface", a.surface},
           {"dataset", a.data.describe()}};
  emit(a.common, "fit", cfg, res, elapsed(t0));
  return kOk;
}

// ---- test ----

struct TestArgs {
  DataArgs data;
  Common common;
  std::string method = "equalvc";
  int kx = 10, kt = 10, nsim = 0;
  double alpha = 0.05;
  std::string quadrature = "trapezoid";
  bool separate = false;
};

int run_test(const TestArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  fgam_test_method method;
  check(fgam_test_method_from_name(a.method.c_str(), &method));
  if (method == FGAM_TEST_KNOWNSIG1)
    throw Failure{kUsage, "knownsig1 needs the true nuisance effect and is available in simulation studies only"};
  Dataset d;
  a.data.load(d, true);
  fgam_test_options opt;
  fgam_test_options_init(&opt);
  opt.kx = a.kx;
  opt.kt = a.kt;
  opt.quadrature = parse_quadrature(a.quadrature);
  opt.nsim = a.nsim;
  opt.seed = a.common.seed;
  opt.alpha = a.alpha;
  opt.threads = a.common.threads;
  opt.bonferroni_separate_fits = a.separate ? 1 : 0;
  Result r;
  check(fgam_test_run(d.p, method, &opt, nullptr, 0, &r.p));
  char* s = nullptr;
  check(fgam_test_result_json(r.p, &s));
  json res = take_json(s);
  json cfg{{"method", a.method},   {"kx", a.kx},         {"kt", a.kt},
           {"nsim", res["nsim"]},  {"seed", a.common.seed}, {"alpha", a.alpha},
           {"quadrature", a.quadrature}, {"bonferroni_separate_fits", a.separate},
           {"dataset", a.data.describe()}};
  emit(a.common, "test", cfg, res, elapsed(t0));
  return res.value("unreliable", false) ? kNumerical : kOk;
}

// ---- simulate ----

struct SimulateArgs {
  Common common;
  std::string config;
  std::string table;
  int reps = -1;
  bool seed_set = false;
  bool threads_set = false;
  bool quiet = false;
};

void progress(int done, int total, void* user) {
  if (*static_cast<bool*>(user)) return;
  if (done == total || done % 10 == 0) std::cerr << "\r" << done << "/" << total << " replicates" << std::flush;
  if (done == total) std::cerr << '\n';
}

int run_simulate(SimulateArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  Study st;
  check(fgam_study_load(a.config.c_str(), &st.p));
  check(fgam_study_override(st.p, a.reps, a.threads_set ? a.common.threads : -1,
                            a.seed_set ? static_cast<int64_t>(a.common.seed) : -1));
  char* s = nullptr;
  check(fgam_study_config_json(st.p, &s));
  json cfg = take_json(s);
  cfg["config_path"] = a.config;
  check(fgam_study_run(st.p, progress, &a.quiet));
  check(fgam_study_table_json(st.p, &s));
  json res = take_json(s);
  if (!a.table.empty()) {
    check(fgam_study_table_csv(st.p, &s));
    write_file(a.table, take_string(s));
  }
  emit(a.common, "simulate", cfg, res, elapsed(t0));
  return kOk;
}

// ---- nulldist ----

struct NullArgs {
  DataArgs data;
  Common common;
  int kx = 10, kt = 10, nsim = 10000;
  std::string block = "sigma23";
  std::string quadrature = "trapezoid";
  std::string csv;
};

int run_nulldist(const NullArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  Dataset d;
  a.data.load(d, false);
  fgam_null_block block = FGAM_NULL_SIGMA23;
  if (a.block == "sigma1") block = FGAM_NULL_SIGMA1;
  if (a.block == "sigma2") block = FGAM_NULL_SIGMA2;
  if (a.block == "sigma3") block = FGAM_NULL_SIGMA3;
  NullSample ns;
  check(fgam_null_simulate(d.p, a.kx, a.kt, parse_quadrature(a.quadrature), block, a.nsim, a.common.seed,
                           a.common.threads, &ns.p));
  char* s = nullptr;
  check(fgam_null_sample_json(ns.p, &s));
  json res = take_json(s);
  if (!a.csv.empty()) {
    std::vector<double> v(fgam_null_sample_size(ns.p));
    check(fgam_null_sample_values(ns.p, v.data()));
    std::ostringstream os;
    os << "statistic\n";
    for (double x : v) os << fmt(x) << '\n';
    write_file(a.csv, os.str());
  }
  json cfg{{"kx", a.kx},       {"kt", a.kt},         {"nsim", a.nsim},
           {"seed", a.common.seed}, {"block", a.block}, {"quadrature", a.quadrature},
           {"csv", a.csv},     {"dataset", a.data.describe()}};
  emit(a.common, "nulldist", cfg, res, elapsed(t0));
  return kOk;
}

// ---- generate ----

struct GenerateArgs {
  Common common;
  std::string scenario = "convex";
  std::string dir;
  int n = 100, j = 30, kx = 10, kt = 10;
  double phi = 1.0, s2 = 0.0, s3 = 0.0;
  std::string quadrature = "trapezoid";
};

int run_generate(const GenerateArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  Dataset d;
  json res;
  if (a.scenario == "convex") {
    check(fgam_generate_convex(a.n, a.j, a.phi, a.common.seed, &d.p));
  } else {
    std::vector<double> b1(static_cast<std::size_t>(std::max(a.kt - 2, 0)));
    check(fgam_generate_mixed(a.n, a.j, a.s2, a.s3, a.kx, a.kt, parse_quadrature(a.quadrature), a.common.seed,
                              &d.p, b1.data()));
    res["b1"] = b1;
  }
  const std::string y = a.dir + "/y.csv", x = a.dir + "/X.csv", t = a.dir + "/t.csv";
  check(fgam_dataset_write_csv(d.p, y.c_str(), x.c_str(), t.c_str()));
  res["files"] = {y, x, t};
  json cfg{{"scenario", a.scenario}, {"n", a.n},   {"j", a.j},   {"seed", a.common.seed},
           {"dir", a.dir}};
  if (a.scenario == "convex")
    cfg["phi"] = a.phi;
  else
    cfg.update({{"sigma2_2", a.s2}, {"sigma2_3", a.s3}, {"kx", a.kx}, {"kt", a.kt}, {"quadrature", a.quadrature}});
  emit(a.common, "generate", cfg, res, elapsed(t0));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Functional generalized additive models: fitting, linearity tests and simulation studies"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(fgam_version()));
  const std::vector<std::string> quads{"trapezoid", "midpoint"};

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Fit an FLM, a GCV tensor FGAM or the mixed-model FGAM");
  fa.data.add(fit, true);
  add_common(fit, fa.common, false);
  fit->add_option("--model", fa.model, "flm | fgam-gcv | fgamm")
      ->check(CLI::IsMember({"flm", "fgam-gcv", "fgamm"}))
      ->capture_default_str();
  fit->add_option("--kx", fa.kx, "Basis size along x")->capture_default_str();
  fit->add_option("--kt", fa.kt, "Basis size along t")->capture_default_str();
  fit->add_option("--quadrature", fa.quadrature)->check(CLI::IsMember(quads))->capture_default_str();
  fit->add_option("--surface", fa.surface, "Write the 51 x 51 surface decomposition to this CSV");
  fit->add_option("--verify", fa.verify, "Recompute fitted values from a previous fit report and compare");

  TestArgs ta;
  auto* test = app.add_subcommand("test", "Test linearity, no effect or linearity in t");
  ta.data.add(test, true);
  add_common(test, ta.common, true);
  test->add_option("--method", ta.method, "equalvc | bonferroni | bootstrap | no-effect | linear-in-t")
      ->capture_default_str();
  test->add_option("--kx", ta.kx)->capture_default_str();
  test->add_option("--kt", ta.kt)->capture_default_str();
  test->add_option("--nsim", ta.nsim, "Monte Carlo size (0 = method default)")->capture_default_str();
  test->add_option("--alpha", ta.alpha)->capture_default_str();
  test->add_option("--quadrature", ta.quadrature)->check(CLI::IsMember(quads))->capture_default_str();
  test->add_flag("--separate-fits", ta.separate, "Bonferroni: fit each nuisance pair separately");

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Run a rejection-rate study from a TOML or JSON config");
  add_common(sim, sa.common, true);
  sim->add_option("config", sa.config, "Study configuration file")->required();
  sim->add_option("--table", sa.table, "Write the rejection table as CSV");
  sim->add_option("--reps", sa.reps, "Override the replicate count")->check(CLI::PositiveNumber);
  sim->add_flag("-q,--quiet", sa.quiet, "No progress output");

  NullArgs na;
  auto* nul = app.add_subcommand("nulldist", "Simulate the RLRT null distribution for a design");
  na.data.add(nul, false);
  add_common(nul, na.common, true);
  nul->add_option("--kx", na.kx)->capture_default_str();
  nul->add_option("--kt", na.kt)->capture_default_str();
  nul->add_option("--nsim", na.nsim)->check(CLI::PositiveNumber)->capture_default_str();
  nul->add_option("--block", na.block, "sigma23 | sigma1 | sigma2 | sigma3")
      ->check(CLI::IsMember({"sigma23", "sigma1", "sigma2", "sigma3"}))
      ->capture_default_str();
  nul->add_option("--quadrature", na.quadrature)->check(CLI::IsMember(quads))->capture_default_str();
  nul->add_option("--csv", na.csv, "Write the sorted null draws to this CSV");

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Write simulated y.csv, X.csv and t.csv");
  add_common(gen, ga.common, true);
  gen->add_option("--scenario", ga.scenario, "convex | mixed")
      ->check(CLI::IsMember({"convex", "mixed"}))
      ->capture_default_str();
  gen->add_option("--dir", ga.dir, "Output directory")->required()->check(CLI::ExistingDirectory);
  gen->add_option("--n", ga.n)->capture_default_str();
  gen->add_option("--j", ga.j)->capture_default_str();
  gen->add_option("--phi", ga.phi)->capture_default_str();
  gen->add_option("--s2", ga.s2, "sigma2_2 (mixed)")->capture_default_str();
  gen->add_option("--s3", ga.s3, "sigma2_3 (mixed)")->capture_default_str();
  gen->add_option("--kx", ga.kx)->capture_default_str();
  gen->add_option("--kt", ga.kt)->capture_default_str();
  gen->add_option("--quadrature", ga.quadrature)->check(CLI::IsMember(quads))->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }
  sa.seed_set = sim->count("--seed") > 0;
  sa.threads_set = sim->count("--threads") > 0;

  try {
    if (*fit) return run_fit(fa);
    if (*test) return run_test(ta);
    if (*sim) return run_simulate(sa);
    if (*nul) return run_nulldist(na);
    if (*gen) return run_generate(ga);
  } catch (const Failure& f) {
    std::cerr << "fgam-cli: " << f.message << '\n';
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "fgam-cli: internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kUsage;
}
