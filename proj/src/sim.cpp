#include "fgam/sim.hpp"

#include "fgam/parallel.hpp"
#include "fgam/rng.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <mutex>
#include <numbers>
#include <sstream>

namespace fgam {

namespace {

constexpr double kFlagFailureRate = 0.02;

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

}  // namespace

FunctionalDataset gen_predictors(int n, int j, std::uint64_t seed) {
  if (n < 1) throw ParameterError("need at least one curve");
  if (j < 4) throw ParameterError("need at least 4 observation times");
  FunctionalDataset d;
  d.t = Eigen::VectorXd::LinSpaced(j, 0.0, 1.0);
  d.x.resize(n, j);
  constexpr double pi = std::numbers::pi;
  Rng rng = make_rng(seed);
  std::normal_distribution<double> normal;
  for (int i = 0; i < n; ++i) {
    double xi[4];
    for (int k = 0; k < 4; ++k) xi[k] = std::sqrt(8.0) / (k + 1) * normal(rng);
    for (int c = 0; c < j; ++c) {
      const double t = d.t[c];
      d.x(i, c) = xi[0] * std::sin(pi * t) + xi[1] * std::cos(pi * t) + xi[2] * std::sin(2 * pi * t) +
                  xi[3] * std::cos(2 * pi * t);
    }
  }
  return d;
}

double surface_f1(double x, double t) { return 2.0 * x * std::sin(std::numbers::pi * t); }
double surface_f2(double x, double t) { return 10.0 * std::cos(-x / 8.0 + t / 4.0 - 5.0); }

Eigen::VectorXd convex_signal(const Eigen::MatrixXd& x, const Eigen::VectorXd& t, double phi) {
  if (!(phi >= 0.0 && phi <= 1.0)) throw ParameterError("phi must lie in [0, 1]");
  if (x.cols() != t.size()) throw ShapeError("grid length does not match predictor columns");
  const QuadratureOperator quad(1, t, QuadratureRule::Trapezoid);
  const Eigen::VectorXd& w = quad.weights();
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      s += w[c] * (phi * surface_f1(x(i, c), t[c]) + (1.0 - phi) * surface_f2(x(i, c), t[c]));
    out[i] = s;
  }
  return out;
}

Eigen::VectorXd gen_response_convex(const Eigen::MatrixXd& x, const Eigen::VectorXd& t, double phi,
                                    std::uint64_t seed) {
  Eigen::VectorXd y = convex_signal(x, t, phi);
  Rng rng = make_rng(seed);
  std::normal_distribution<double> normal;
  for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += normal(rng);
  return y;
}

MixedResponse gen_response_mixed(const Eigen::MatrixXd& x, const Eigen::VectorXd& t, double sigma2_2,
                                 double sigma2_3, int kx, int kt, std::uint64_t seed, QuadratureRule rule) {
  if (!(sigma2_2 >= 0.0) || !(sigma2_3 >= 0.0)) throw ParameterError("variances must be non-negative");
  const FunctionalDataset data{Eigen::VectorXd(), x, t};
  const PsAnovaDesign d = build_psanova_design(data, kx, kt, rule);
  Rng rng = make_rng(seed);
  std::normal_distribution<double> normal;
  auto draw = [&](Eigen::Index n, double var) {
    Eigen::VectorXd v(n);
    const double sd = std::sqrt(var);
    for (Eigen::Index k = 0; k < n; ++k) v[k] = sd * normal(rng);
    return v;
  };
  MixedResponse r;
  r.b1 = draw(d.q1(), 4.0);
  r.b2 = draw(d.q2(), sigma2_2);
  r.b3 = draw(d.q3(), sigma2_3);
  const Eigen::Vector3d beta(1.0, 0.01, 0.01);
  r.y = d.X * beta + d.Z1 * r.b1 + d.Z2 * r.b2 + d.Z3 * r.b3 + draw(d.n(), 1.0);
  return r;
}

const char* to_string(Scenario s) { return s == Scenario::Convex ? "convex" : "mixed"; }

std::string StudyPoint::label(Scenario s) const {
  if (s == Scenario::Convex) return "phi=" + fmt(phi);
  return "s2=" + fmt(sigma2_2) + " s3=" + fmt(sigma2_3);
}

std::uint64_t StudyPoint::stream(Scenario s) const {
  auto mix = [](std::uint64_t h, double v) { return splitmix64(h ^ std::bit_cast<std::uint64_t>(v + 0.0)); };
  const std::uint64_t h = splitmix64(static_cast<std::uint64_t>(s) + 1);
  return s == Scenario::Convex ? mix(h, phi) : mix(mix(h, sigma2_2), sigma2_3);
}

void StudyConfig::validate() const {
  std::vector<std::string> v;
  if (n <= 10) v.push_back("n must exceed 10 (got " + std::to_string(n) + ")");
  if (j < 4) v.push_back("j must be at least 4 (got " + std::to_string(j) + ")");
  if (reps < 1) v.push_back("reps must be at least 1 (got " + std::to_string(reps) + ")");
  if (points.empty()) v.push_back("at least one scenario point is required");
  for (const auto& p : points) {
    if (scenario == Scenario::Convex && !(p.phi >= 0.0 && p.phi <= 1.0))
      v.push_back("phi must lie in [0, 1] (got " + fmt(p.phi) + ")");
    if (scenario == Scenario::Mixed && !(p.sigma2_2 >= 0.0 && p.sigma2_3 >= 0.0))
      v.push_back("variances must be non-negative (got " + p.label(scenario) + ")");
  }
  if (kx < 4) v.push_back("kx must be at least 4");
  if (kt < 4) v.push_back("kt must be at least 4");
  if (alphas.empty()) v.push_back("at least one alpha level is required");
  for (double a : alphas)
    if (!(a > 0.0 && a < 1.0)) v.push_back("alpha must lie strictly between 0 and 1 (got " + fmt(a) + ")");
  if (nsim < 1) v.push_back("nsim must be positive");
  if (nboot < 0) v.push_back("nboot must be non-negative (0 selects the method default)");
  if (methods.empty()) v.push_back("at least one method is required");
  if (threads < 0) v.push_back("threads must be non-negative");
  if (!v.empty()) throw ConfigError(std::move(v));
}

const RejectionRow& RejectionTable::row(const std::string& point, TestMethod method, double alpha) const {
  for (const auto& r : rows)
    if (r.point == point && r.method == to_string(method) && r.alpha == alpha) return r;
  throw ParameterError("no table row for point '" + point + "' and method " + to_string(method));
}

std::string RejectionTable::to_csv() const {
  std::ostringstream os;
  os << "scenario,point,method,alpha,reject_rate,mcse,reps,failures\n";
  for (const auto& r : rows)
    os << r.scenario << ',' << r.point << ',' << r.method << ',' << fmt(r.alpha) << ',' << fmt(r.reject_rate) << ','
       << fmt(r.mcse) << ',' << r.reps << ',' << r.failures << '\n';
  return os.str();
}

std::string RejectionTable::to_json() const {
  nlohmann::json j;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows)
    j["rows"].push_back({{"scenario", r.scenario},
                         {"point", r.point},
                         {"method", r.method},
                         {"alpha", r.alpha},
                         {"reject_rate", r.reject_rate},
                         {"mcse", r.mcse},
                         {"reps", r.reps},
                         {"failures", r.failures}});
  j["total_failures"] = total_failures;
  j["flagged"] = flagged;
  j["warnings"] = warnings;
  return j.dump(2);
}

RejectionTable run_rejection_study(const StudyConfig& cfg, const ProgressCallback& progress) {
  cfg.validate();
  const std::size_t P = cfg.points.size(), R = static_cast<std::size_t>(cfg.reps), M = cfg.methods.size();
  std::vector<RepRecord> records(P * R * M);
  std::mutex mu;
  int done = 0;
  const int total = static_cast<int>(P * R);

  parallel_for(P * R, cfg.threads, [&](std::size_t task) {
    const std::size_t pi = task / R, rep = task % R;
    const StudyPoint& pt = cfg.points[pi];
    const std::uint64_t rep_seed = derive_seed(cfg.seed, pt.stream(cfg.scenario), rep);
    FunctionalDataset data = gen_predictors(cfg.n, cfg.j, derive_seed(rep_seed, 1));
    Eigen::VectorXd b1;
    std::string gen_error;
    try {
      if (cfg.scenario == Scenario::Convex) {
        data.y = gen_response_convex(data.x, data.t, pt.phi, derive_seed(rep_seed, 2));
      } else {
        MixedResponse mr = gen_response_mixed(data.x, data.t, pt.sigma2_2, pt.sigma2_3, cfg.kx, cfg.kt,
                                              derive_seed(rep_seed, 2), cfg.rule);
        data.y = std::move(mr.y);
        b1 = std::move(mr.b1);
      }
    } catch (const Error& e) {
      gen_error = e.what();
    }
    TestOptions opt;
    opt.kx = cfg.kx;
    opt.kt = cfg.kt;
    opt.rule = cfg.rule;
    opt.seed = derive_seed(rep_seed, 3);
    opt.threads = 1;
    opt.bonferroni_separate_fits = cfg.bonferroni_separate_fits;
    for (std::size_t m = 0; m < M; ++m) {
      RepRecord& rec = records[(pi * R + rep) * M + m];
      rec.point = static_cast<int>(pi);
      rec.rep = static_cast<int>(rep);
      rec.method = cfg.methods[m];
      if (!gen_error.empty()) {
        rec.failed = true;
        rec.error = gen_error;
        continue;
      }
      opt.nsim = rec.method == TestMethod::Bootstrap || rec.method == TestMethod::NoEffect ? cfg.nboot : cfg.nsim;
      try {
        if (rec.method == TestMethod::KnownSig1 && b1.size() == 0)
          throw ParameterError("knownsig1 needs the mixed scenario (true b1 unknown)");
        const TestResult res = run_test(rec.method, data, opt, b1.size() ? &b1 : nullptr);
        rec.p_value = res.p_value;
        if (res.unreliable) {
          rec.failed = true;
          rec.error = "unreliable bootstrap";
        }
      } catch (const Error& e) {
        rec.failed = true;
        rec.error = e.what();
      }
    }
    if (progress) {
      std::lock_guard lock(mu);
      progress(++done, total);
    }
  });

  RejectionTable table;
  table.records = std::move(records);
  for (std::size_t pi = 0; pi < P; ++pi) {
    for (std::size_t m = 0; m < M; ++m) {
      for (double alpha : cfg.alphas) {
        RejectionRow row;
        row.scenario = to_string(cfg.scenario);
        row.point = cfg.points[pi].label(cfg.scenario);
        row.method = to_string(cfg.methods[m]);
        row.alpha = alpha;
        int rejects = 0;
        for (std::size_t rep = 0; rep < R; ++rep) {
          const RepRecord& rec = table.records[(pi * R + rep) * M + m];
          if (rec.failed) {
            ++row.failures;
            continue;
          }
          ++row.reps;
          if (rec.p_value <= alpha) ++rejects;
        }
        row.reject_rate = row.reps > 0 ? static_cast<double>(rejects) / row.reps : 0.0;
        row.mcse = row.reps > 0 ? std::sqrt(row.reject_rate * (1.0 - row.reject_rate) / row.reps) : 0.0;
        table.rows.push_back(row);
      }
    }
  }
  for (const auto& rec : table.records)
    if (rec.failed) ++table.total_failures;
  table.flagged = static_cast<double>(table.total_failures) >
                  kFlagFailureRate * static_cast<double>(table.records.size());
  if (table.flagged) table.warnings.push_back("more than 2% of replicate runs failed");
  return table;
}

}  // namespace fgam
