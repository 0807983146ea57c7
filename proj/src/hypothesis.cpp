#include "fgam/hypothesis.hpp"

#include "fgam/parallel.hpp"
#include "fgam/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace fgam {

namespace {

constexpr std::uint64_t kStreamSigma2 = 2;
constexpr std::uint64_t kStreamSigma3 = 3;
constexpr double kMaxFailureRate = 0.05;

Eigen::MatrixXd hcat(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

int resolved_nsim(TestMethod m, const TestOptions& opt) { return opt.nsim > 0 ? opt.nsim : default_nsim(m); }

TestResult start_result(TestMethod m, const TestOptions& opt) {
  opt.validate();
  TestResult r;
  r.method = m;
  r.alpha = opt.alpha;
  r.nsim = resolved_nsim(m, opt);
  r.seed = opt.seed;
  return r;
}

void finish(TestResult& r) {
  r.p_value = std::clamp(r.p_value, 0.0, 1.0);
  r.reject = r.p_value <= r.alpha;
}

void record_variances(TestResult& r, const VarianceComponentFit& fit, const std::vector<std::string>& names,
                      const std::string& prefix = "") {
  r.variance_names.push_back(prefix + "sigma2_e");
  r.variances.push_back(fit.sigma2_e);
  for (Eigen::Index j = 0; j < fit.sigma2.size(); ++j) {
    r.variance_names.push_back(prefix + names[static_cast<std::size_t>(j)]);
    r.variances.push_back(fit.sigma2[j]);
  }
}

// Exact one-component RLRT of the block Z on the (pseudo-)response y.
SubTest one_component_rlrt(const std::string& name, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z,
                           const Eigen::VectorXd& y, int nsim, std::uint64_t seed, int threads) {
  const OneComponentModel model(X, Z);
  SubTest s;
  s.component = name;
  s.statistic = model.rlrt(y);
  const RlrtNullSample null = model.simulate_null(nsim, seed, threads);
  s.p_value = pvalue_from_null(s.statistic, null);
  s.null = summarize_null(null.values);
  return s;
}

void bonferroni_core(TestResult& r, const PsAnovaDesign& d, const Eigen::VectorXd& y2, const Eigen::VectorXd& y3,
                     const TestOptions& opt) {
  r.subtests.push_back(
      one_component_rlrt("sigma2", d.X, d.Z2, y2, r.nsim, derive_seed(opt.seed, kStreamSigma2), opt.threads));
  r.subtests.push_back(
      one_component_rlrt("sigma3", d.X, d.Z3, y3, r.nsim, derive_seed(opt.seed, kStreamSigma3), opt.threads));
  const SubTest& a = r.subtests[0];
  const SubTest& b = r.subtests[1];
  r.p_value = std::min(1.0, 2.0 * std::min(a.p_value, b.p_value));
  r.statistic = a.p_value <= b.p_value ? a.statistic : b.statistic;
  finish(r);
}

double intercept_only_ml(const Eigen::VectorXd& y) {
  const double N = static_cast<double>(y.size());
  const double rss = std::max((y.array() - y.mean()).square().sum(), 1e-300);
  return -0.5 * N * (std::log(2.0 * std::numbers::pi * rss / N) + 1.0);
}

}  // namespace

const char* to_string(TestMethod m) {
  switch (m) {
    case TestMethod::EqualVC: return "equalvc";
    case TestMethod::Bonferroni: return "bonferroni";
    case TestMethod::Bootstrap: return "bootstrap";
    case TestMethod::NoEffect: return "no-effect";
    case TestMethod::LinearInT: return "linear-in-t";
    case TestMethod::KnownSig1: return "knownsig1";
  }
  return "?";
}

std::string allowed_test_methods() { return "equalvc, bonferroni, bootstrap, no-effect, linear-in-t, knownsig1"; }

TestMethod test_method_from_string(const std::string& name) {
  for (TestMethod m : {TestMethod::EqualVC, TestMethod::Bonferroni, TestMethod::Bootstrap, TestMethod::NoEffect,
                       TestMethod::LinearInT, TestMethod::KnownSig1})
    if (name == to_string(m)) return m;
  throw ParameterError("unknown test method '" + name + "' (allowed: " + allowed_test_methods() + ")");
}

int default_nsim(TestMethod m) {
  switch (m) {
    case TestMethod::Bootstrap: return 500;
    case TestMethod::NoEffect: return 2000;
    default: return 10000;
  }
}

void TestOptions::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("alpha must lie strictly between 0 and 1");
  if (nsim < 0) throw ParameterError("nsim must be non-negative (0 selects the default)");
  if (threads < 0) throw ParameterError("threads must be non-negative (0 uses all cores)");
  if (kx < 4 || kt < 4) throw ParameterError("cubic marginal bases need at least 4 basis functions");
}

NullSummary summarize_null(const std::vector<double>& sorted) {
  RlrtNullSample s;
  s.values = sorted;
  NullSummary out;
  out.size = static_cast<int>(sorted.size());
  if (sorted.empty()) return out;
  out.zero_fraction = s.zero_fraction();
  out.q50 = s.quantile(0.5);
  out.q90 = s.quantile(0.9);
  out.q95 = s.quantile(0.95);
  out.q99 = s.quantile(0.99);
  return out;
}

TestResult test_linearity_equalvc(const PsAnovaDesign& d, const Eigen::VectorXd& y, const TestOptions& opt) {
  TestResult r = start_result(TestMethod::EqualVC, opt);
  const Eigen::MatrixXd Z23 = hcat(d.Z2, d.Z3);
  const MixedModelSpec spec{y, d.X, {d.Z1, Z23}};
  const VarianceComponentFit fit = fit_mixed_model(spec);
  record_variances(r, fit, {"sigma2_1", "sigma2_23"});
  if (fit.ratios.isZero(0.0)) r.warnings.push_back("all variance components estimated as zero under the alternative");
  const Eigen::VectorXd y1 = pseudo_response(fit, spec, 0);
  r.subtests.push_back(one_component_rlrt("sigma23", d.X, Z23, y1, r.nsim, opt.seed, opt.threads));
  r.statistic = r.subtests[0].statistic;
  r.p_value = r.subtests[0].p_value;
  finish(r);
  return r;
}

TestResult test_linearity_bonferroni(const PsAnovaDesign& d, const Eigen::VectorXd& y, const TestOptions& opt) {
  TestResult r = start_result(TestMethod::Bonferroni, opt);
  if (opt.bonferroni_separate_fits) {
    const MixedModelSpec s2{y, d.X, {d.Z1, d.Z2}};
    const MixedModelSpec s3{y, d.X, {d.Z1, d.Z3}};
    const VarianceComponentFit f2 = fit_mixed_model(s2);
    const VarianceComponentFit f3 = fit_mixed_model(s3);
    record_variances(r, f2, {"sigma2_1", "sigma2_2"}, "fit2.");
    record_variances(r, f3, {"sigma2_1", "sigma2_3"}, "fit3.");
    bonferroni_core(r, d, pseudo_response(f2, s2, 0), pseudo_response(f3, s3, 0), opt);
  } else {
    const MixedModelSpec spec{y, d.X, {d.Z1, d.Z2, d.Z3}};
    const VarianceComponentFit fit = fit_mixed_model(spec);
    record_variances(r, fit, {"sigma2_1", "sigma2_2", "sigma2_3"});
    if (fit.ratios.isZero(0.0))
      r.warnings.push_back("all variance components estimated as zero under the alternative");
    const Eigen::VectorXd y1 = pseudo_response(fit, spec, 0);
    bonferroni_core(r, d, y1, y1, opt);
  }
  return r;
}

TestResult test_knownsig1(const PsAnovaDesign& d, const Eigen::VectorXd& y, const Eigen::VectorXd& true_b1,
                          const TestOptions& opt) {
  TestResult r = start_result(TestMethod::KnownSig1, opt);
  if (true_b1.size() != d.q1()) {
    std::ostringstream os;
    os << "true b1 has length " << true_b1.size() << ", expected q1 = " << d.q1();
    throw ShapeError(os.str());
  }
  const Eigen::VectorXd y1 = y - d.Z1 * true_b1;
  bonferroni_core(r, d, y1, y1, opt);
  return r;
}

TestResult test_linearity_bootstrap(const PsAnovaDesign& d, const Eigen::VectorXd& y, const TestOptions& opt) {
  TestResult r = start_result(TestMethod::Bootstrap, opt);
  if (r.nsim < 500) r.warnings.push_back("fewer than 500 bootstrap refits; p-value resolution is coarse");
  const Eigen::MatrixXd Z23 = hcat(d.Z2, d.Z3);
  const OneComponentModel null_model(d.X, d.Z1);
  MixedModelProblem alt_base(d.X, {d.Z1, Z23});

  auto statistic = [&](const Eigen::VectorXd& yy, MixedModelProblem& alt, VarianceComponentFit* alt_fit,
                       OneComponentModel::ProfileFit* null_fit) {
    const OneComponentModel::ProfileFit f0 = null_model.maximize(null_model.project(yy), Criterion::REML);
    FitOptions fo;
    fo.extra_starts.push_back((Eigen::VectorXd(2) << f0.lambda, 0.0).finished());
    alt.set_response(yy);
    const VarianceComponentFit f1 = alt.fit(fo);
    if (alt_fit) *alt_fit = f1;
    if (null_fit) *null_fit = f0;
    const double s = 2.0 * (f1.log_likelihood - f0.value);
    return s < kStatisticZero ? 0.0 : s;
  };

  VarianceComponentFit h1;
  OneComponentModel::ProfileFit h0;
  r.statistic = statistic(y, alt_base, &h1, &h0);
  record_variances(r, h1, {"sigma2_1", "sigma2_23"});

  // Fitted null: y* = X beta + Z1 b* + e, b* ~ N(0, s1^2 I), e ~ N(0, se^2 I).
  MixedModelProblem null_problem(d.X, {d.Z1});
  null_problem.set_response(y);
  const Eigen::VectorXd beta0 = null_problem.evaluate((Eigen::VectorXd(1) << h0.lambda).finished(), Criterion::REML).beta;
  const double se = std::sqrt(h0.sigma2_e);
  const double s1 = std::sqrt(h0.lambda * h0.sigma2_e);
  const Eigen::VectorXd mean0 = d.X * beta0;

  std::vector<double> boot(static_cast<std::size_t>(r.nsim), -1.0);
  parallel_for(boot.size(), opt.threads, [&](std::size_t i) {
    Rng rng = make_rng(derive_seed(opt.seed, i));
    std::normal_distribution<double> normal;
    Eigen::VectorXd b(d.q1());
    for (Eigen::Index k = 0; k < b.size(); ++k) b[k] = s1 * normal(rng);
    Eigen::VectorXd ys = mean0 + d.Z1 * b;
    for (Eigen::Index k = 0; k < ys.size(); ++k) ys[k] += se * normal(rng);
    MixedModelProblem alt = alt_base;
    try {
      boot[i] = statistic(ys, alt, nullptr, nullptr);
    } catch (const NumericalError&) {
      boot[i] = -1.0;  // failed refit
    }
  });
  std::vector<double> ok;
  ok.reserve(boot.size());
  for (double v : boot)
    if (v >= 0.0) ok.push_back(v);
  r.failures = static_cast<int>(boot.size() - ok.size());
  r.unreliable = static_cast<double>(r.failures) > kMaxFailureRate * static_cast<double>(boot.size());
  if (r.unreliable) r.warnings.push_back("more than 5% of bootstrap refits failed");
  if (ok.empty()) throw ConvergenceError("every bootstrap refit failed");
  std::sort(ok.begin(), ok.end());
  SubTest s;
  s.component = "sigma23";
  s.statistic = r.statistic;
  s.p_value = pvalue_from_sorted(r.statistic, ok);
  s.null = summarize_null(ok);
  r.subtests.push_back(s);
  r.p_value = s.p_value;
  finish(r);
  return r;
}

TestResult test_no_effect(const PsAnovaDesign& d, const Eigen::VectorXd& y, const TestOptions& opt) {
  TestResult r = start_result(TestMethod::NoEffect, opt);
  const OneComponentModel model(d.X, d.Z1);
  auto statistic = [&](const Eigen::VectorXd& yy, OneComponentModel::ProfileFit* fit) {
    const OneComponentModel::ProfileFit f = model.maximize(model.project(yy), Criterion::ML);
    if (fit) *fit = f;
    const double s = 2.0 * (f.value - intercept_only_ml(yy));
    return s < kStatisticZero ? 0.0 : s;
  };
  OneComponentModel::ProfileFit h1;
  r.statistic = statistic(y, &h1);
  r.variance_names = {"sigma2_e", "sigma2_1"};
  r.variances = {h1.sigma2_e, h1.lambda * h1.sigma2_e};

  // Gaussian null fitted by ML: y* = mean + sd * e.
  const double mean = y.mean();
  const double sd = std::sqrt((y.array() - mean).square().sum() / static_cast<double>(y.size()));
  std::vector<double> boot(static_cast<std::size_t>(r.nsim));
  parallel_for(boot.size(), opt.threads, [&](std::size_t i) {
    Rng rng = make_rng(derive_seed(opt.seed, i));
    std::normal_distribution<double> normal;
    Eigen::VectorXd ys(y.size());
    for (Eigen::Index k = 0; k < ys.size(); ++k) ys[k] = mean + sd * normal(rng);
    boot[i] = statistic(ys, nullptr);
  });
  std::sort(boot.begin(), boot.end());
  SubTest s;
  s.component = "beta_x,sigma1";
  s.statistic = r.statistic;
  s.p_value = pvalue_from_sorted(r.statistic, boot);
  s.null = summarize_null(boot);
  r.subtests.push_back(s);
  r.p_value = s.p_value;
  finish(r);
  return r;
}

TestResult test_linear_in_t(const PsAnovaDesign& d, const Eigen::VectorXd& y, const TestOptions& opt) {
  TestResult r = start_result(TestMethod::LinearInT, opt);
  r.subtests.push_back(one_component_rlrt("sigma1", d.X, d.Z1, y, r.nsim, opt.seed, opt.threads));
  r.statistic = r.subtests[0].statistic;
  r.p_value = r.subtests[0].p_value;
  const OneComponentModel model(d.X, d.Z1);
  const auto f = model.maximize(model.project(y), Criterion::REML);
  r.variance_names = {"sigma2_e", "sigma2_1"};
  r.variances = {f.sigma2_e, f.lambda * f.sigma2_e};
  finish(r);
  return r;
}

namespace {

PsAnovaDesign design_for(TestMethod m, const FunctionalDataset& data, const TestOptions& opt) {
  opt.validate();
  data.validate(true);
  if (m == TestMethod::NoEffect || m == TestMethod::LinearInT)
    return PsAnovaBasis::flm_from_data(data, opt.kt, opt.rule).design(data.x, data.t);
  return PsAnovaBasis::from_data(data, opt.kx, opt.kt, opt.rule).design(data.x, data.t);
}

}  // namespace

TestResult test_linearity_equalvc(const FunctionalDataset& data, const TestOptions& opt) {
  return test_linearity_equalvc(design_for(TestMethod::EqualVC, data, opt), data.y, opt);
}
TestResult test_linearity_bonferroni(const FunctionalDataset& data, const TestOptions& opt) {
  return test_linearity_bonferroni(design_for(TestMethod::Bonferroni, data, opt), data.y, opt);
}
TestResult test_linearity_bootstrap(const FunctionalDataset& data, const TestOptions& opt) {
  return test_linearity_bootstrap(design_for(TestMethod::Bootstrap, data, opt), data.y, opt);
}
TestResult test_no_effect(const FunctionalDataset& data, const TestOptions& opt) {
  return test_no_effect(design_for(TestMethod::NoEffect, data, opt), data.y, opt);
}
TestResult test_linear_in_t(const FunctionalDataset& data, const TestOptions& opt) {
  return test_linear_in_t(design_for(TestMethod::LinearInT, data, opt), data.y, opt);
}
TestResult test_knownsig1(const FunctionalDataset& data, const Eigen::VectorXd& true_b1, const TestOptions& opt) {
  return test_knownsig1(design_for(TestMethod::KnownSig1, data, opt), data.y, true_b1, opt);
}

TestResult run_test(TestMethod method, const FunctionalDataset& data, const TestOptions& opt,
                    const Eigen::VectorXd* true_b1) {
  switch (method) {
    case TestMethod::EqualVC: return test_linearity_equalvc(data, opt);
    case TestMethod::Bonferroni: return test_linearity_bonferroni(data, opt);
    case TestMethod::Bootstrap: return test_linearity_bootstrap(data, opt);
    case TestMethod::NoEffect: return test_no_effect(data, opt);
    case TestMethod::LinearInT: return test_linear_in_t(data, opt);
    case TestMethod::KnownSig1:
      if (!true_b1) throw ParameterError("knownsig1 needs the true nuisance random effect b1");
      return test_knownsig1(data, *true_b1, opt);
  }
  throw ParameterError("unknown test method");
}

}  // namespace fgam
