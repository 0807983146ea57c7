#pragma once

#include "fgam/design.hpp"
#include "fgam/lmm.hpp"
#include "fgam/rlrt.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace fgam {

enum class TestMethod { EqualVC, Bonferroni, Bootstrap, NoEffect, LinearInT, KnownSig1 };

const char* to_string(TestMethod m);
TestMethod test_method_from_string(const std::string& name);
/// "equalvc, bonferroni, bootstrap, no-effect, linear-in-t, knownsig1"
std::string allowed_test_methods();

struct TestOptions {
  int kx = 10;
  int kt = 10;
  QuadratureRule rule = QuadratureRule::Trapezoid;
  /// Monte Carlo size; 0 picks the method default (10000 spectral draws,
  /// 500 bootstrap refits for the linearity bootstrap, 2000 for no-effect).
  int nsim = 0;
  std::uint64_t seed = 1;
  double alpha = 0.05;
  int threads = 1;
  /// Bonferroni: fit (Z1, Z2) and (Z1, Z3) separately for the two nuisance
  /// BLUPs instead of sharing one three-block fit.
  bool bonferroni_separate_fits = false;

  void validate() const;
};

int default_nsim(TestMethod m);

struct NullSummary {
  int size = 0;
  double zero_fraction = 0.0;
  double q50 = 0.0, q90 = 0.0, q95 = 0.0, q99 = 0.0;
};

NullSummary summarize_null(const std::vector<double>& sorted);

/// One likelihood-ratio comparison inside a test procedure.
struct SubTest {
  std::string component;  // e.g. "sigma2", "sigma3", "sigma23"
  double statistic = 0.0;
  double p_value = 1.0;
  NullSummary null;
};

struct TestResult {
  TestMethod method = TestMethod::EqualVC;
  double statistic = 0.0;  // largest sub-test statistic for Bonferroni
  double p_value = 1.0;    // Bonferroni: min(1, 2 min(p2, p3))
  double alpha = 0.05;
  bool reject = false;
  int nsim = 0;
  std::uint64_t seed = 0;
  std::vector<SubTest> subtests;
  /// Variance estimates of the fit under the alternative (residual first).
  std::vector<std::string> variance_names;
  std::vector<double> variances;
  int failures = 0;          // failed bootstrap refits
  bool unreliable = false;   // more than 5% of refits failed
  std::vector<std::string> warnings;
};

TestResult test_linearity_equalvc(const FunctionalDataset& data, const TestOptions& opt = {});
TestResult test_linearity_bonferroni(const FunctionalDataset& data, const TestOptions& opt = {});
TestResult test_linearity_bootstrap(const FunctionalDataset& data, const TestOptions& opt = {});
TestResult test_no_effect(const FunctionalDataset& data, const TestOptions& opt = {});
TestResult test_linear_in_t(const FunctionalDataset& data, const TestOptions& opt = {});
TestResult test_knownsig1(const FunctionalDataset& data, const Eigen::VectorXd& true_b1, const TestOptions& opt = {});

/// Same procedures on a prebuilt design (kx, kt and rule in `opt` are ignored).
TestResult test_linearity_equalvc(const PsAnovaDesign& d, const Eigen::VectorXd& y, const TestOptions& opt);
TestResult test_linearity_bonferroni(const PsAnovaDesign& d, const Eigen::VectorXd& y, const TestOptions& opt);
TestResult test_linearity_bootstrap(const PsAnovaDesign& d, const Eigen::VectorXd& y, const TestOptions& opt);
TestResult test_no_effect(const PsAnovaDesign& d, const Eigen::VectorXd& y, const TestOptions& opt);
TestResult test_linear_in_t(const PsAnovaDesign& d, const Eigen::VectorXd& y, const TestOptions& opt);
TestResult test_knownsig1(const PsAnovaDesign& d, const Eigen::VectorXd& y, const Eigen::VectorXd& true_b1,
                          const TestOptions& opt);

/// Dispatch by method; `true_b1` is required for KnownSig1 only.
TestResult run_test(TestMethod method, const FunctionalDataset& data, const TestOptions& opt,
                    const Eigen::VectorXd* true_b1 = nullptr);

}  // namespace fgam
