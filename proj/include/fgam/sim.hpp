#pragma once

#include "fgam/design.hpp"
#include "fgam/hypothesis.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace fgam {

/// Curves X(t) = sum_{j<=4} xi_j phi_j(t), xi_j ~ N(0, 8 / j^2), with
/// phi = (sin pi t, cos pi t, sin 2 pi t, cos 2 pi t) on J equally spaced
/// points of [0, 1]. The response is left empty.
FunctionalDataset gen_predictors(int n, int j, std::uint64_t seed);

double surface_f1(double x, double t);  // 2 x sin(pi t)
double surface_f2(double x, double t);  // 10 cos(-x/8 + t/4 - 5)

/// Noise-free integral of phi F1 + (1 - phi) F2 along each curve (trapezoid
/// on the observation grid).
Eigen::VectorXd convex_signal(const Eigen::MatrixXd& x, const Eigen::VectorXd& t, double phi);

/// convex_signal + N(0, 1) noise.
Eigen::VectorXd gen_response_convex(const Eigen::MatrixXd& x, const Eigen::VectorXd& t, double phi,
                                    std::uint64_t seed);

struct MixedResponse {
  Eigen::VectorXd y, b1, b2, b3;
};

/// Y = X beta + Z1 b1 + Z2 b2 + Z3 b3 + e with beta = (1, 0.01, 0.01),
/// b1 ~ N(0, 4 I), b2 ~ N(0, s2 I), b3 ~ N(0, s3 I), e ~ N(0, I), on the
/// PS-ANOVA design built from the curves.
MixedResponse gen_response_mixed(const Eigen::MatrixXd& x, const Eigen::VectorXd& t, double sigma2_2,
                                 double sigma2_3, int kx, int kt, std::uint64_t seed,
                                 QuadratureRule rule = QuadratureRule::Trapezoid);

enum class Scenario { Convex, Mixed };

const char* to_string(Scenario s);

struct StudyPoint {
  double phi = 1.0;      // convex scenario
  double sigma2_2 = 0.0;  // mixed scenario
  double sigma2_3 = 0.0;

  std::string label(Scenario s) const;
  /// Seed stream of this point; depends on its values only.
  std::uint64_t stream(Scenario s) const;
};

struct StudyConfig {
  Scenario scenario = Scenario::Mixed;
  int n = 100;
  int j = 30;
  int reps = 200;
  std::vector<StudyPoint> points;
  int kx = 10;
  int kt = 10;
  std::vector<double> alphas{0.05};
  int nsim = 10000;  // spectral null draws
  int nboot = 0;     // bootstrap refits (bootstrap, no-effect); 0 = method default
  std::uint64_t seed = 1;
  std::vector<TestMethod> methods{TestMethod::EqualVC};
  QuadratureRule rule = QuadratureRule::Trapezoid;
  int threads = 1;
  bool bonferroni_separate_fits = false;

  /// Throws ConfigError listing every violation.
  void validate() const;
};

/// TOML (default) or JSON, chosen by file extension. Unknown method names,
/// missing keys and out-of-range values are all reported together.
StudyConfig load_study_config(const std::string& path);
StudyConfig parse_study_config_toml(const std::string& text);
StudyConfig parse_study_config_json(const std::string& text);

struct RejectionRow {
  std::string scenario;
  std::string point;
  std::string method;
  double alpha = 0.05;
  double reject_rate = 0.0;
  double mcse = 0.0;
  int reps = 0;      // successful replicates
  int failures = 0;
};

/// Per replicate outcome, kept for paired comparisons between methods.
struct RepRecord {
  int point = 0;
  int rep = 0;
  TestMethod method = TestMethod::EqualVC;
  double p_value = 1.0;
  bool failed = false;
  std::string error;
};

struct RejectionTable {
  std::vector<RejectionRow> rows;
  std::vector<RepRecord> records;
  int total_failures = 0;
  bool flagged = false;  // more than 2% of replicate-method runs failed
  std::vector<std::string> warnings;

  const RejectionRow& row(const std::string& point, TestMethod method, double alpha) const;
  std::string to_csv() const;
  std::string to_json() const;
};

using ProgressCallback = std::function<void(int done, int total)>;

RejectionTable run_rejection_study(const StudyConfig& config, const ProgressCallback& progress = {});

}  // namespace fgam
