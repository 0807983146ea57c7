#pragma once

#include "fgam/errors.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace fgam {

enum class Criterion { REML, ML };

const char* to_string(Criterion c);

/// y = X beta + sum_j Z_j b_j + e, b_j ~ N(0, s_j^2 I), e ~ N(0, s_e^2 I).
struct MixedModelSpec {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  std::vector<Eigen::MatrixXd> Z;

  /// Throws ShapeError on row mismatches and NumericalError when X is rank deficient.
  void validate() const;
  Eigen::Index total_random() const;
};

struct FitOptions {
  Criterion criterion = Criterion::REML;
  /// Common variance ratio used for every block at each start.
  std::vector<double> start_ratios{1e-3, 1.0, 1e3};
  /// Additional starting ratio vectors (one entry per block), tried after the defaults.
  std::vector<Eigen::VectorXd> extra_starts;
  int max_iterations = 500;
  double tolerance = 1e-9;
  /// Ratios s_j^2 / s_e^2 below this are reported as exactly zero.
  double zero_threshold = 1e-8;
};

struct VarianceComponentFit {
  Criterion criterion = Criterion::REML;
  Eigen::VectorXd beta;
  std::vector<Eigen::VectorXd> blups;
  double sigma2_e = 0.0;
  Eigen::VectorXd sigma2;   // per block
  Eigen::VectorXd ratios;   // sigma2 / sigma2_e
  double log_likelihood = 0.0;
  Eigen::VectorXd fitted;   // X beta + sum Z_j b_j
  int iterations = 0;
  int evaluations = 0;
  std::vector<bool> at_boundary;
  double gradient_norm = 0.0;  // over interior components, log-ratio scale
  bool converged = false;
  bool degenerate_residual = false;
};

/// Raised when Nelder-Mead exhausts its iterations; carries the best fit found.
class MixedModelConvergenceError : public ConvergenceError {
 public:
  MixedModelConvergenceError(const std::string& what, VarianceComponentFit best)
      : ConvergenceError(what), best_(std::move(best)) {}
  const VarianceComponentFit& best_fit() const noexcept { return best_; }

 private:
  VarianceComponentFit best_;
};

/// Gram quantities of a fixed (X, Z) pair. The response can be swapped
/// cheaply, which is what parametric-bootstrap refits need. All work happens
/// in the q-dimensional random-effect space (Henderson form).
class MixedModelProblem {
 public:
  MixedModelProblem(Eigen::MatrixXd X, std::vector<Eigen::MatrixXd> Z);

  void set_response(const Eigen::VectorXd& y);

  Eigen::Index n() const noexcept { return X_.rows(); }
  Eigen::Index p() const noexcept { return X_.cols(); }
  Eigen::Index q() const noexcept { return G_.rows(); }
  int blocks() const noexcept { return static_cast<int>(offsets_.size()) - 1; }
  const Eigen::MatrixXd& X() const noexcept { return X_; }
  const Eigen::MatrixXd& Z() const noexcept { return Z_; }
  Eigen::Index block_offset(int j) const { return offsets_[j]; }
  Eigen::Index block_size(int j) const { return offsets_[j + 1] - offsets_[j]; }

  /// Log-likelihood with beta and s_e^2 profiled out, at variance ratios.
  double profiled_criterion(const Eigen::VectorXd& ratios, Criterion c) const;

  /// Gradient of profiled_criterion with respect to log(ratios).
  Eigen::VectorXd profiled_gradient(const Eigen::VectorXd& ratios, Criterion c) const;

  /// Log-likelihood at explicit variances (beta at its GLS value).
  double log_likelihood(double sigma2_e, const Eigen::VectorXd& sigma2, Criterion c) const;

  /// Estimates, BLUPs and fitted values at the given ratios.
  VarianceComponentFit evaluate(const Eigen::VectorXd& ratios, Criterion c) const;

  VarianceComponentFit fit(const FitOptions& options = {}) const;

 private:
  struct State;
  State solve(const Eigen::VectorXd& ratios) const;
  double criterion_from_state(const State& s, Criterion c) const;

  Eigen::MatrixXd X_;
  Eigen::MatrixXd Z_;  // all blocks side by side
  std::vector<Eigen::Index> offsets_;
  Eigen::MatrixXd G_;    // Z'Z
  Eigen::MatrixXd ZX_;   // Z'X
  Eigen::MatrixXd XX_;   // X'X
  double logdet_XX_ = 0.0;
  Eigen::VectorXd Zy_, Xy_;
  double yy_ = 0.0;
  double var_floor_ = 0.0;
  bool has_response_ = false;
};

/// Restricted log-likelihood at explicit variances. Includes the
/// -1/2 log det(X' S^-1 X) term and the +1/2 log det(X'X) normalisation that
/// makes the value invariant to the fixed-effect basis.
double restricted_log_likelihood(const MixedModelSpec& spec, double sigma2_e,
                                 const Eigen::VectorXd& sigma2);

double ml_log_likelihood(const MixedModelSpec& spec, double sigma2_e, const Eigen::VectorXd& sigma2);

VarianceComponentFit fit_mixed_model(const MixedModelSpec& spec, const FitOptions& options = {});

/// b_j = s_j^2 Z_j' S^-1 (y - X beta) at the fitted variances.
std::vector<Eigen::VectorXd> predict_random_effects(const VarianceComponentFit& fit,
                                                    const MixedModelSpec& spec);

}  // namespace fgam
