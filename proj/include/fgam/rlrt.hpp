#pragma once

#include "fgam/lmm.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace fgam {

/// Simulated null distribution of a one-component (R)LRT statistic.
struct RlrtNullSample {
  std::vector<double> values;        // ascending, all >= 0
  int nsim = 0;
  std::vector<double> lambda_grid;   // first entry is 0
  Eigen::VectorXd mu;                // eigenvalues driving the simulation
  std::uint64_t seed = 0;

  double zero_fraction() const;
  /// Type-7 empirical quantile.
  double quantile(double p) const;
};

/// Statistics below this are reported as exactly zero, so ties with the
/// point mass of the null distribution are counted consistently.
inline constexpr double kStatisticZero = 1e-10;

/// One variance component, y = X beta + Z b + e, in spectral form. The
/// response enters only through its projections onto the left singular
/// vectors of (I - P_X) Z and the remaining residual sum of squares.
class OneComponentModel {
 public:
  /// Throws DegenerateDesignError when Z lies (numerically) in span(X).
  OneComponentModel(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z);

  Eigen::Index n() const noexcept { return n_; }
  Eigen::Index q0() const noexcept { return q0_; }
  Eigen::Index rank() const noexcept { return mu_.size(); }
  /// Nonzero eigenvalues of Z'(I - P_X)Z, descending.
  const Eigen::VectorXd& mu() const noexcept { return mu_; }
  /// Nonzero eigenvalues of Z'Z, descending.
  const Eigen::VectorXd& xi() const noexcept { return xi_; }
  const std::vector<double>& lambda_grid() const noexcept { return grid_; }

  struct Projection {
    Eigen::VectorXd w;  // u_k' y
    double rest = 0.0;  // |(I - P_X) y|^2 - |w|^2
  };
  Projection project(const Eigen::VectorXd& y) const;

  /// Profiled (beta, sigma_e^2 removed) log-likelihood at ratio lambda. The
  /// REML value matches MixedModelProblem::profiled_criterion.
  double profile(const Projection& pr, double lambda, Criterion c) const;

  struct ProfileFit {
    double lambda = 0.0;
    double value = 0.0;
    double sigma2_e = 0.0;
  };
  /// Maximises profile() over lambda >= 0 (grid search, then Brent).
  ProfileFit maximize(const Projection& pr, Criterion c) const;

  /// 2 sup l_R - 2 l_R(lambda = 0).
  double rlrt(const Eigen::VectorXd& y) const;

  /// Spectral null of rlrt(): per draw, w_k ~ N(0,1) for each eigenvalue
  /// and a chi-square with N - q0 - rank degrees of freedom for the rest.
  RlrtNullSample simulate_null(int nsim, std::uint64_t seed, int threads = 1) const;

 private:
  Eigen::Index n_ = 0, q0_ = 0;
  Eigen::MatrixXd U_;  // N x rank
  Eigen::MatrixXd Q_;  // orthonormal basis of span(X)
  Eigen::VectorXd mu_, xi_;
  std::vector<double> grid_;
};

double rlrt_statistic(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z);

RlrtNullSample simulate_rlrt_null(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z, int nsim,
                                  std::uint64_t seed, int threads = 1);

/// y - Z_k b_k for the fitted nuisance block k (0-based).
Eigen::VectorXd pseudo_response(const VarianceComponentFit& fit, const MixedModelSpec& spec, int nuisance_block);

/// (1 + #{null >= stat}) / (nsim + 1).
double pvalue_from_null(double stat, const RlrtNullSample& null);
double pvalue_from_sorted(double stat, const std::vector<double>& sorted_null);

/// Two-sample Kolmogorov-Smirnov distance.
double ks_distance(std::vector<double> a, std::vector<double> b);

}  // namespace fgam
