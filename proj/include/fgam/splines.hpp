#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace fgam {

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  double length() const noexcept { return hi - lo; }
};

/// Open-uniform knot vector: boundary knots repeated degree+1 times and
/// equally spaced interior knots, giving exactly `num_basis` B-splines.
class KnotVector {
 public:
  KnotVector(Interval domain, int num_basis, int degree);

  int degree() const noexcept { return degree_; }
  int num_basis() const noexcept { return num_basis_; }
  Interval domain() const noexcept { return domain_; }
  const std::vector<double>& knots() const noexcept { return knots_; }
  std::vector<double> interior_knots() const;

  /// Index of the knot span [k_i, k_{i+1}) containing x; the right endpoint
  /// belongs to the last non-empty span.
  int find_span(double x) const;

 private:
  Interval domain_;
  int num_basis_;
  int degree_;
  std::vector<double> knots_;
};

KnotVector make_knots(Interval domain, int num_basis, int degree = 3);

enum class OutOfDomain { Error, Clamp };

/// (#points x K) matrix of B-spline values. With OutOfDomain::Clamp the
/// number of clamped points is written to `clamped` when non-null.
Eigen::MatrixXd eval_basis(const KnotVector& knots, std::span<const double> points,
                           OutOfDomain policy = OutOfDomain::Error, int* clamped = nullptr);

/// (#points x K) matrix of d-th derivatives of the B-splines.
Eigen::MatrixXd eval_basis_derivative(const KnotVector& knots, std::span<const double> points,
                                      int derivative);

/// Integrated squared derivative penalty, (P)_{mn} = int B_m^{(r)} B_n^{(r)}.
/// Order 0 gives the Gram matrix. Integrals are exact (Gauss-Legendre per span).
Eigen::MatrixXd derivative_penalty(const KnotVector& knots, int order);

/// Eigen-split of a penalty into its null space and scaled range space.
struct PenaltySplit {
  Eigen::MatrixXd null_vectors;        // K x nullity, orthonormal
  Eigen::MatrixXd range_vectors;       // K x (K - nullity), orthonormal
  Eigen::VectorXd positive_eigenvalues;

  /// U_p D_+^{-1/2}: maps unit-variance random effects to coefficients.
  Eigen::MatrixXd range_scaled() const;
};

/// Eigenvalues below 1e-10 * max are treated as zero. Throws NumericalError
/// when the detected nullity differs from `expected_nullity` (pass -1 to skip).
PenaltySplit split_penalty(const Eigen::MatrixXd& penalty, int expected_nullity = -1);

/// Marginal basis evaluated at a set of points, with its penalty and the
/// fixed/random reparameterization (filled by marginal_mixed_transform).
struct MarginalBasis {
  KnotVector knots;
  int penalty_order = 2;
  Eigen::MatrixXd basis;       // B: #points x K
  Eigen::MatrixXd penalty;     // P: K x K
  Eigen::MatrixXd null_vectors;
  Eigen::MatrixXd range_vectors;
  Eigen::VectorXd positive_eigenvalues;
  Eigen::MatrixXd fixed_part;   // B U_n
  Eigen::MatrixXd random_part;  // B U_p D_+^{-1/2}
};

MarginalBasis make_marginal_basis(const KnotVector& knots, std::span<const double> points,
                                  int penalty_order = 2, OutOfDomain policy = OutOfDomain::Error);

MarginalBasis marginal_mixed_transform(MarginalBasis basis);

/// Knots + penalty + split, reusable for evaluation at new points (prediction).
class MarginalSmooth {
 public:
  MarginalSmooth(KnotVector knots, int penalty_order);

  const KnotVector& knots() const noexcept { return knots_; }
  int penalty_order() const noexcept { return order_; }
  const Eigen::MatrixXd& penalty() const noexcept { return penalty_; }
  const Eigen::MatrixXd& gram() const noexcept { return gram_; }
  const PenaltySplit& split() const noexcept { return split_; }
  int num_basis() const noexcept { return knots_.num_basis(); }
  int num_random() const noexcept { return static_cast<int>(split_.positive_eigenvalues.size()); }

  Eigen::MatrixXd basis(std::span<const double> points, OutOfDomain policy = OutOfDomain::Error,
                        int* clamped = nullptr) const;
  /// Range-space part B U_p D_+^{-1/2}.
  Eigen::MatrixXd random_part(std::span<const double> points,
                              OutOfDomain policy = OutOfDomain::Error,
                              int* clamped = nullptr) const;

 private:
  KnotVector knots_;
  int order_;
  Eigen::MatrixXd penalty_;
  Eigen::MatrixXd gram_;
  PenaltySplit split_;
  Eigen::MatrixXd range_scaled_;
};

}  // namespace fgam
