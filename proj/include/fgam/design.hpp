#pragma once

#include "fgam/splines.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <optional>
#include <string>
#include <vector>

namespace fgam {

/// Scalar responses with densely observed functional predictors on a shared grid.
struct FunctionalDataset {
  Eigen::VectorXd y;  // N (may be empty when only predicting)
  Eigen::MatrixXd x;  // N x J, one curve per row
  Eigen::VectorXd t;  // J observation times, strictly increasing

  Eigen::Index n() const noexcept { return x.rows(); }
  Eigen::Index j() const noexcept { return x.cols(); }

  /// Throws ShapeError / DataError on inconsistent sizes, non-finite values,
  /// or a non-increasing grid.
  void validate(bool require_response = true) const;

  /// Subset of curves (rows) in the given order.
  FunctionalDataset subset(const std::vector<Eigen::Index>& rows) const;
};

enum class QuadratureRule { Trapezoid, Midpoint };

const char* to_string(QuadratureRule rule);
QuadratureRule quadrature_rule_from_string(const std::string& name);

/// Quadrature over the observation grid: L = I_N (x) w^T, acting on pointwise
/// evaluations stored curve-major (row i*J + j).
class QuadratureOperator {
 public:
  QuadratureOperator(Eigen::Index n_curves, Eigen::VectorXd grid, QuadratureRule rule);

  Eigen::Index n_curves() const noexcept { return n_; }
  const Eigen::VectorXd& grid() const noexcept { return grid_; }
  const Eigen::VectorXd& weights() const noexcept { return weights_; }
  QuadratureRule rule() const noexcept { return rule_; }
  Interval domain() const noexcept { return {grid_[0], grid_[grid_.size() - 1]}; }

  /// Sparse N x (N*J) matrix.
  Eigen::SparseMatrix<double> matrix() const;

  /// (N*J x m) pointwise values -> (N x m) integrals.
  Eigen::MatrixXd apply(const Eigen::MatrixXd& pointwise) const;

 private:
  Eigen::Index n_;
  Eigen::VectorXd grid_;
  Eigen::VectorXd weights_;
  QuadratureRule rule_;
};

QuadratureOperator quadrature_weights(Eigen::Index n_curves, const Eigen::VectorXd& grid,
                                      QuadratureRule rule);

/// Row-wise Kronecker product: row i of the result is kron(A1.row(i), A2.row(i)).
Eigen::MatrixXd box_product(const Eigen::MatrixXd& A1, const Eigen::MatrixXd& A2);

/// Range of all predictor values, used as the x-axis basis domain.
Interval predictor_range(const Eigen::MatrixXd& x);

/// Curve-major flattening of the predictor matrix and the matching times.
Eigen::VectorXd flatten_curves(const Eigen::MatrixXd& x);
Eigen::VectorXd repeat_grid(const Eigen::VectorXd& t, Eigen::Index n_curves);

/// Standard tensor-product FGAM design: L (B_x box B_t) with marginal
/// second-order penalties combined as lx (P_x (x) G_t) + lt (G_x (x) P_t).
struct TensorDesign {
  MarginalSmooth x_smooth;
  MarginalSmooth t_smooth;
  Eigen::MatrixXd model_matrix;  // N x (Kx*Kt)
  Eigen::MatrixXd penalty_x;     // P_x (x) G_t
  Eigen::MatrixXd penalty_t;     // G_x (x) P_t

  Eigen::MatrixXd penalty(double lambda_x, double lambda_t) const;
  Eigen::Index num_coefficients() const noexcept { return model_matrix.cols(); }
};

/// Builds the tensor design at the given marginal bases (used for prediction).
Eigen::MatrixXd tensor_model_matrix(const MarginalSmooth& xs, const MarginalSmooth& ts,
                                    const Eigen::MatrixXd& x, const QuadratureOperator& quad,
                                    OutOfDomain policy = OutOfDomain::Error, int* clamped = nullptr);

TensorDesign build_tensor_design(const FunctionalDataset& data, int kx, int kt,
                                 const QuadratureOperator& quad);

/// Mixed-model split of the tensor design at fixed smoothing parameters.
struct NullspaceSplit {
  Eigen::MatrixXd fixed;                // N x 4, L (B_x box B_t) U_n
  Eigen::MatrixXd random;               // N x (K - 4), L (B_x box B_t) U_p
  Eigen::MatrixXd null_vectors;         // U_n
  Eigen::MatrixXd range_vectors;        // U_p
  Eigen::VectorXd positive_eigenvalues; // D_+ = U_p' S U_p; prior covariance is its inverse
};

NullspaceSplit split_penalty_nullspace(const TensorDesign& design, double lambda_x, double lambda_t);

/// Fixed and random blocks of the penalized-spline ANOVA mixed model.
struct PsAnovaDesign {
  Eigen::MatrixXd X;   // L [1 : x : x*t]
  Eigen::MatrixXd Z1;  // L (x box Z_t)       -- x f2(t)
  Eigen::MatrixXd Z2;  // L (Z_x box [1 : t]) -- g1(x) + t g2(x)
  Eigen::MatrixXd Z3;  // L (Z_x box Z_t)     -- h(x, t)

  Eigen::Index q1() const noexcept { return Z1.cols(); }
  Eigen::Index q2() const noexcept { return Z2.cols(); }
  Eigen::Index q3() const noexcept { return Z3.cols(); }
  Eigen::Index n() const noexcept { return X.rows(); }
};

/// Marginal smooths plus quadrature rule; rebuilds the ANOVA design for any
/// set of curves (training or new). The x smooth is absent for FLM-only use.
class PsAnovaBasis {
 public:
  PsAnovaBasis(std::optional<MarginalSmooth> x_smooth, MarginalSmooth t_smooth, QuadratureRule rule);

  /// Knots over the observed predictor range and the observation interval.
  static PsAnovaBasis from_data(const FunctionalDataset& data, int kx, int kt, QuadratureRule rule);
  static PsAnovaBasis flm_from_data(const FunctionalDataset& data, int kt, QuadratureRule rule);

  bool has_x_smooth() const noexcept { return x_smooth_.has_value(); }
  const MarginalSmooth& x_smooth() const;
  const MarginalSmooth& t_smooth() const noexcept { return t_smooth_; }
  QuadratureRule rule() const noexcept { return rule_; }

  /// Design for curves `x` observed on `t`; out-of-domain x values are
  /// clamped when `policy` allows and counted in `clamped`.
  PsAnovaDesign design(const Eigen::MatrixXd& x, const Eigen::VectorXd& t,
                       OutOfDomain policy = OutOfDomain::Error, int* clamped = nullptr) const;

  /// Pointwise surface bases at (x_k, t_k) pairs, before quadrature:
  /// [1 : x : x t], x Z_t(t), Z_x(x) box [1 : t], Z_x(x) box Z_t(t).
  struct PointwiseBases {
    Eigen::MatrixXd fixed, z1, z2, z3;
  };
  PointwiseBases pointwise(const Eigen::VectorXd& xs, const Eigen::VectorXd& ts,
                           OutOfDomain policy = OutOfDomain::Clamp, int* clamped = nullptr) const;

 private:
  std::optional<MarginalSmooth> x_smooth_;
  MarginalSmooth t_smooth_;
  QuadratureRule rule_;
};

PsAnovaDesign build_psanova_design(const FunctionalDataset& data, int kx, int kt, QuadratureRule rule);

}  // namespace fgam
