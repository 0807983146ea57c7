#pragma once

#include "fgam/design.hpp"
#include "fgam/lmm.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace fgam {

enum class ModelKind { Fgamm, Flm, TensorGcv };

const char* to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

/// Penalized least-squares fit of the tensor design at fixed smoothing parameters.
struct PenalizedFit {
  Eigen::VectorXd theta;
  Eigen::VectorXd fitted;
  double rss = 0.0;
  double edf = 0.0;  // trace of the hat matrix
};

/// Minimises |y - M theta|^2 + theta' S(lx, lt) theta. The single direction
/// of the penalty null space that integrates to a constant (and so duplicates
/// the intercept) is fixed at zero; fitted values do not depend on it.
PenalizedFit fit_penalized(const TensorDesign& design, const Eigen::VectorXd& y, double lambda_x, double lambda_t);

/// Fitted values of the ridge problem on the null/range split:
/// min |y - Xn a - Zp b|^2 + b' D_+ b.
Eigen::VectorXd split_ridge_fitted(const NullspaceSplit& split, const Eigen::VectorXd& y);

struct GcvSearch {
  double lambda_x = 0.0;
  double lambda_t = 0.0;
  double score = 0.0;
  bool on_boundary = false;  // minimiser on the edge of the coarse grid
};

/// N RSS / (N - tr H)^2.
double gcv_score(const TensorDesign& design, const Eigen::VectorXd& y, double lambda_x, double lambda_t);

struct FgamFit {
  ModelKind kind = ModelKind::Fgamm;
  QuadratureRule rule = QuadratureRule::Trapezoid;
  int kx = 0, kt = 0;
  Eigen::VectorXd t;       // training grid
  Interval x_range;        // training predictor range
  Eigen::VectorXd fitted;
  Eigen::VectorXd residuals;

  // PS-ANOVA parameterisation (Fgamm, Flm).
  std::optional<PsAnovaBasis> basis;
  VarianceComponentFit components;

  // Tensor parameterisation (TensorGcv).
  std::optional<MarginalSmooth> x_smooth, t_smooth;
  Eigen::VectorXd theta;
  GcvSearch gcv;
  double edf = 0.0;

  std::vector<std::string> warnings;

  Eigen::Index n() const noexcept { return fitted.size(); }
};

FgamFit fit_fgamm(const FunctionalDataset& data, int kx = 10, int kt = 10,
                  QuadratureRule rule = QuadratureRule::Trapezoid, const FitOptions& options = {});
FgamFit fit_flm(const FunctionalDataset& data, int kt = 10, QuadratureRule rule = QuadratureRule::Trapezoid,
                const FitOptions& options = {});
FgamFit fit_fgam_gcv(const FunctionalDataset& data, int kx = 10, int kt = 10,
                     QuadratureRule rule = QuadratureRule::Trapezoid);

struct Prediction {
  Eigen::VectorXd mean;
  int clamped = 0;  // predictor values moved onto the training range
  std::vector<std::string> warnings;
};

/// Predicted means for new curves observed on grid `t` (quadrature weights
/// are derived from `t`).
Prediction predict(const FgamFit& fit, const Eigen::MatrixXd& x, const Eigen::VectorXd& t);

/// Surface components on an x-by-t grid. For PS-ANOVA fits:
///   parametric      b0 + b1 x + b2 x t
///   x_linear        x f2(t)
///   x_smooth        g1(x) + t g2(x)
///   nonparametric   h(x, t)
/// For tensor fits the penalty null-space part is reported as parametric and
/// the remainder as nonparametric.
struct SurfaceDecomposition {
  Eigen::VectorXd x, t;
  Eigen::MatrixXd parametric, x_linear, x_smooth, nonparametric, total;  // each nx x nt
};

SurfaceDecomposition evaluate_surface(const FgamFit& fit, const Eigen::VectorXd& x_grid,
                                      const Eigen::VectorXd& t_grid);

/// Equally spaced grids over the training ranges (51 x 51 by default).
SurfaceDecomposition evaluate_surface(const FgamFit& fit, int nx = 51, int nt = 51);

}  // namespace fgam
