#include "fgam/model.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>
#include <limits>
#include <span>
#include <sstream>

namespace fgam {

namespace {

constexpr int kGcvGrid = 21;
constexpr double kGcvLogLo = -8.0;  // log10
constexpr double kGcvLogHi = 8.0;

std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

// Precomputed pieces of the tensor penalized least-squares problem, solved
// as the augmented least-squares system [M; sqrt(lx) Rx; sqrt(lt) Rt; F]
// with Rx'Rx = P_x (x) G_t, Rt'Rt = G_x (x) P_t and F'F = kappa v v'.
struct TensorSystem {
  const TensorDesign& design;
  Eigen::MatrixXd root_x, root_t;
  Eigen::MatrixXd fix_rows;  // fixes the confounded null direction

  static Eigen::MatrixXd psd_root(const Eigen::MatrixXd& A) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    const Eigen::VectorXd& ev = es.eigenvalues();
    // Round-off eigenvalues of the null space would be amplified by large lambda.
    const double tol = 1e-10 * ev.cwiseAbs().maxCoeff();
    const Eigen::VectorXd r = (ev.array() > tol).select(ev.cwiseSqrt(), 0.0);
    return r.asDiagonal() * es.eigenvectors().transpose();
  }

  TensorSystem(const TensorDesign& d, const Eigen::VectorXd& y) : design(d) {
    const Eigen::MatrixXd& M = d.model_matrix;
    if (y.size() != M.rows()) throw ShapeError("response length differs from design rows");
    root_x = psd_root(d.penalty_x);
    root_t = psd_root(d.penalty_t);
    const Eigen::MatrixXd null_vectors = split_penalty(d.penalty(1.0, 1.0), 4).null_vectors;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M * null_vectors, Eigen::ComputeFullV);
    const Eigen::VectorXd& s = svd.singularValues();
    const double kappa = M.squaredNorm() / static_cast<double>(M.cols());
    std::vector<Eigen::VectorXd> rows;
    for (Eigen::Index k = 0; k < s.size(); ++k)
      if (s[k] <= 1e-8 * s[0]) rows.push_back(std::sqrt(kappa) * (null_vectors * svd.matrixV().col(k)));
    fix_rows.resize(static_cast<Eigen::Index>(rows.size()), M.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) fix_rows.row(static_cast<Eigen::Index>(k)) = rows[k].transpose();
  }

  PenalizedFit solve(const Eigen::VectorXd& y, double lx, double lt) const {
    const Eigen::MatrixXd& M = design.model_matrix;
    const Eigen::Index n = M.rows(), k = M.cols();
    Eigen::MatrixXd A(n + 2 * k + fix_rows.rows(), k);
    A << M, std::sqrt(lx) * root_x, std::sqrt(lt) * root_t, fix_rows;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(A.rows());
    rhs.head(n) = y;
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    if (qr.rank() == 0) throw NumericalError("penalized least-squares system is singular");
    PenalizedFit f;
    f.theta = qr.solve(rhs);
    f.fitted = M * f.theta;
    f.rss = (y - f.fitted).squaredNorm();
    // tr H = |M P R^{-1}|_F^2 over the numerically nonzero part of R
    const Eigen::Index r = qr.rank();
    const Eigen::MatrixXd MP = (M * qr.colsPermutation()).leftCols(r);
    const Eigen::MatrixXd R = qr.matrixR().topLeftCorner(r, r).triangularView<Eigen::Upper>();
    f.edf = R.transpose().triangularView<Eigen::Lower>().solve(MP.transpose()).squaredNorm();
    return f;
  }

  double gcv(const Eigen::VectorXd& y, double lx, double lt) const {
    const PenalizedFit f = solve(y, lx, lt);
    const double N = static_cast<double>(y.size());
    if (f.edf >= N) {
      std::ostringstream os;
      os << "hat-matrix trace " << f.edf << " is not below N = " << y.size();
      throw NumericalError(os.str());
    }
    return N * f.rss / ((N - f.edf) * (N - f.edf));
  }
};

Eigen::VectorXd linspace(double a, double b, int n) {
  if (n < 2) return Eigen::VectorXd::Constant(1, a);
  return Eigen::VectorXd::LinSpaced(n, a, b);
}

void check_data(const FunctionalDataset& data) {
  data.validate(true);
  if (data.n() <= 10) throw ParameterError("model fitting needs more than 10 curves");
}

FgamFit mixed_fit(ModelKind kind, const FunctionalDataset& data, PsAnovaBasis basis, const FitOptions& options) {
  const PsAnovaDesign d = basis.design(data.x, data.t);
  std::vector<Eigen::MatrixXd> Z{d.Z1};
  if (kind == ModelKind::Fgamm) {
    Z.push_back(d.Z2);
    Z.push_back(d.Z3);
  }
  MixedModelSpec spec{data.y, d.X, std::move(Z)};
  FgamFit fit;
  fit.kind = kind;
  fit.rule = basis.rule();
  fit.kt = basis.t_smooth().num_basis();
  fit.kx = basis.has_x_smooth() ? basis.x_smooth().num_basis() : 0;
  fit.t = data.t;
  fit.x_range = predictor_range(data.x);
  fit.components = fit_mixed_model(spec, options);
  fit.fitted = fit.components.fitted;
  fit.residuals = data.y - fit.fitted;
  if (fit.components.degenerate_residual) fit.warnings.push_back("residual variance floored (response fitted exactly)");
  fit.basis.emplace(std::move(basis));
  return fit;
}

}  // namespace

const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Fgamm: return "fgamm";
    case ModelKind::Flm: return "flm";
    case ModelKind::TensorGcv: return "fgam-gcv";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "fgamm") return ModelKind::Fgamm;
  if (name == "flm") return ModelKind::Flm;
  if (name == "fgam-gcv") return ModelKind::TensorGcv;
  throw ParameterError("unknown model '" + name + "' (expected flm, fgam-gcv or fgamm)");
}

PenalizedFit fit_penalized(const TensorDesign& design, const Eigen::VectorXd& y, double lambda_x, double lambda_t) {
  if (!(lambda_x >= 0.0) || !(lambda_t >= 0.0)) throw ParameterError("smoothing parameters must be non-negative");
  return TensorSystem(design, y).solve(y, lambda_x, lambda_t);
}

Eigen::VectorXd split_ridge_fitted(const NullspaceSplit& split, const Eigen::VectorXd& y) {
  const Eigen::Index p = split.fixed.cols(), q = split.random.cols();
  Eigen::MatrixXd C(split.fixed.rows(), p + q);
  C << split.fixed, split.random;
  Eigen::MatrixXd A = C.transpose() * C;
  A.bottomRightCorner(q, q).diagonal() += split.positive_eigenvalues;
  // The fixed block may be rank deficient; any minimiser gives the same fit.
  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
  return C * cod.solve(C.transpose() * y);
}

double gcv_score(const TensorDesign& design, const Eigen::VectorXd& y, double lambda_x, double lambda_t) {
  return TensorSystem(design, y).gcv(y, lambda_x, lambda_t);
}

FgamFit fit_fgamm(const FunctionalDataset& data, int kx, int kt, QuadratureRule rule, const FitOptions& options) {
  check_data(data);
  return mixed_fit(ModelKind::Fgamm, data, PsAnovaBasis::from_data(data, kx, kt, rule), options);
}

FgamFit fit_flm(const FunctionalDataset& data, int kt, QuadratureRule rule, const FitOptions& options) {
  check_data(data);
  return mixed_fit(ModelKind::Flm, data, PsAnovaBasis::flm_from_data(data, kt, rule), options);
}

FgamFit fit_fgam_gcv(const FunctionalDataset& data, int kx, int kt, QuadratureRule rule) {
  check_data(data);
  const QuadratureOperator quad(data.n(), data.t, rule);
  const TensorDesign design = build_tensor_design(data, kx, kt, quad);
  const TensorSystem sys(design, data.y);

  auto search = [&](double lo_x, double hi_x, double lo_t, double hi_t) {
    const Eigen::VectorXd gx = linspace(lo_x, hi_x, kGcvGrid), gt = linspace(lo_t, hi_t, kGcvGrid);
    GcvSearch best;
    best.score = std::numeric_limits<double>::infinity();
    int bi = 0, bj = 0;
    for (int i = 0; i < gx.size(); ++i) {
      for (int j = 0; j < gt.size(); ++j) {
        const double s = sys.gcv(data.y, std::pow(10.0, gx[i]), std::pow(10.0, gt[j]));
        if (s < best.score) {
          best = {gx[i], gt[j], s, false};
          bi = i;
          bj = j;
        }
      }
    }
    best.on_boundary = bi == 0 || bj == 0 || bi == gx.size() - 1 || bj == gt.size() - 1;
    return best;
  };

  const double step = (kGcvLogHi - kGcvLogLo) / (kGcvGrid - 1);
  const GcvSearch coarse = search(kGcvLogLo, kGcvLogHi, kGcvLogLo, kGcvLogHi);
  const GcvSearch fine = search(coarse.lambda_x - step, coarse.lambda_x + step, coarse.lambda_t - step,
                                coarse.lambda_t + step);
  GcvSearch chosen = fine.score <= coarse.score ? fine : coarse;
  chosen.on_boundary = coarse.on_boundary;
  chosen.lambda_x = std::pow(10.0, chosen.lambda_x);
  chosen.lambda_t = std::pow(10.0, chosen.lambda_t);

  const PenalizedFit pf = sys.solve(data.y, chosen.lambda_x, chosen.lambda_t);
  FgamFit fit;
  fit.kind = ModelKind::TensorGcv;
  fit.rule = rule;
  fit.kx = kx;
  fit.kt = kt;
  fit.t = data.t;
  fit.x_range = predictor_range(data.x);
  fit.x_smooth = design.x_smooth;
  fit.t_smooth = design.t_smooth;
  fit.theta = pf.theta;
  fit.edf = pf.edf;
  fit.gcv = chosen;
  fit.fitted = pf.fitted;
  fit.residuals = data.y - pf.fitted;
  if (chosen.on_boundary) fit.warnings.push_back("GCV minimiser lies on the boundary of the smoothing-parameter grid");
  return fit;
}

Prediction predict(const FgamFit& fit, const Eigen::MatrixXd& x, const Eigen::VectorXd& t) {
  if (x.cols() != t.size()) {
    std::ostringstream os;
    os << "predictor matrix has " << x.cols() << " columns but the grid has " << t.size() << " points";
    throw ShapeError(os.str());
  }
  FunctionalDataset nd{Eigen::VectorXd(), x, t};
  nd.validate(false);
  Prediction out;
  if (fit.kind == ModelKind::TensorGcv) {
    const QuadratureOperator quad(x.rows(), t, fit.rule);
    out.mean = tensor_model_matrix(*fit.x_smooth, *fit.t_smooth, x, quad, OutOfDomain::Clamp, &out.clamped) *
               fit.theta;
  } else {
    const PsAnovaDesign d = fit.basis->design(x, t, OutOfDomain::Clamp, &out.clamped);
    const auto& b = fit.components.blups;
    out.mean = d.X * fit.components.beta + d.Z1 * b[0];
    if (fit.kind == ModelKind::Fgamm) out.mean += d.Z2 * b[1] + d.Z3 * b[2];
  }
  if (out.clamped > 0) {
    std::ostringstream os;
    os << out.clamped << " predictor value(s) outside the training range [" << fit.x_range.lo << ", "
       << fit.x_range.hi << "] were clamped";
    out.warnings.push_back(os.str());
  }
  return out;
}

SurfaceDecomposition evaluate_surface(const FgamFit& fit, const Eigen::VectorXd& x_grid,
                                      const Eigen::VectorXd& t_grid) {
  const Eigen::Index nx = x_grid.size(), nt = t_grid.size();
  if (nx == 0 || nt == 0) throw ParameterError("surface grids must be non-empty");
  SurfaceDecomposition s;
  s.x = x_grid;
  s.t = t_grid;
  s.parametric = s.x_linear = s.x_smooth = s.nonparametric = Eigen::MatrixXd::Zero(nx, nt);

  if (fit.kind == ModelKind::TensorGcv) {
    const Eigen::MatrixXd Bx = fit.x_smooth->basis(as_span(x_grid), OutOfDomain::Clamp);
    const Eigen::MatrixXd Bt = fit.t_smooth->basis(as_span(t_grid), OutOfDomain::Clamp);
    const Eigen::Index kx = Bx.cols(), kt = Bt.cols();
    // theta is x-major: entry a*kt + b multiplies B_x,a B_t,b.
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Eigen::MatrixXd P = Eigen::kroneckerProduct(fit.x_smooth->penalty(), fit.t_smooth->gram()) +
                              Eigen::kroneckerProduct(fit.x_smooth->gram(), fit.t_smooth->penalty());
    const Eigen::MatrixXd Un = split_penalty(P, 4).null_vectors;
    const Eigen::VectorXd theta_null = Un * (Un.transpose() * fit.theta);
    const Eigen::VectorXd theta_range = fit.theta - theta_null;
    s.parametric = Bx * Eigen::Map<const RowMat>(theta_null.data(), kx, kt) * Bt.transpose();
    s.nonparametric = Bx * Eigen::Map<const RowMat>(theta_range.data(), kx, kt) * Bt.transpose();
  } else {
    Eigen::VectorXd xs(nx * nt), ts(nx * nt);
    for (Eigen::Index i = 0; i < nx; ++i)
      for (Eigen::Index j = 0; j < nt; ++j) {
        xs[i * nt + j] = x_grid[i];
        ts[i * nt + j] = t_grid[j];
      }
    const auto pb = fit.basis->pointwise(xs, ts, OutOfDomain::Clamp);
    const auto& b = fit.components.blups;
    auto to_grid = [&](const Eigen::VectorXd& v) {
      using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
      return Eigen::MatrixXd(Eigen::Map<const RowMat>(v.data(), nx, nt));
    };
    s.parametric = to_grid(pb.fixed * fit.components.beta);
    s.x_linear = to_grid(pb.z1 * b[0]);
    if (fit.kind == ModelKind::Fgamm) {
      s.x_smooth = to_grid(pb.z2 * b[1]);
      s.nonparametric = to_grid(pb.z3 * b[2]);
    }
  }
  s.total = s.parametric + s.x_linear + s.x_smooth + s.nonparametric;
  return s;
}

SurfaceDecomposition evaluate_surface(const FgamFit& fit, int nx, int nt) {
  if (nx < 1 || nt < 1) throw ParameterError("surface grid sizes must be positive");
  return evaluate_surface(fit, linspace(fit.x_range.lo, fit.x_range.hi, nx),
                          linspace(fit.t[0], fit.t[fit.t.size() - 1], nt));
}

}  // namespace fgam
