#include "fgam/design.hpp"

#include "fgam/errors.hpp"

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>
#include <sstream>

namespace fgam {

void FunctionalDataset::validate(bool require_response) const {
  if (x.rows() == 0 || x.cols() == 0) throw ShapeError("predictor matrix is empty");
  if (t.size() != x.cols()) {
    std::ostringstream os;
    os << "grid has " << t.size() << " points but predictor matrix has " << x.cols() << " columns";
    throw ShapeError(os.str());
  }
  if (require_response && y.size() != x.rows()) {
    std::ostringstream os;
    os << "response has " << y.size() << " entries but predictor matrix has " << x.rows() << " rows";
    throw ShapeError(os.str());
  }
  if (!x.allFinite()) throw DataError("predictor matrix contains missing or non-finite values");
  if (y.size() > 0 && !y.allFinite()) throw DataError("response contains missing or non-finite values");
  for (Eigen::Index j = 1; j < t.size(); ++j) {
    if (!(t[j] > t[j - 1])) {
      std::ostringstream os;
      os << "observation grid is not strictly increasing at index " << j;
      throw DataError(os.str());
    }
  }
}

FunctionalDataset FunctionalDataset::subset(const std::vector<Eigen::Index>& rows) const {
  FunctionalDataset out;
  out.t = t;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
  if (y.size() > 0) out.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.x.row(static_cast<Eigen::Index>(k)) = x.row(rows[k]);
    if (y.size() > 0) out.y[static_cast<Eigen::Index>(k)] = y[rows[k]];
  }
  return out;
}

const char* to_string(QuadratureRule rule) {
  return rule == QuadratureRule::Trapezoid ? "trapezoid" : "midpoint";
}

QuadratureRule quadrature_rule_from_string(const std::string& name) {
  if (name == "trapezoid") return QuadratureRule::Trapezoid;
  if (name == "midpoint") return QuadratureRule::Midpoint;
  throw ParameterError("unknown quadrature rule '" + name + "' (expected trapezoid or midpoint)");
}

QuadratureOperator::QuadratureOperator(Eigen::Index n_curves, Eigen::VectorXd grid, QuadratureRule rule)
    : n_(n_curves), grid_(std::move(grid)), rule_(rule) {
  const Eigen::Index J = grid_.size();
  if (J < 2) throw ParameterError("quadrature needs at least two grid points");
  for (Eigen::Index j = 1; j < J; ++j)
    if (!(grid_[j] > grid_[j - 1]))
      throw ParameterError("quadrature grid must be strictly increasing");
  weights_.resize(J);
  if (rule_ == QuadratureRule::Midpoint) {
    weights_.setConstant((grid_[J - 1] - grid_[0]) / static_cast<double>(J));
  } else {
    weights_.setZero();
    for (Eigen::Index j = 0; j + 1 < J; ++j) {
      const double h = grid_[j + 1] - grid_[j];
      weights_[j] += 0.5 * h;
      weights_[j + 1] += 0.5 * h;
    }
  }
}

Eigen::SparseMatrix<double> QuadratureOperator::matrix() const {
  const Eigen::Index J = grid_.size();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(n_ * J));
  for (Eigen::Index i = 0; i < n_; ++i)
    for (Eigen::Index j = 0; j < J; ++j) trips.emplace_back(i, i * J + j, weights_[j]);
  Eigen::SparseMatrix<double> L(n_, n_ * J);
  L.setFromTriplets(trips.begin(), trips.end());
  return L;
}

Eigen::MatrixXd QuadratureOperator::apply(const Eigen::MatrixXd& pointwise) const {
  const Eigen::Index J = grid_.size();
  if (pointwise.rows() != n_ * J) {
    std::ostringstream os;
    os << "quadrature expects " << n_ * J << " pointwise rows, got " << pointwise.rows();
    throw ShapeError(os.str());
  }
  Eigen::MatrixXd out(n_, pointwise.cols());
  for (Eigen::Index i = 0; i < n_; ++i)
    out.row(i).noalias() = weights_.transpose() * pointwise.middleRows(i * J, J);
  return out;
}

QuadratureOperator quadrature_weights(Eigen::Index n_curves, const Eigen::VectorXd& grid,
                                      QuadratureRule rule) {
  return QuadratureOperator(n_curves, grid, rule);
}

Eigen::MatrixXd box_product(const Eigen::MatrixXd& A1, const Eigen::MatrixXd& A2) {
  if (A1.rows() != A2.rows()) {
    std::ostringstream os;
    os << "box product needs equal row counts (" << A1.rows() << " vs " << A2.rows() << ")";
    throw ShapeError(os.str());
  }
  const Eigen::Index m1 = A1.cols(), m2 = A2.cols();
  Eigen::MatrixXd out(A1.rows(), m1 * m2);
  for (Eigen::Index a = 0; a < m1; ++a)
    out.middleCols(a * m2, m2) = A2.array().colwise() * A1.col(a).array();
  return out;
}

Interval predictor_range(const Eigen::MatrixXd& x) { return {x.minCoeff(), x.maxCoeff()}; }

Eigen::VectorXd flatten_curves(const Eigen::MatrixXd& x) {
  Eigen::VectorXd v(x.size());
  const Eigen::Index J = x.cols();
  for (Eigen::Index i = 0; i < x.rows(); ++i) v.segment(i * J, J) = x.row(i).transpose();
  return v;
}

Eigen::VectorXd repeat_grid(const Eigen::VectorXd& t, Eigen::Index n_curves) {
  Eigen::VectorXd v(t.size() * n_curves);
  for (Eigen::Index i = 0; i < n_curves; ++i) v.segment(i * t.size(), t.size()) = t;
  return v;
}

namespace {

std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

void check_capacity(Eigen::Index rows, Eigen::Index cols) {
  constexpr Eigen::Index kMaxColumns = 10000;
  constexpr double kMaxEntries = 4.0e8;
  if (cols > kMaxColumns || static_cast<double>(rows) * static_cast<double>(cols) > kMaxEntries) {
    std::ostringstream os;
    os << "design of " << rows << " x " << cols << " exceeds capacity";
    throw CapacityError(os.str());
  }
}

}  // namespace

Eigen::MatrixXd TensorDesign::penalty(double lambda_x, double lambda_t) const {
  return lambda_x * penalty_x + lambda_t * penalty_t;
}

Eigen::MatrixXd tensor_model_matrix(const MarginalSmooth& xs, const MarginalSmooth& ts,
                                    const Eigen::MatrixXd& x, const QuadratureOperator& quad,
                                    OutOfDomain policy, int* clamped) {
  const Eigen::VectorXd xv = flatten_curves(x);
  const Eigen::VectorXd tv = repeat_grid(quad.grid(), x.rows());
  check_capacity(xv.size(), static_cast<Eigen::Index>(xs.num_basis()) * ts.num_basis());
  const Eigen::MatrixXd Bx = xs.basis(as_span(xv), policy, clamped);
  const Eigen::MatrixXd Bt = ts.basis(as_span(tv), OutOfDomain::Clamp);
  return quad.apply(box_product(Bx, Bt));
}

TensorDesign build_tensor_design(const FunctionalDataset& data, int kx, int kt,
                                 const QuadratureOperator& quad) {
  data.validate(false);
  if (quad.n_curves() != data.n() || quad.grid().size() != data.j())
    throw ShapeError("quadrature operator does not match the dataset dimensions");
  check_capacity(data.n() * data.j(), static_cast<Eigen::Index>(kx) * kt);
  const Interval xr = predictor_range(data.x);
  if (!(xr.hi > xr.lo)) throw DegenerateDesignError("predictor curves are constant; x-axis basis is undefined");
  MarginalSmooth xs(make_knots(xr, kx), 2);
  MarginalSmooth ts(make_knots(quad.domain(), kt), 2);
  Eigen::MatrixXd M = tensor_model_matrix(xs, ts, data.x, quad);
  Eigen::MatrixXd Px = Eigen::kroneckerProduct(xs.penalty(), ts.gram());
  Eigen::MatrixXd Pt = Eigen::kroneckerProduct(xs.gram(), ts.penalty());
  return TensorDesign{std::move(xs), std::move(ts), std::move(M), std::move(Px), std::move(Pt)};
}

NullspaceSplit split_penalty_nullspace(const TensorDesign& design, double lambda_x, double lambda_t) {
  if (!(lambda_x > 0.0) || !(lambda_t > 0.0))
    throw ParameterError("smoothing parameters must be strictly positive");
  const PenaltySplit split = split_penalty(design.penalty(lambda_x, lambda_t), 4);
  NullspaceSplit out;
  out.null_vectors = split.null_vectors;
  out.range_vectors = split.range_vectors;
  out.positive_eigenvalues = split.positive_eigenvalues;
  out.fixed = design.model_matrix * split.null_vectors;
  out.random = design.model_matrix * split.range_vectors;
  return out;
}

PsAnovaBasis::PsAnovaBasis(std::optional<MarginalSmooth> x_smooth, MarginalSmooth t_smooth,
                           QuadratureRule rule)
    : x_smooth_(std::move(x_smooth)), t_smooth_(std::move(t_smooth)), rule_(rule) {}

PsAnovaBasis PsAnovaBasis::from_data(const FunctionalDataset& data, int kx, int kt, QuadratureRule rule) {
  data.validate(false);
  const Interval xr = predictor_range(data.x);
  if (!(xr.hi - xr.lo > 1e-12 * std::max(1.0, std::abs(xr.hi))))
    throw DegenerateDesignError("predictor curves are (near) constant; x-axis basis is undefined");
  return PsAnovaBasis(MarginalSmooth(make_knots(xr, kx), 2),
                      MarginalSmooth(make_knots({data.t[0], data.t[data.j() - 1]}, kt), 2), rule);
}

PsAnovaBasis PsAnovaBasis::flm_from_data(const FunctionalDataset& data, int kt, QuadratureRule rule) {
  data.validate(false);
  return PsAnovaBasis(std::nullopt, MarginalSmooth(make_knots({data.t[0], data.t[data.j() - 1]}, kt), 2),
                      rule);
}

const MarginalSmooth& PsAnovaBasis::x_smooth() const {
  if (!x_smooth_) throw ParameterError("basis has no x-axis smooth (FLM-only basis)");
  return *x_smooth_;
}

PsAnovaBasis::PointwiseBases PsAnovaBasis::pointwise(const Eigen::VectorXd& xs, const Eigen::VectorXd& ts,
                                                     OutOfDomain policy, int* clamped) const {
  if (xs.size() != ts.size()) throw ShapeError("pointwise evaluation needs equally many x and t values");
  PointwiseBases pb;
  const Eigen::Index n = xs.size();
  pb.fixed.resize(n, 3);
  pb.fixed.col(0).setOnes();
  pb.fixed.col(1) = xs;
  pb.fixed.col(2) = xs.cwiseProduct(ts);
  const Eigen::MatrixXd Zt = t_smooth_.random_part(as_span(ts), OutOfDomain::Clamp);
  pb.z1 = box_product(xs, Zt);
  if (x_smooth_) {
    const Eigen::MatrixXd Zx = x_smooth_->random_part(as_span(xs), policy, clamped);
    Eigen::MatrixXd Xt(n, 2);
    Xt.col(0).setOnes();
    Xt.col(1) = ts;
    pb.z2 = box_product(Zx, Xt);
    pb.z3 = box_product(Zx, Zt);
  } else if (clamped) {
    *clamped = 0;
  }
  return pb;
}

PsAnovaDesign PsAnovaBasis::design(const Eigen::MatrixXd& x, const Eigen::VectorXd& t,
                                   OutOfDomain policy, int* clamped) const {
  if (t.size() != x.cols()) throw ShapeError("grid length does not match predictor columns");
  const QuadratureOperator quad(x.rows(), t, rule_);
  const Eigen::VectorXd xv = flatten_curves(x);
  const Eigen::VectorXd tv = repeat_grid(t, x.rows());
  if (x_smooth_)
    check_capacity(xv.size(), static_cast<Eigen::Index>(x_smooth_->num_random()) * t_smooth_.num_random());
  const PointwiseBases pb = pointwise(xv, tv, policy, clamped);
  PsAnovaDesign d;
  d.X = quad.apply(pb.fixed);
  d.Z1 = quad.apply(pb.z1);
  if (x_smooth_) {
    d.Z2 = quad.apply(pb.z2);
    d.Z3 = quad.apply(pb.z3);
  } else {
    d.Z2.resize(x.rows(), 0);
    d.Z3.resize(x.rows(), 0);
  }
  return d;
}

PsAnovaDesign build_psanova_design(const FunctionalDataset& data, int kx, int kt, QuadratureRule rule) {
  return PsAnovaBasis::from_data(data, kx, kt, rule).design(data.x, data.t);
}

}  // namespace fgam
