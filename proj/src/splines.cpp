#include "fgam/splines.hpp"

#include "fgam/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fgam {

namespace {

// All derivatives up to `n` of the p+1 non-zero B-splines at x in `span`
// (de Boor / Cox recursion in triangular-table form).
Eigen::MatrixXd basis_derivatives(const std::vector<double>& U, int p, int span, double x, int n) {
  Eigen::MatrixXd ders = Eigen::MatrixXd::Zero(n + 1, p + 1);
  Eigen::MatrixXd ndu(p + 1, p + 1);
  std::vector<double> left(p + 1), right(p + 1);
  ndu(0, 0) = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = x - U[span + 1 - j];
    right[j] = U[span + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu(j, r) = right[r + 1] + left[j - r];
      const double temp = ndu(r, j - 1) / ndu(j, r);
      ndu(r, j) = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu(j, j) = saved;
  }
  for (int j = 0; j <= p; ++j) ders(0, j) = ndu(j, p);
  const int nmax = std::min(n, p);
  Eigen::MatrixXd a(2, p + 1);
  for (int r = 0; r <= p; ++r) {
    int s1 = 0, s2 = 1;
    a.setZero();
    a(0, 0) = 1.0;
    for (int k = 1; k <= nmax; ++k) {
      double d = 0.0;
      const int rk = r - k;
      const int pk = p - k;
      if (r >= k) {
        a(s2, 0) = a(s1, 0) / ndu(pk + 1, rk);
        d = a(s2, 0) * ndu(rk, pk);
      }
      const int j1 = rk >= -1 ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
      for (int j = j1; j <= j2; ++j) {
        a(s2, j) = (a(s1, j) - a(s1, j - 1)) / ndu(pk + 1, rk + j);
        d += a(s2, j) * ndu(rk + j, pk);
      }
      if (r <= pk) {
        a(s2, k) = -a(s1, k - 1) / ndu(pk + 1, r);
        d += a(s2, k) * ndu(r, pk);
      }
      ders(k, r) = d;
      std::swap(s1, s2);
    }
  }
  double factor = p;
  for (int k = 1; k <= nmax; ++k) {
    ders.row(k) *= factor;
    factor *= (p - k);
  }
  return ders;
}

// Gauss-Legendre nodes/weights on [-1, 1] via the Golub-Welsch eigenproblem.
void gauss_legendre(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    const double b = i / std::sqrt(4.0 * i * i - 1.0);
    J(i, i - 1) = b;
    J(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  nodes = es.eigenvalues();
  weights = 2.0 * es.eigenvectors().row(0).transpose().array().square();
}

}  // namespace

KnotVector::KnotVector(Interval domain, int num_basis, int degree)
    : domain_(domain), num_basis_(num_basis), degree_(degree) {
  if (degree < 0) throw ParameterError("spline degree must be non-negative");
  if (num_basis < degree + 1) {
    std::ostringstream os;
    os << "number of basis functions K=" << num_basis << " must be at least degree+1=" << degree + 1;
    throw ParameterError(os.str());
  }
  if (!(domain.lo < domain.hi) || !std::isfinite(domain.lo) || !std::isfinite(domain.hi)) {
    std::ostringstream os;
    os << "degenerate spline domain [" << domain.lo << ", " << domain.hi << "]";
    throw ParameterError(os.str());
  }
  const int n_interior = num_basis - degree - 1;
  knots_.reserve(num_basis + degree + 1);
  for (int i = 0; i <= degree; ++i) knots_.push_back(domain.lo);
  for (int i = 1; i <= n_interior; ++i)
    knots_.push_back(domain.lo + domain.length() * i / (n_interior + 1));
  for (int i = 0; i <= degree; ++i) knots_.push_back(domain.hi);
}

std::vector<double> KnotVector::interior_knots() const {
  return {knots_.begin() + degree_ + 1, knots_.end() - degree_ - 1};
}

int KnotVector::find_span(double x) const {
  if (x >= knots_[num_basis_]) return num_basis_ - 1;
  if (x <= knots_[degree_]) return degree_;
  const auto it = std::upper_bound(knots_.begin() + degree_, knots_.begin() + num_basis_ + 1, x);
  return static_cast<int>(it - knots_.begin()) - 1;
}

KnotVector make_knots(Interval domain, int num_basis, int degree) {
  return KnotVector(domain, num_basis, degree);
}

Eigen::MatrixXd eval_basis(const KnotVector& knots, std::span<const double> points,
                           OutOfDomain policy, int* clamped) {
  const int p = knots.degree();
  const auto dom = knots.domain();
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(points.size()), knots.num_basis());
  int n_clamped = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    double x = points[i];
    if (!(x >= dom.lo && x <= dom.hi)) {
      if (policy == OutOfDomain::Error || std::isnan(x)) {
        std::ostringstream os;
        os << "point " << x << " (index " << i << ") outside basis domain [" << dom.lo << ", "
           << dom.hi << "]";
        throw DomainError(os.str());
      }
      x = std::clamp(x, dom.lo, dom.hi);
      ++n_clamped;
    }
    const int span = knots.find_span(x);
    const Eigen::MatrixXd d = basis_derivatives(knots.knots(), p, span, x, 0);
    for (int j = 0; j <= p; ++j) B(static_cast<Eigen::Index>(i), span - p + j) = d(0, j);
  }
  if (clamped) *clamped = n_clamped;
  return B;
}

Eigen::MatrixXd eval_basis_derivative(const KnotVector& knots, std::span<const double> points,
                                      int derivative) {
  if (derivative < 0) throw ParameterError("derivative order must be non-negative");
  const int p = knots.degree();
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(points.size()), knots.num_basis());
  if (derivative > p) return B;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double x = std::clamp(points[i], knots.domain().lo, knots.domain().hi);
    const int span = knots.find_span(x);
    const Eigen::MatrixXd d = basis_derivatives(knots.knots(), p, span, x, derivative);
    for (int j = 0; j <= p; ++j) B(static_cast<Eigen::Index>(i), span - p + j) = d(derivative, j);
  }
  return B;
}

Eigen::MatrixXd derivative_penalty(const KnotVector& knots, int order) {
  const int p = knots.degree();
  if (order < 0 || order >= p + 1) {
    std::ostringstream os;
    os << "penalty order " << order << " must lie in [0, degree] for degree " << p;
    throw ParameterError(os.str());
  }
  // The integrand is a piecewise polynomial of degree 2(p - order); n nodes are
  // exact up to degree 2n - 1.
  const int n_nodes = std::max(3, p - order + 1);
  Eigen::VectorXd gx, gw;
  gauss_legendre(n_nodes, gx, gw);

  const int K = knots.num_basis();
  const auto& U = knots.knots();
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(K, K);
  for (int span = p; span < K; ++span) {
    const double a = U[span], b = U[span + 1];
    if (b <= a) continue;
    const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    for (int g = 0; g < n_nodes; ++g) {
      const double x = mid + half * gx[g];
      const Eigen::MatrixXd d = basis_derivatives(U, p, span, x, order);
      const Eigen::VectorXd v = d.row(order).transpose();
      P.block(span - p, span - p, p + 1, p + 1).noalias() += (half * gw[g]) * v * v.transpose();
    }
  }
  return 0.5 * (P + P.transpose());
}

Eigen::MatrixXd PenaltySplit::range_scaled() const {
  return range_vectors * positive_eigenvalues.cwiseSqrt().cwiseInverse().asDiagonal();
}

PenaltySplit split_penalty(const Eigen::MatrixXd& penalty, int expected_nullity) {
  if (penalty.rows() != penalty.cols()) throw ShapeError("penalty matrix must be square");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(penalty);
  if (es.info() != Eigen::Success) throw NumericalError("penalty eigendecomposition failed");
  const Eigen::VectorXd& ev = es.eigenvalues();  // ascending
  const double tol = 1e-10 * std::max(std::abs(ev.maxCoeff()), std::abs(ev.minCoeff()));
  int nullity = 0;
  while (nullity < ev.size() && ev[nullity] < tol) ++nullity;
  if (ev.minCoeff() < -1e-8 * std::abs(ev.maxCoeff())) {
    std::ostringstream os;
    os << "penalty is not positive semi-definite (min eigenvalue " << ev.minCoeff() << ")";
    throw NumericalError(os.str());
  }
  if (expected_nullity >= 0 && nullity != expected_nullity) {
    std::ostringstream os;
    os << "penalty null space has dimension " << nullity << ", expected " << expected_nullity
       << " (eigenvalues:";
    for (int i = 0; i < std::min<int>(ev.size(), expected_nullity + 2); ++i) os << ' ' << ev[i];
    os << ")";
    throw NumericalError(os.str());
  }
  const auto K = penalty.rows();
  PenaltySplit split;
  split.null_vectors = es.eigenvectors().leftCols(nullity);
  // Range space ordered by decreasing eigenvalue.
  split.range_vectors = es.eigenvectors().rightCols(K - nullity).rowwise().reverse();
  split.positive_eigenvalues = ev.tail(K - nullity).reverse();
  return split;
}

MarginalBasis make_marginal_basis(const KnotVector& knots, std::span<const double> points,
                                  int penalty_order, OutOfDomain policy) {
  return MarginalBasis{.knots = knots,
                       .penalty_order = penalty_order,
                       .basis = eval_basis(knots, points, policy),
                       .penalty = derivative_penalty(knots, penalty_order),
                       .null_vectors = {},
                       .range_vectors = {},
                       .positive_eigenvalues = {},
                       .fixed_part = {},
                       .random_part = {}};
}

MarginalBasis marginal_mixed_transform(MarginalBasis basis) {
  const PenaltySplit split = split_penalty(basis.penalty, basis.penalty_order);
  basis.null_vectors = split.null_vectors;
  basis.range_vectors = split.range_vectors;
  basis.positive_eigenvalues = split.positive_eigenvalues;
  basis.fixed_part = basis.basis * split.null_vectors;
  basis.random_part = basis.basis * split.range_scaled();
  return basis;
}

MarginalSmooth::MarginalSmooth(KnotVector knots, int penalty_order)
    : knots_(std::move(knots)),
      order_(penalty_order),
      penalty_(derivative_penalty(knots_, penalty_order)),
      gram_(derivative_penalty(knots_, 0)),
      split_(split_penalty(penalty_, penalty_order)),
      range_scaled_(split_.range_scaled()) {}

Eigen::MatrixXd MarginalSmooth::basis(std::span<const double> points, OutOfDomain policy,
                                      int* clamped) const {
  return eval_basis(knots_, points, policy, clamped);
}

Eigen::MatrixXd MarginalSmooth::random_part(std::span<const double> points, OutOfDomain policy,
                                            int* clamped) const {
  return eval_basis(knots_, points, policy, clamped) * range_scaled_;
}

}  // namespace fgam
