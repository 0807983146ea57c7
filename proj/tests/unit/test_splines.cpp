#include "fgam/splines.hpp"
#include "fgam/errors.hpp"
#include "test_util.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include <random>
#include <vector>

using namespace fgam;

namespace {

std::vector<double> uniform_points(int n, double lo, double hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> p(n);
  for (auto& v : p) v = u(rng);
  return p;
}

// Textbook recursion; the right end of the domain belongs to the last interval.
double cox_de_boor(const std::vector<double>& t, int i, int p, double x) {
  if (p == 0) {
    const double hi = t.back();
    if (x == hi) return (t[i] < hi && t[i + 1] == hi) ? 1.0 : 0.0;
    return (t[i] <= x && x < t[i + 1]) ? 1.0 : 0.0;
  }
  double v = 0.0;
  if (t[i + p] > t[i]) v += (x - t[i]) / (t[i + p] - t[i]) * cox_de_boor(t, i, p - 1, x);
  if (t[i + p + 1] > t[i + 1]) v += (t[i + p + 1] - x) / (t[i + p + 1] - t[i + 1]) * cox_de_boor(t, i + 1, p - 1, x);
  return v;
}

}  // namespace

TEST(Knots, MinimalCubicHasNoInteriorKnots) {
  const KnotVector k = make_knots({0.0, 1.0}, 4);
  EXPECT_TRUE(k.interior_knots().empty());
  EXPECT_EQ(k.num_basis(), 4);
}

TEST(Knots, FiveCubicsHaveOneInteriorKnot) {
  const KnotVector k = make_knots({0.0, 1.0}, 5);
  ASSERT_EQ(k.interior_knots().size(), 1u);
  EXPECT_DOUBLE_EQ(k.interior_knots()[0], 0.5);
  EXPECT_EQ(k.knots().size(), 9u);
}

TEST(Knots, TenBasisFunctionsGiveSixInteriorKnots) {
  const auto in = make_knots({0.0, 1.0}, 10).interior_knots();
  ASSERT_EQ(in.size(), 6u);
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(in[i], (i + 1) / 7.0, 1e-15);
}

TEST(Knots, RejectsTooFewBasisFunctionsAndDegenerateDomain) {
  EXPECT_THROW(make_knots({0.0, 1.0}, 3), ParameterError);
  EXPECT_THROW(make_knots({1.0, 1.0}, 6), ParameterError);
}

TEST(Basis, BernsteinCubicAtMidpoint) {
  const double x = 0.5;
  const Eigen::MatrixXd B = eval_basis(make_knots({0.0, 1.0}, 4), std::span(&x, 1));
  const double expect[] = {0.125, 0.375, 0.375, 0.125};
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(B(0, k), expect[k], 1e-15);
}

TEST(Basis, MatchesBernsteinPolynomialsEverywhere) {
  const auto p = uniform_points(200, 0.0, 1.0, 3);
  const Eigen::MatrixXd B = eval_basis(make_knots({0.0, 1.0}, 4), p);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double x = p[i], y = 1 - x;
    const double ref[] = {y * y * y, 3 * x * y * y, 3 * x * x * y, x * x * x};
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(B(i, k), ref[k], 1e-14);
  }
}

TEST(Basis, MatchesCoxDeBoorRecursion) {
  for (int K : {5, 9}) {
    const KnotVector k = make_knots({-1.0, 2.0}, K);
    const auto p = uniform_points(200, -1.0, 2.0, 3 + K);
    const Eigen::MatrixXd B = eval_basis(k, p);
    for (std::size_t i = 0; i < p.size(); ++i)
      for (int j = 0; j < K; ++j) EXPECT_NEAR(B(i, j), cox_de_boor(k.knots(), j, 3, p[i]), 1e-13);
  }
}

TEST(Basis, SymmetricAtMidpointWithOneInteriorKnot) {
  const double x = 0.5;
  const Eigen::MatrixXd B = eval_basis(make_knots({0.0, 1.0}, 5), std::span(&x, 1));
  // Knots 0,0,0,0,1/2,1,1,1,1: the middle three cubics are nonzero at 1/2.
  EXPECT_NEAR(B(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(B(0, 1), 0.25, 1e-15);
  EXPECT_NEAR(B(0, 2), 0.5, 1e-15);
  EXPECT_NEAR(B(0, 3), 0.25, 1e-15);
  EXPECT_NEAR(B(0, 4), 0.0, 1e-15);
}

TEST(Basis, LeftEndpointRowIsUnitVector) {
  const double a = -2.0;
  const Eigen::MatrixXd B = eval_basis(make_knots({-2.0, 3.0}, 8), std::span(&a, 1));
  EXPECT_DOUBLE_EQ(B(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(B.row(0).tail(7).cwiseAbs().sum(), 0.0);
}

TEST(Basis, PartitionOfUnityBandednessAndRange) {
  const KnotVector k = make_knots({-3.0, 5.0}, 12);
  const auto p = uniform_points(1000, -3.0, 5.0, 11);
  const Eigen::MatrixXd B = eval_basis(k, p);
  for (Eigen::Index i = 0; i < B.rows(); ++i) {
    EXPECT_LE(std::abs(B.row(i).sum() - 1.0), 1e-12);
    EXPECT_LE((B.row(i).array() != 0.0).count(), 4);
    EXPECT_GE(B.row(i).minCoeff(), 0.0);
    EXPECT_LE(B.row(i).maxCoeff(), 1.0);
  }
}

TEST(Basis, OutOfDomainErrorsOrClamps) {
  const KnotVector k = make_knots({0.0, 1.0}, 6);
  const double x[] = {-0.1, 0.5, 1.2};
  EXPECT_THROW(eval_basis(k, x), DomainError);
  int clamped = 0;
  const Eigen::MatrixXd B = eval_basis(k, x, OutOfDomain::Clamp, &clamped);
  EXPECT_EQ(clamped, 2);
  EXPECT_DOUBLE_EQ(B(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(B(2, 5), 1.0);
}

TEST(Basis, DerivativeMatchesCentralDifference) {
  const KnotVector k = make_knots({0.0, 2.0}, 9);
  const auto p = uniform_points(50, 0.01, 1.99, 5);
  const Eigen::MatrixXd D = eval_basis_derivative(k, p, 1);
  const double h = 1e-6;
  std::vector<double> lo(p), hi(p);
  for (std::size_t i = 0; i < p.size(); ++i) lo[i] -= h, hi[i] += h;
  const Eigen::MatrixXd fd = (eval_basis(k, hi) - eval_basis(k, lo)) / (2 * h);
  EXPECT_LT((D - fd).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Penalty, RankIsKMinusOrder) {
  for (int K : {5, 8, 10, 14}) {
    for (int order : {1, 2, 3}) {
      const Eigen::MatrixXd P = derivative_penalty(make_knots({0.0, 1.0}, K), order);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P);
      const double tol = 1e-10 * es.eigenvalues().maxCoeff();
      EXPECT_EQ((es.eigenvalues().array() > tol).count(), K - order) << "K=" << K << " order=" << order;
      EXPECT_GE(es.eigenvalues().minCoeff(), -tol);
      EXPECT_LE((P - P.transpose()).norm(), 1e-10 * P.norm());
    }
  }
}

TEST(Penalty, AnnihilatesPolynomialsBelowOrder) {
  // Coefficients reproducing 1 and x: c_k = 1 and c_k = Greville abscissa.
  const KnotVector k = make_knots({-1.0, 4.0}, 10);
  const auto& t = k.knots();
  Eigen::VectorXd one = Eigen::VectorXd::Ones(10), lin(10);
  for (int i = 0; i < 10; ++i) lin[i] = (t[i + 1] + t[i + 2] + t[i + 3]) / 3.0;
  const Eigen::MatrixXd P = derivative_penalty(k, 2);
  EXPECT_LE(std::abs(one.dot(P * one)), 1e-10);
  EXPECT_LE(std::abs(lin.dot(P * lin)), 1e-10);
  EXPECT_LE((P * lin).norm(), 1e-9);
}

TEST(Penalty, EntriesMatchAdaptiveQuadrature) {
  const KnotVector k = make_knots({0.0, 3.0}, 8);
  const Eigen::MatrixXd P = derivative_penalty(k, 2);
  const auto& knots = k.knots();
  for (int m = 0; m < 8; ++m) {
    for (int n = m; n < 8; ++n) {
      double total = 0.0;
      for (std::size_t s = 0; s + 1 < knots.size(); ++s) {
        if (knots[s + 1] <= knots[s]) continue;
        auto f = [&](double x) {
          const Eigen::MatrixXd d = eval_basis_derivative(k, std::span(&x, 1), 2);
          return d(0, m) * d(0, n);
        };
        total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, knots[s], knots[s + 1], 8, 1e-14);
      }
      EXPECT_NEAR(P(m, n), total, 1e-9 * std::max(1.0, std::abs(total))) << m << "," << n;
    }
  }
}

TEST(Penalty, OrderAboveDegreeRejected) {
  EXPECT_THROW(derivative_penalty(make_knots({0.0, 1.0}, 6), 4), ParameterError);
}

TEST(MixedTransform, DimensionsAndEigenSplit) {
  const KnotVector k = make_knots({0.0, 1.0}, 10);
  const auto p = uniform_points(300, 0.0, 1.0, 2);
  const MarginalBasis mb = marginal_mixed_transform(make_marginal_basis(k, p));
  EXPECT_EQ(mb.fixed_part.cols(), 2);
  EXPECT_EQ(mb.random_part.cols(), 8);
  EXPECT_EQ(mb.positive_eigenvalues.size(), 8);
  const Eigen::MatrixXd& P = mb.penalty;
  EXPECT_LE((mb.null_vectors.transpose() * P * mb.null_vectors).norm(), 1e-9 * P.norm());
  const Eigen::MatrixXd S = mb.range_vectors * mb.positive_eigenvalues.cwiseSqrt().cwiseInverse().asDiagonal();
  EXPECT_LE((S.transpose() * P * S - Eigen::MatrixXd::Identity(8, 8)).norm(), 1e-9);
}

TEST(MixedTransform, SpanPreservedAndPenaltyIsSquaredNorm) {
  const KnotVector k = make_knots({-2.0, 2.0}, 9);
  const auto p = uniform_points(200, -2.0, 2.0, 8);
  const MarginalBasis mb = marginal_mixed_transform(make_marginal_basis(k, p));
  Eigen::MatrixXd XZ(mb.basis.rows(), 9);
  XZ << mb.fixed_part, mb.random_part;
  EXPECT_LE(testutil::projection_residual(mb.basis, XZ), 1e-9);

  // c = U_n a + U_p D^{-1/2} b has penalty |b|^2 and fitted values [Xpart : Zpart] (a, b).
  const Eigen::VectorXd a = testutil::random_vector(2, 1), b = testutil::random_vector(7, 2);
  const Eigen::MatrixXd S = mb.range_vectors * mb.positive_eigenvalues.cwiseSqrt().cwiseInverse().asDiagonal();
  const Eigen::VectorXd c = mb.null_vectors * a + S * b;
  EXPECT_NEAR(c.dot(mb.penalty * c), b.squaredNorm(), 1e-9 * b.squaredNorm());
  EXPECT_LE((mb.basis * c - (mb.fixed_part * a + mb.random_part * b)).norm(), 1e-9 * (mb.basis * c).norm());
}

TEST(MixedTransform, UnexpectedNullityIsNumericalError) {
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(5, 5);
  P(0, 0) = 1.0;
  EXPECT_THROW(split_penalty(P, 2), NumericalError);
}

TEST(MarginalSmooth, ReproducesEvaluationAtNewPoints) {
  const MarginalSmooth ms(make_knots({0.0, 1.0}, 10), 2);
  const auto p = uniform_points(40, 0.0, 1.0, 9);
  const MarginalBasis mb = marginal_mixed_transform(make_marginal_basis(ms.knots(), p));
  EXPECT_LE((ms.basis(p) - mb.basis).norm(), 1e-12);
  // Eigenvector signs may differ; compare the spans' projectors.
  const Eigen::MatrixXd Z = ms.random_part(p);
  EXPECT_LE((Z * Z.transpose() - mb.random_part * mb.random_part.transpose()).norm(),
            1e-9 * (Z * Z.transpose()).norm());
}
