#include "fgam/design.hpp"
#include "fgam/errors.hpp"
#include "fgam/model.hpp"
#include "fgam/sim.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace fgam;

namespace {

Eigen::VectorXd as_vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST(BoxProduct, DefinitionExample) {
  Eigen::MatrixXd A1(1, 2), A2(1, 2);
  A1 << 1, 2;
  A2 << 3, 4;
  const Eigen::MatrixXd R = box_product(A1, A2);
  ASSERT_EQ(R.cols(), 4);
  EXPECT_EQ(R(0, 0), 3);
  EXPECT_EQ(R(0, 1), 4);
  EXPECT_EQ(R(0, 2), 6);
  EXPECT_EQ(R(0, 3), 8);
}

TEST(BoxProduct, UnitFactorIsIdentity) {
  const Eigen::MatrixXd A2 = testutil::random_matrix(6, 3, 1);
  EXPECT_EQ(box_product(Eigen::MatrixXd::Ones(6, 1), A2), A2);
}

TEST(BoxProduct, MatchesLoopOracle) {
  const Eigen::MatrixXd A1 = testutil::random_matrix(5, 3, 2), A2 = testutil::random_matrix(5, 4, 3);
  const Eigen::MatrixXd R = box_product(A1, A2);
  for (int i = 0; i < 5; ++i)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 4; ++b) EXPECT_EQ(R(i, a * 4 + b), A1(i, a) * A2(i, b));
}

TEST(BoxProduct, RowMismatchIsShapeError) {
  EXPECT_THROW(box_product(Eigen::MatrixXd::Ones(3, 2), Eigen::MatrixXd::Ones(4, 2)), ShapeError);
}

TEST(Quadrature, MidpointMatchesUnitIntervalFormula) {
  const QuadratureOperator q(2, as_vec({0.0, 0.5, 1.0}), QuadratureRule::Midpoint);
  const Eigen::MatrixXd L = q.matrix();
  ASSERT_EQ(L.rows(), 2);
  ASSERT_EQ(L.cols(), 6);
  for (int i = 0; i < 2; ++i)
    for (int c = 0; c < 6; ++c) EXPECT_NEAR(L(i, c), c / 3 == i ? 1.0 / 3.0 : 0.0, 1e-15);
}

TEST(Quadrature, ConstantsAndLinearFunctions) {
  const Eigen::VectorXd g = Eigen::VectorXd::LinSpaced(30, 0.0, 1.0);
  for (auto rule : {QuadratureRule::Trapezoid, QuadratureRule::Midpoint}) {
    const QuadratureOperator q(4, g, rule);
    const Eigen::VectorXd ones = q.apply(Eigen::MatrixXd::Ones(4 * 30, 1));
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(ones[i], 1.0, 1e-12);
  }
  const QuadratureOperator q(1, g, QuadratureRule::Trapezoid);
  EXPECT_NEAR(q.weights().dot(g), 0.5, 1e-15);
  const QuadratureOperator q2(3, Eigen::VectorXd::LinSpaced(11, 2.0, 7.0), QuadratureRule::Trapezoid);
  const Eigen::VectorXd len = q2.apply(Eigen::MatrixXd::Ones(33, 1));
  EXPECT_NEAR(len[2], 5.0, 1e-12);
}

TEST(Quadrature, NonMonotoneGridRejected) {
  EXPECT_THROW(QuadratureOperator(2, as_vec({0.0, 0.6, 0.5}), QuadratureRule::Trapezoid), ParameterError);
}

class TensorFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    data = gen_predictors(50, 20, 17);
    data.y = gen_response_convex(data.x, data.t, 0.3, 18);
  }
  FunctionalDataset data;
};

TEST_F(TensorFixture, DimensionsAndFourZeroEigenvalues) {
  const QuadratureOperator q(data.n(), data.t, QuadratureRule::Trapezoid);
  const TensorDesign d = build_tensor_design(data, 10, 10, q);
  EXPECT_EQ(d.model_matrix.cols(), 100);
  const Eigen::MatrixXd S = d.penalty(1.0, 1.0);
  EXPECT_LE((S - S.transpose()).norm(), 1e-10 * S.norm());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  const double tol = 1e-10 * es.eigenvalues().maxCoeff();
  EXPECT_EQ((es.eigenvalues().array() <= tol).count(), 4);
  EXPECT_GE(es.eigenvalues().minCoeff(), -tol);
}

TEST_F(TensorFixture, ConstantCoefficientsIntegrateToDomainLength) {
  const QuadratureOperator q(data.n(), data.t, QuadratureRule::Trapezoid);
  const TensorDesign d = build_tensor_design(data, 6, 7, q);
  const Eigen::VectorXd eta = d.model_matrix * Eigen::VectorXd::Constant(42, 2.5);
  EXPECT_LE((eta.array() - 2.5).abs().maxCoeff(), 1e-12);
}

TEST_F(TensorFixture, CapacityGuard) {
  const QuadratureOperator q(data.n(), data.t, QuadratureRule::Trapezoid);
  EXPECT_THROW(build_tensor_design(data, 5000, 5000, q), CapacityError);
}

TEST_F(TensorFixture, SplitRidgeEqualsPenalizedFitAndDirectOracle) {
  const QuadratureOperator q(data.n(), data.t, QuadratureRule::Trapezoid);
  const TensorDesign d = build_tensor_design(data, 6, 6, q);
  for (auto [lx, lt] : {std::pair{1.0, 1.0}, std::pair{0.01, 30.0}, std::pair{100.0, 0.1}}) {
    const PenalizedFit pf = fit_penalized(d, data.y, lx, lt);
    const NullspaceSplit sp = split_penalty_nullspace(d, lx, lt);
    EXPECT_EQ(sp.fixed.cols(), 4);
    EXPECT_EQ(sp.random.cols(), 32);
    EXPECT_LE(testutil::rel_diff(split_ridge_fitted(sp, data.y), pf.fitted), 1e-8);
    // Augmented least squares with the penalty square root, minimum-norm solution.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(d.penalty(lx, lt));
    const Eigen::MatrixXd root =
        es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
    Eigen::MatrixXd A(d.model_matrix.rows() + 36, 36);
    A << d.model_matrix, root;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(A.rows());
    b.head(data.n()) = data.y;
    const Eigen::VectorXd theta = A.completeOrthogonalDecomposition().solve(b);
    EXPECT_LE(testutil::rel_diff(d.model_matrix * theta, pf.fitted), 1e-8);
  }
}

TEST_F(TensorFixture, SplitRejectsNonPositiveLambda) {
  const QuadratureOperator q(data.n(), data.t, QuadratureRule::Trapezoid);
  const TensorDesign d = build_tensor_design(data, 6, 6, q);
  EXPECT_THROW(split_penalty_nullspace(d, 0.0, 1.0), ParameterError);
  EXPECT_THROW(split_penalty_nullspace(d, 1.0, -2.0), ParameterError);
}

TEST_F(TensorFixture, LargeXPenaltyGivesSurfaceLinearInX) {
  const QuadratureOperator q(data.n(), data.t, QuadratureRule::Trapezoid);
  const TensorDesign d = build_tensor_design(data, 8, 7, q);
  const PenalizedFit pf = fit_penalized(d, data.y, 1e9, 1.0);
  // Second derivative in x of the fitted surface on a grid.
  const Interval xr = d.x_smooth.knots().domain();
  const Eigen::VectorXd xs = Eigen::VectorXd::LinSpaced(25, xr.lo, xr.hi), ts = Eigen::VectorXd::LinSpaced(9, 0, 1);
  const Eigen::MatrixXd Bx2 = eval_basis_derivative(d.x_smooth.knots(), std::span(xs.data(), xs.size()), 2);
  const Eigen::MatrixXd Bx0 = eval_basis(d.x_smooth.knots(), std::span(xs.data(), xs.size()));
  const Eigen::MatrixXd Bt = eval_basis(d.t_smooth.knots(), std::span(ts.data(), ts.size()));
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> Theta(
      pf.theta.data(), 8, 7);
  const Eigen::MatrixXd curv = Bx2 * Theta * Bt.transpose(), surf = Bx0 * Theta * Bt.transpose();
  EXPECT_LE(curv.cwiseAbs().maxCoeff(), 1e-4 * std::max(1.0, surf.cwiseAbs().maxCoeff()));
}

TEST(PsAnova, DimensionFormulas) {
  FunctionalDataset data = gen_predictors(40, 30, 5);
  for (auto [kx, kt] : {std::pair{10, 10}, std::pair{6, 8}, std::pair{12, 5}}) {
    const PsAnovaDesign d = build_psanova_design(data, kx, kt, QuadratureRule::Trapezoid);
    EXPECT_EQ(d.X.cols(), 3);
    EXPECT_EQ(d.q1(), kt - 2);
    EXPECT_EQ(d.q2(), 2 * (kx - 2));
    EXPECT_EQ(d.q3(), (kx - 2) * (kt - 2));
  }
}

TEST(PsAnova, SpanPlusPureTBlockEqualsTensorSpan) {
  FunctionalDataset data = gen_predictors(60, 25, 6);
  const int kx = 6, kt = 6;
  const QuadratureOperator q(data.n(), data.t, QuadratureRule::Trapezoid);
  const TensorDesign td = build_tensor_design(data, kx, kt, q);
  const PsAnovaBasis basis = PsAnovaBasis::from_data(data, kx, kt, QuadratureRule::Trapezoid);
  const PsAnovaDesign d = basis.design(data.x, data.t);
  // Dropped pure-t block: integrals of t and of Z_t(t).
  const Eigen::VectorXd tt = repeat_grid(data.t, data.n());
  const Eigen::MatrixXd Zt = basis.t_smooth().random_part(std::span(tt.data(), tt.size()));
  Eigen::MatrixXd pure_t(tt.size(), 1 + Zt.cols());
  pure_t << tt, Zt;
  const Eigen::MatrixXd Lpure = q.apply(pure_t);
  Eigen::MatrixXd all(data.n(), 3 + d.q1() + d.q2() + d.q3() + Lpure.cols());
  all << d.X, d.Z1, d.Z2, d.Z3, Lpure;
  EXPECT_LE(testutil::projection_residual(td.model_matrix, all), 1e-8);
  EXPECT_LE(testutil::projection_residual(all, td.model_matrix), 1e-8);
}

TEST(PsAnova, FlmDesignIsNestedInFgamDesign) {
  FunctionalDataset data = gen_predictors(50, 30, 7);
  const PsAnovaDesign full = build_psanova_design(data, 10, 10, QuadratureRule::Trapezoid);
  const PsAnovaDesign flm =
      PsAnovaBasis::flm_from_data(data, 10, QuadratureRule::Trapezoid).design(data.x, data.t);
  Eigen::MatrixXd big(data.n(), 3 + full.q1() + full.q2() + full.q3()), small(data.n(), 3 + flm.q1());
  big << full.X, full.Z1, full.Z2, full.Z3;
  small << flm.X, flm.Z1;
  EXPECT_LE(testutil::projection_residual(small, big), 1e-8);
  EXPECT_EQ(flm.q2(), 0);
}

TEST(PsAnova, ZeroCurvesZeroTheXDependentFixedAndZ1Blocks) {
  FunctionalDataset data = gen_predictors(30, 20, 8);
  const PsAnovaBasis basis = PsAnovaBasis::from_data(data, 8, 8, QuadratureRule::Trapezoid);
  const PsAnovaDesign d = basis.design(Eigen::MatrixXd::Zero(5, 20), data.t);
  EXPECT_EQ(d.Z1.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(d.X.rightCols(2).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_NEAR(d.X.col(0).minCoeff(), 1.0, 1e-12);
}

TEST(PsAnova, ConstantCurvesAreDegenerate) {
  FunctionalDataset data = gen_predictors(20, 10, 9);
  data.x.setConstant(1.5);
  EXPECT_THROW(build_psanova_design(data, 8, 8, QuadratureRule::Trapezoid), DegenerateDesignError);
}

TEST(Dataset, ValidationNamesTheProblem) {
  FunctionalDataset data = gen_predictors(20, 10, 9);
  data.y = Eigen::VectorXd::Zero(19);
  EXPECT_THROW(data.validate(true), ShapeError);
  data.y = Eigen::VectorXd::Zero(20);
  data.t[3] = data.t[2];
  EXPECT_THROW(data.validate(true), DataError);
}
