#include "fgam/model.hpp"
#include "fgam/errors.hpp"
#include "fgam/serialize.hpp"
#include "fgam/sim.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numbers>

using namespace fgam;

namespace {

FunctionalDataset convex_data(int n, double phi, std::uint64_t seed) {
  FunctionalDataset d = gen_predictors(n, 30, seed);
  d.y = gen_response_convex(d.x, d.t, phi, seed + 1);
  return d;
}

}  // namespace

TEST(Fgamm, FittedValuesMatchStoredPieces) {
  const FunctionalDataset data = convex_data(100, 0.0, 1);
  const FgamFit fit = fit_fgamm(data);
  const PsAnovaDesign d = fit.basis->design(data.x, data.t);
  const auto& c = fit.components;
  const Eigen::VectorXd again = d.X * c.beta + d.Z1 * c.blups[0] + d.Z2 * c.blups[1] + d.Z3 * c.blups[2];
  EXPECT_LE((again - fit.fitted).cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, fit.fitted.cwiseAbs().maxCoeff()));
  EXPECT_EQ(c.sigma2.size(), 3);
  EXPECT_LE((predict(fit, data.x, data.t).mean - fit.fitted).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Fgamm, DeterministicRefit) {
  const FunctionalDataset data = convex_data(60, 0.5, 2);
  const FgamFit a = fit_fgamm(data), b = fit_fgamm(data);
  EXPECT_EQ(a.fitted, b.fitted);
  EXPECT_EQ(a.components.sigma2, b.components.sigma2);
}

TEST(Fgamm, LinearTruthGivesSmallNonlinearVariances) {
  int small = 0;
  for (int r = 0; r < 20; ++r) {
    const FgamFit f = fit_fgamm(convex_data(100, 1.0, 100 + r));
    if (f.components.sigma2[1] + f.components.sigma2[2] <= 0.05) ++small;
  }
  EXPECT_GE(small, 14);
}

TEST(Fgamm, TooFewCurvesRejected) {
  EXPECT_THROW(fit_fgamm(convex_data(10, 1.0, 3)), ParameterError);
  EXPECT_THROW(fit_flm(convex_data(9, 1.0, 3)), ParameterError);
}

TEST(Flm, EqualsFgammWithNonlinearVariancesFixedAtZero) {
  const FunctionalDataset data = convex_data(80, 0.6, 4);
  const FgamFit flm = fit_flm(data);
  const PsAnovaDesign d = build_psanova_design(data, 10, 10, QuadratureRule::Trapezoid);
  MixedModelProblem p(d.X, {d.Z1, d.Z2, d.Z3});
  p.set_response(data.y);
  const Eigen::Vector3d ratios(flm.components.ratios[0], 0.0, 0.0);
  const VarianceComponentFit nested = p.evaluate(ratios, Criterion::REML);
  EXPECT_LE(testutil::rel_diff(nested.fitted, flm.fitted), 1e-8);
  EXPECT_LE(testutil::rel_diff(nested.beta, flm.components.beta), 1e-8);
  if (flm.components.blups[0].norm() > 0)
    EXPECT_LE(testutil::rel_diff(nested.blups[0], flm.components.blups[0]), 1e-8);
}

TEST(Flm, ConstantCoefficientGivesZeroSmoothVariance) {
  int zero = 0;
  for (int r = 0; r < 100; ++r) {
    FunctionalDataset d = gen_predictors(100, 30, 200 + r);
    const QuadratureOperator q(d.n(), d.t, QuadratureRule::Trapezoid);
    d.y = 1.5 * q.apply(flatten_curves(d.x)) + testutil::random_vector(100, 300 + r);
    if (fit_flm(d).components.sigma2[0] < 1e-3) ++zero;
  }
  EXPECT_GT(zero, 50);
}

TEST(Flm, RecoversSineCoefficientFunction) {
  const int reps = 30;
  const Eigen::VectorXd tg = Eigen::VectorXd::LinSpaced(30, 0.0, 1.0);
  Eigen::MatrixXd est(reps, 30);
  for (int r = 0; r < reps; ++r) {
    const FgamFit f = fit_flm(convex_data(500, 1.0, 400 + 2 * r));
    Eigen::VectorXd xg(2);
    xg << 0.0, 1.0;
    const SurfaceDecomposition s = evaluate_surface(f, xg, tg);
    est.row(r) = s.total.row(1) - s.total.row(0);
  }
  const Eigen::RowVectorXd mean = est.colwise().mean();
  for (int k = 0; k < 30; ++k) {
    const double sd = std::sqrt((est.col(k).array() - mean[k]).square().sum() / (reps - 1));
    const double truth = 2.0 * std::sin(std::numbers::pi * tg[k]);
    EXPECT_LE(std::abs(mean[k] - truth), 3.0 * sd / std::sqrt(reps) + 0.02) << "t=" << tg[k];
  }
}

TEST(Surface, ComponentsSumToTotal) {
  const FunctionalDataset data = convex_data(100, 0.2, 5);
  for (const FgamFit& f : {fit_fgamm(data), fit_flm(data), fit_fgam_gcv(data)}) {
    const SurfaceDecomposition s = evaluate_surface(f, 21, 17);
    EXPECT_EQ(s.total.rows(), 21);
    EXPECT_EQ(s.total.cols(), 17);
    const Eigen::MatrixXd sum = s.parametric + s.x_linear + s.x_smooth + s.nonparametric;
    EXPECT_LE((sum - s.total).cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, s.total.cwiseAbs().maxCoeff()));
  }
}

TEST(Surface, FlmHasNoNonlinearComponents) {
  const SurfaceDecomposition s = evaluate_surface(fit_flm(convex_data(60, 0.5, 6)));
  EXPECT_EQ(s.x_smooth.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(s.nonparametric.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Surface, NoiselessLinearSurfaceRecovered) {
  FunctionalDataset d = gen_predictors(500, 30, 7);
  d.y = convex_signal(d.x, d.t, 1.0);
  const FgamFit f = fit_fgamm(d);
  // Pure-t functions are not identifiable; compare contrasts against x = 0.
  // Interior: central 80% of the pooled predictor values, t in [0.1, 0.9].
  std::vector<double> pooled(d.x.data(), d.x.data() + d.x.size());
  std::sort(pooled.begin(), pooled.end());
  const double lo = pooled[pooled.size() / 10], hi = pooled[pooled.size() * 9 / 10];
  const Eigen::VectorXd xg = Eigen::VectorXd::LinSpaced(21, lo, hi);
  const Eigen::VectorXd tg = Eigen::VectorXd::LinSpaced(17, 0.1, 0.9);
  Eigen::VectorXd xg0(1);
  xg0 << 0.0;
  const SurfaceDecomposition s = evaluate_surface(f, xg, tg), s0 = evaluate_surface(f, xg0, tg);
  double err = 0.0;
  for (int i = 0; i < xg.size(); ++i)
    for (int k = 0; k < tg.size(); ++k)
      err = std::max(err, std::abs(s.total(i, k) - s0.total(0, k) - surface_f1(xg[i], tg[k])));
  EXPECT_LE(err, 0.15);
}

TEST(Gcv, InteriorMinimiserOnConvexData) {
  const FgamFit f = fit_fgam_gcv(convex_data(100, 0.5, 8));
  EXPECT_FALSE(f.gcv.on_boundary);
  EXPECT_TRUE(f.warnings.empty());
  EXPECT_GT(f.edf, 3.0);
  EXPECT_LT(f.edf, 100.0);
}

TEST(Gcv, ScoreFormula) {
  const FunctionalDataset data = convex_data(60, 0.5, 9);
  const QuadratureOperator q(data.n(), data.t, QuadratureRule::Trapezoid);
  const TensorDesign d = build_tensor_design(data, 8, 8, q);
  const PenalizedFit pf = fit_penalized(d, data.y, 0.3, 2.0);
  const double N = 60.0;
  EXPECT_NEAR(gcv_score(d, data.y, 0.3, 2.0), N * pf.rss / ((N - pf.edf) * (N - pf.edf)), 1e-12);
}

TEST(Gcv, InfinitePenaltyIsNullSpaceRegressionAndMatchesPsAnova) {
  const FunctionalDataset data = convex_data(80, 0.3, 10);
  const QuadratureOperator q(data.n(), data.t, QuadratureRule::Trapezoid);
  const TensorDesign d = build_tensor_design(data, 10, 10, q);
  const PenalizedFit pf = fit_penalized(d, data.y, 1e10, 1e10);
  const Eigen::MatrixXd Xn = d.model_matrix * split_penalty(d.penalty(1, 1), 4).null_vectors;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(Xn.rows(), Xn.cols());
  cod.setThreshold(1e-8);
  cod.compute(Xn);
  ASSERT_EQ(cod.rank(), 3);  // integrating t gives a constant
  const Eigen::VectorXd ols = Xn * cod.solve(data.y);
  const double rss_ols = (data.y - ols).squaredNorm();
  EXPECT_NEAR(pf.rss, rss_ols, 1e-6 * rss_ols);
  EXPECT_NEAR(pf.edf, 3.0, 1e-4);
  // PS-ANOVA with every variance at zero fits the same three-dimensional space.
  const PsAnovaDesign ps = build_psanova_design(data, 10, 10, QuadratureRule::Trapezoid);
  MixedModelProblem p(ps.X, {ps.Z1, ps.Z2, ps.Z3});
  p.set_response(data.y);
  EXPECT_LE(testutil::rel_diff(p.evaluate(Eigen::Vector3d::Zero(), Criterion::REML).fitted, ols), 1e-6);
}

TEST(Predict, ZeroCurvesGiveInterceptAndClampingIsReported) {
  const FunctionalDataset data = convex_data(80, 0.0, 11);
  const FgamFit flm = fit_flm(data);
  const Prediction p0 = predict(flm, Eigen::MatrixXd::Zero(3, 30), data.t);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(p0.mean[i], flm.components.beta[0], 1e-10);

  const FgamFit f = fit_fgamm(data);
  Eigen::MatrixXd wild = data.x.topRows(2);
  wild(0, 3) = f.x_range.hi + 5.0;
  const Prediction p = predict(f, wild, data.t);
  EXPECT_EQ(p.clamped, 1);
  EXPECT_FALSE(p.warnings.empty());
  EXPECT_THROW(predict(f, wild, data.t.head(20)), ShapeError);
}

TEST(Predict, DifferentGridUsesItsOwnWeights) {
  const FunctionalDataset data = convex_data(100, 1.0, 12);
  const FgamFit f = fit_flm(data);
  FunctionalDataset fine = gen_predictors(5, 121, 13);
  const Eigen::VectorXd p = predict(f, fine.x, fine.t).mean;
  const Eigen::VectorXd truth = convex_signal(fine.x, fine.t, 1.0);
  EXPECT_LE((p - truth).cwiseAbs().maxCoeff(), 1.0);
}

TEST(Summary, RoundTripReproducesFittedValues) {
  const FunctionalDataset data = convex_data(70, 0.4, 14);
  for (const FgamFit& f : {fit_fgamm(data), fit_flm(data), fit_fgam_gcv(data)}) {
    const nlohmann::json j = nlohmann::json::parse(fit_to_json(f).dump());
    EXPECT_LE((fitted_from_summary(j, data) - f.fitted).cwiseAbs().maxCoeff(), 1e-10) << to_string(f.kind);
  }
  nlohmann::json bad = fit_to_json(fit_flm(data));
  bad.erase("coefficients");
  EXPECT_THROW(fitted_from_summary(bad, data), DataError);
}
