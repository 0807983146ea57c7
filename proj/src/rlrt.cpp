#include "fgam/rlrt.hpp"

#include "fgam/parallel.hpp"
#include "fgam/rng.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace fgam {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);
constexpr int kGridPoints = 200;
constexpr double kGridLo = 1e-5;
constexpr double kGridHi = 1e10;
constexpr std::size_t kChunk = 256;
constexpr int kBrentBits = 26;

double clean_statistic(double s) { return s < kStatisticZero ? 0.0 : s; }

// Brent search of f over log(lambda) on the grid cell pair around index g.
template <class F>
std::pair<double, double> refine_on_grid(const std::vector<double>& grid, std::size_t g, F&& f) {
  const std::size_t lo = std::max<std::size_t>(1, g - 1);
  const std::size_t hi = std::min(grid.size() - 1, g + 1);
  const auto res = boost::math::tools::brent_find_minima(
      [&](double loglam) { return -f(std::exp(loglam)); }, std::log(grid[lo]), std::log(grid[hi]), kBrentBits);
  return {std::exp(res.first), -res.second};
}

}  // namespace

double RlrtNullSample::zero_fraction() const {
  if (values.empty()) return 0.0;
  const auto zeros = std::upper_bound(values.begin(), values.end(), 0.0) - values.begin();
  return static_cast<double>(zeros) / static_cast<double>(values.size());
}

double RlrtNullSample::quantile(double p) const {
  if (values.empty()) throw ParameterError("empty null sample");
  if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("quantile level must lie in [0, 1]");
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto i = static_cast<std::size_t>(std::floor(h));
  if (i + 1 >= values.size()) return values.back();
  return values[i] + (h - static_cast<double>(i)) * (values[i + 1] - values[i]);
}

OneComponentModel::OneComponentModel(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z)
    : n_(X.rows()), q0_(X.cols()) {
  if (Z.rows() != n_) {
    std::ostringstream os;
    os << "random-effect block has " << Z.rows() << " rows, fixed design has " << n_;
    throw ShapeError(os.str());
  }
  if (Z.cols() == 0) throw ParameterError("random-effect block has no columns");
  if (n_ <= q0_ + 1) throw ParameterError("need N > q0 + 1");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> cqr(X);
  if (cqr.rank() < q0_) throw NumericalError("fixed-effect design is rank deficient");
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(X);
  Q_ = qr.householderQ() * Eigen::MatrixXd::Identity(n_, q0_);

  const Eigen::MatrixXd Zt = Z - Q_ * (Q_.transpose() * Z);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(Zt, Eigen::ComputeThinU);
  const Eigen::VectorXd& s = svd.singularValues();
  const double tol = 1e-9 * std::max(Z.norm(), 1e-300);
  Eigen::Index r = 0;
  while (r < s.size() && s[r] > tol) ++r;
  if (r == 0)
    throw DegenerateDesignError("random-effect design lies in the span of the fixed effects; "
                                "all eigenvalues of Z'(I - P_X)Z are zero");
  r = std::min(r, n_ - q0_);
  U_ = svd.matrixU().leftCols(r);
  mu_ = s.head(r).array().square();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Z.transpose() * Z, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd ev = es.eigenvalues().reverse();
  Eigen::Index rx = 0;
  while (rx < ev.size() && ev[rx] > 1e-12 * std::max(ev[0], 1e-300)) ++rx;
  xi_ = ev.head(rx);

  grid_.reserve(kGridPoints + 1);
  grid_.push_back(0.0);
  const double scale = 1.0 / mu_[0];
  const double a = std::log(kGridLo), b = std::log(kGridHi);
  for (int g = 0; g < kGridPoints; ++g)
    grid_.push_back(scale * std::exp(a + (b - a) * g / (kGridPoints - 1)));
}

OneComponentModel::Projection OneComponentModel::project(const Eigen::VectorXd& y) const {
  if (y.size() != n_) throw ShapeError("response length differs from design rows");
  Projection pr;
  pr.w = U_.transpose() * y;
  const Eigen::VectorXd res = y - Q_ * (Q_.transpose() * y);
  pr.rest = std::max(0.0, res.squaredNorm() - pr.w.squaredNorm());
  return pr;
}

double OneComponentModel::profile(const Projection& pr, double lambda, Criterion c) const {
  if (!(lambda >= 0.0)) throw ParameterError("variance ratio must be non-negative");
  const double R = std::max((pr.w.array().square() / (1.0 + lambda * mu_.array())).sum() + pr.rest, 1e-300);
  if (c == Criterion::REML) {
    const double d = static_cast<double>(n_ - q0_);
    return -0.5 * (d * (kLog2Pi + std::log(R / d) + 1.0) + (lambda * mu_.array()).log1p().sum());
  }
  const double N = static_cast<double>(n_);
  return -0.5 * (N * (kLog2Pi + std::log(R / N) + 1.0) + (lambda * xi_.array()).log1p().sum());
}

OneComponentModel::ProfileFit OneComponentModel::maximize(const Projection& pr, Criterion c) const {
  std::size_t best = 0;
  double best_val = profile(pr, 0.0, c);
  for (std::size_t g = 1; g < grid_.size(); ++g) {
    const double v = profile(pr, grid_[g], c);
    if (v > best_val) {
      best_val = v;
      best = g;
    }
  }
  ProfileFit fit{0.0, best_val, 0.0};
  if (best > 0) {
    fit.lambda = grid_[best];
    const auto [lam, val] = refine_on_grid(grid_, best, [&](double l) { return profile(pr, l, c); });
    if (val > best_val) {
      fit.lambda = lam;
      fit.value = val;
    }
  }
  const double R = (pr.w.array().square() / (1.0 + fit.lambda * mu_.array())).sum() + pr.rest;
  fit.sigma2_e = R / static_cast<double>(c == Criterion::REML ? n_ - q0_ : n_);
  return fit;
}

double OneComponentModel::rlrt(const Eigen::VectorXd& y) const {
  const Projection pr = project(y);
  const ProfileFit fit = maximize(pr, Criterion::REML);
  return clean_statistic(2.0 * (fit.value - profile(pr, 0.0, Criterion::REML)));
}

RlrtNullSample OneComponentModel::simulate_null(int nsim, std::uint64_t seed, int threads) const {
  if (nsim < 1) throw ParameterError("nsim must be at least 1");
  const Eigen::Index r = rank();
  const Eigen::Index G = static_cast<Eigen::Index>(grid_.size());
  const double d = static_cast<double>(n_ - q0_);
  const Eigen::Index rest_df = n_ - q0_ - r;

  Eigen::MatrixXd A(G, r);
  Eigen::VectorXd logdet(G);
  for (Eigen::Index g = 0; g < G; ++g) {
    const Eigen::ArrayXd lm = grid_[g] * mu_.array();
    A.row(g) = (lm / (1.0 + lm)).matrix().transpose();
    logdet[g] = lm.log1p().sum();
  }
  // Spectral objective at one lambda for one draw (squared normals w2, total s).
  auto objective = [&](const Eigen::VectorXd& w2, double total, double lambda) {
    const Eigen::ArrayXd lm = lambda * mu_.array();
    const double num = (lm / (1.0 + lm) * w2.array()).sum();
    const double den = total - num;
    return d * std::log1p(num / den) - lm.log1p().sum();
  };

  RlrtNullSample out;
  out.nsim = nsim;
  out.lambda_grid = grid_;
  out.mu = mu_;
  out.seed = seed;
  out.values.assign(static_cast<std::size_t>(nsim), 0.0);

  const std::size_t chunks = (static_cast<std::size_t>(nsim) + kChunk - 1) / kChunk;
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t first = c * kChunk;
    const std::size_t m = std::min(kChunk, static_cast<std::size_t>(nsim) - first);
    Eigen::MatrixXd W2(r, static_cast<Eigen::Index>(m));
    Eigen::VectorXd total(static_cast<Eigen::Index>(m));
    for (std::size_t k = 0; k < m; ++k) {
      Rng rng = make_rng(derive_seed(seed, first + k));
      std::normal_distribution<double> normal;
      for (Eigen::Index i = 0; i < r; ++i) {
        const double z = normal(rng);
        W2(i, static_cast<Eigen::Index>(k)) = z * z;
      }
      double rest = 0.0;
      if (rest_df > 0) rest = std::chi_squared_distribution<double>(static_cast<double>(rest_df))(rng);
      total[static_cast<Eigen::Index>(k)] = W2.col(static_cast<Eigen::Index>(k)).sum() + rest;
    }
    const Eigen::MatrixXd num = A * W2;
    for (std::size_t k = 0; k < m; ++k) {
      const auto col = static_cast<Eigen::Index>(k);
      const double s = total[col];
      std::size_t best = 0;
      double best_val = 0.0;
      for (Eigen::Index g = 1; g < G; ++g) {
        const double v = d * std::log1p(num(g, col) / (s - num(g, col))) - logdet[g];
        if (v > best_val) {
          best_val = v;
          best = static_cast<std::size_t>(g);
        }
      }
      if (best > 0) {
        const Eigen::VectorXd w2 = W2.col(col);
        const auto [lam, val] = refine_on_grid(grid_, best, [&](double l) { return objective(w2, s, l); });
        (void)lam;
        best_val = std::max(best_val, val);
      }
      out.values[first + k] = clean_statistic(best_val);
    }
  });
  std::sort(out.values.begin(), out.values.end());
  return out;
}

double rlrt_statistic(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z) {
  return OneComponentModel(X, Z).rlrt(y);
}

RlrtNullSample simulate_rlrt_null(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z, int nsim,
                                  std::uint64_t seed, int threads) {
  return OneComponentModel(X, Z).simulate_null(nsim, seed, threads);
}

Eigen::VectorXd pseudo_response(const VarianceComponentFit& fit, const MixedModelSpec& spec, int nuisance_block) {
  if (nuisance_block < 0 || nuisance_block >= static_cast<int>(spec.Z.size()) ||
      nuisance_block >= static_cast<int>(fit.blups.size())) {
    std::ostringstream os;
    os << "nuisance block index " << nuisance_block << " out of range";
    throw ParameterError(os.str());
  }
  const auto k = static_cast<std::size_t>(nuisance_block);
  if (spec.Z[k].cols() != fit.blups[k].size()) throw ShapeError("BLUP length differs from block width");
  return spec.y - spec.Z[k] * fit.blups[k];
}

double pvalue_from_sorted(double stat, const std::vector<double>& sorted_null) {
  if (sorted_null.empty()) throw ParameterError("empty null sample");
  const double s = clean_statistic(stat);
  const auto ge = sorted_null.end() - std::lower_bound(sorted_null.begin(), sorted_null.end(), s);
  return (1.0 + static_cast<double>(ge)) / (static_cast<double>(sorted_null.size()) + 1.0);
}

double pvalue_from_null(double stat, const RlrtNullSample& null) { return pvalue_from_sorted(stat, null.values); }

double ks_distance(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ParameterError("KS distance needs two non-empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double dmax = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    dmax = std::max(dmax, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return dmax;
}

}  // namespace fgam
