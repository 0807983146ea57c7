#include "fgam/lmm.hpp"

#include "fgam/optimize.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>
#include <numbers>
#include <sstream>

namespace fgam {

namespace {

constexpr double kLogRatioLo = -30.0;
constexpr double kLogRatioHi = 30.0;
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double logdet_llt(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace

const char* to_string(Criterion c) { return c == Criterion::REML ? "REML" : "ML"; }

void MixedModelSpec::validate() const {
  const Eigen::Index N = y.size();
  if (X.rows() != N) {
    std::ostringstream os;
    os << "fixed-effect design has " << X.rows() << " rows, response has " << N;
    throw ShapeError(os.str());
  }
  for (std::size_t j = 0; j < Z.size(); ++j) {
    if (Z[j].rows() != N) {
      std::ostringstream os;
      os << "random-effect block " << j + 1 << " has " << Z[j].rows() << " rows, response has " << N;
      throw ShapeError(os.str());
    }
  }
  if (N <= X.cols() + 1) {
    std::ostringstream os;
    os << "need N > p + 1 (N=" << N << ", p=" << X.cols() << ")";
    throw ParameterError(os.str());
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < X.cols()) {
    const Eigen::VectorXd d = qr.matrixQR().diagonal().cwiseAbs();
    std::ostringstream os;
    os << "fixed-effect design is rank deficient (rank " << qr.rank() << " of " << X.cols()
       << ", condition estimate " << d.maxCoeff() / std::max(d.minCoeff(), 1e-300) << ")";
    throw NumericalError(os.str());
  }
}

Eigen::Index MixedModelSpec::total_random() const {
  Eigen::Index q = 0;
  for (const auto& z : Z) q += z.cols();
  return q;
}

struct MixedModelProblem::State {
  Eigen::VectorXd s;  // sqrt ratio per random-effect column
  Eigen::LLT<Eigen::MatrixXd> M;
  double logdet_M = 0.0;
  Eigen::MatrixXd C, MinvC;   // S Z'X and M^-1 S Z'X
  Eigen::VectorXd c, Minvc;   // S Z'y and M^-1 S Z'y
  Eigen::MatrixXd XVX;
  Eigen::LLT<Eigen::MatrixXd> XVX_llt;
  double logdet_XVX = 0.0;
  Eigen::VectorXd beta;
  double Q = 0.0;      // y' P y, floored
  double Q_raw = 0.0;  // y' P y as computed
  bool floored = false;
};

MixedModelProblem::MixedModelProblem(Eigen::MatrixXd X, std::vector<Eigen::MatrixXd> Z) : X_(std::move(X)) {
  offsets_.push_back(0);
  Eigen::Index q = 0;
  for (const auto& z : Z) {
    if (z.rows() != X_.rows()) throw ShapeError("random-effect block row count differs from X");
    q += z.cols();
    offsets_.push_back(q);
  }
  Z_.resize(X_.rows(), q);
  for (std::size_t j = 0; j < Z.size(); ++j) Z_.middleCols(offsets_[j], Z[j].cols()) = Z[j];
  G_ = Z_.transpose() * Z_;
  ZX_ = Z_.transpose() * X_;
  XX_ = X_.transpose() * X_;
  Eigen::LLT<Eigen::MatrixXd> llt(XX_);
  if (llt.info() != Eigen::Success) throw NumericalError("X'X is not positive definite");
  logdet_XX_ = logdet_llt(llt);
}

void MixedModelProblem::set_response(const Eigen::VectorXd& y) {
  if (y.size() != X_.rows()) throw ShapeError("response length differs from design rows");
  Zy_ = Z_.transpose() * y;
  Xy_ = X_.transpose() * y;
  yy_ = y.squaredNorm();
  const double mean = y.mean();
  const double var = (y.array() - mean).square().sum() / std::max<Eigen::Index>(1, y.size() - 1);
  var_floor_ = 1e-12 * std::max(var, 1e-300) * static_cast<double>(n() - p());
  has_response_ = true;
}

MixedModelProblem::State MixedModelProblem::solve(const Eigen::VectorXd& ratios) const {
  if (!has_response_) throw ParameterError("mixed model problem has no response attached");
  if (ratios.size() != blocks()) throw ShapeError("one variance ratio per random-effect block expected");
  State st;
  st.s.resize(q());
  for (int j = 0; j < blocks(); ++j) {
    if (!(ratios[j] >= 0.0)) throw ParameterError("variance ratios must be non-negative");
    st.s.segment(offsets_[j], block_size(j)).setConstant(std::sqrt(ratios[j]));
  }
  if (q() > 0) {
    Eigen::MatrixXd M = st.s.asDiagonal() * G_ * st.s.asDiagonal();
    M.diagonal().array() += 1.0;
    st.M.compute(M);
    if (st.M.info() != Eigen::Success) throw NumericalError("Henderson system is not positive definite");
    st.logdet_M = logdet_llt(st.M);
    st.C = st.s.asDiagonal() * ZX_;
    st.c = st.s.cwiseProduct(Zy_);
    st.MinvC = st.M.solve(st.C);
    st.Minvc = st.M.solve(st.c);
    st.XVX = XX_ - st.C.transpose() * st.MinvC;
  } else {
    st.XVX = XX_;
  }
  st.XVX_llt.compute(st.XVX);
  if (st.XVX_llt.info() != Eigen::Success) {
    std::ostringstream os;
    os << "X' V^-1 X is singular (condition estimate "
       << st.XVX.norm() * st.XVX.inverse().norm() << ")";
    throw NumericalError(os.str());
  }
  st.logdet_XVX = logdet_llt(st.XVX_llt);
  Eigen::VectorXd XVy = Xy_;
  double yVy = yy_;
  if (q() > 0) {
    XVy -= st.C.transpose() * st.Minvc;
    yVy -= st.c.dot(st.Minvc);
  }
  st.beta = st.XVX_llt.solve(XVy);
  st.Q = yVy - XVy.dot(st.beta);
  st.Q_raw = st.Q;
  if (!(st.Q > var_floor_)) {
    st.Q = var_floor_;
    st.floored = true;
  }
  return st;
}

double MixedModelProblem::criterion_from_state(const State& st, Criterion c) const {
  const double N = static_cast<double>(n());
  if (c == Criterion::REML) {
    const double df = N - static_cast<double>(p());
    return -0.5 * (df * (kLog2Pi + std::log(st.Q / df) + 1.0) + st.logdet_M + st.logdet_XVX - logdet_XX_);
  }
  return -0.5 * (N * (kLog2Pi + std::log(st.Q / N) + 1.0) + st.logdet_M);
}

double MixedModelProblem::profiled_criterion(const Eigen::VectorXd& ratios, Criterion c) const {
  return criterion_from_state(solve(ratios), c);
}

Eigen::VectorXd MixedModelProblem::profiled_gradient(const Eigen::VectorXd& ratios, Criterion c) const {
  const State st = solve(ratios);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(blocks());
  if (q() == 0) return grad;
  const Eigen::MatrixXd SG = st.s.asDiagonal() * G_;
  const Eigen::MatrixXd MinvSG = st.M.solve(SG);
  const Eigen::MatrixXd ZVZ = G_ - SG.transpose() * MinvSG;
  const Eigen::MatrixXd ZVX = ZX_ - SG.transpose() * st.MinvC;
  const Eigen::VectorXd ZVy = Zy_ - SG.transpose() * st.Minvc;
  const Eigen::VectorXd ZPy = ZVy - ZVX * st.beta;
  Eigen::VectorXd trace_diag = ZVZ.diagonal();
  double df = static_cast<double>(n());
  if (c == Criterion::REML) {
    const Eigen::MatrixXd W = st.XVX_llt.solve(ZVX.transpose());  // p x q
    trace_diag -= (ZVX.array() * W.transpose().array()).rowwise().sum().matrix();
    df -= static_cast<double>(p());
  }
  for (int j = 0; j < blocks(); ++j) {
    const auto off = offsets_[j];
    const auto len = block_size(j);
    const double quad = ZPy.segment(off, len).squaredNorm();
    const double tr = trace_diag.segment(off, len).sum();
    grad[j] = ratios[j] * 0.5 * (df * quad / st.Q - tr);
  }
  return grad;
}

double MixedModelProblem::log_likelihood(double sigma2_e, const Eigen::VectorXd& sigma2, Criterion c) const {
  if (!(sigma2_e > 0.0)) throw ParameterError("residual variance must be positive");
  const State st = solve(sigma2 / sigma2_e);
  const double N = static_cast<double>(n());
  const double Q = std::max(st.Q_raw, 0.0);
  const double dfN = c == Criterion::REML ? N - static_cast<double>(p()) : N;
  double val = -0.5 * dfN * (kLog2Pi + std::log(sigma2_e)) - 0.5 * st.logdet_M - 0.5 * Q / sigma2_e;
  if (c == Criterion::REML) val -= 0.5 * (st.logdet_XVX - logdet_XX_);
  return val;
}

VarianceComponentFit MixedModelProblem::evaluate(const Eigen::VectorXd& ratios, Criterion c) const {
  const State st = solve(ratios);
  VarianceComponentFit fit;
  fit.criterion = c;
  fit.beta = st.beta;
  const double df = c == Criterion::REML ? static_cast<double>(n() - p()) : static_cast<double>(n());
  fit.sigma2_e = st.Q / df;
  fit.degenerate_residual = st.floored;
  fit.ratios = ratios;
  fit.sigma2 = ratios * fit.sigma2_e;
  fit.log_likelihood = criterion_from_state(st, c);
  fit.fitted = X_ * st.beta;
  fit.at_boundary.assign(blocks(), false);
  if (q() > 0) {
    const Eigen::VectorXd b = st.s.cwiseProduct(st.M.solve(st.c - st.C * st.beta));
    fit.fitted += Z_ * b;
    for (int j = 0; j < blocks(); ++j) {
      fit.blups.push_back(b.segment(offsets_[j], block_size(j)));
      fit.at_boundary[j] = ratios[j] == 0.0;
    }
  }
  return fit;
}

VarianceComponentFit MixedModelProblem::fit(const FitOptions& options) const {
  const int m = blocks();
  if (m == 0) {
    VarianceComponentFit f = evaluate(Eigen::VectorXd(0), options.criterion);
    f.converged = true;
    return f;
  }
  const Criterion crit = options.criterion;
  int total_evals = 0;
  int total_iters = 0;

  // Minimise the negative criterion over log-ratios of the active blocks;
  // inactive blocks are pinned at exactly zero.
  auto run = [&](const Eigen::VectorXd& theta0, const std::vector<bool>& active) {
    std::vector<int> idx;
    for (int j = 0; j < m; ++j)
      if (active[j]) idx.push_back(j);
    auto to_ratios = [&](const Eigen::VectorXd& z) {
      Eigen::VectorXd r = Eigen::VectorXd::Zero(m);
      for (std::size_t k = 0; k < idx.size(); ++k) r[idx[k]] = std::exp(z[static_cast<Eigen::Index>(k)]);
      return r;
    };
    Eigen::VectorXd z0(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) z0[static_cast<Eigen::Index>(k)] = theta0[idx[k]];
    NelderMeadOptions nm;
    nm.max_iterations = options.max_iterations;
    nm.tolerance = options.tolerance;
    nm.initial_step = 2.0;
    nm.lower = kLogRatioLo;
    nm.upper = kLogRatioHi;
    const auto res = nelder_mead([&](const Eigen::VectorXd& z) { return -profiled_criterion(to_ratios(z), crit); },
                                 z0, nm);
    total_evals += res.evaluations;
    total_iters += res.iterations;
    Eigen::VectorXd theta = Eigen::VectorXd::Constant(m, kLogRatioLo);
    for (std::size_t k = 0; k < idx.size(); ++k) theta[idx[k]] = res.x[static_cast<Eigen::Index>(k)];
    return std::tuple{theta, -res.value, res.converged};
  };

  const std::vector<bool> all_active(m, true);
  std::vector<Eigen::VectorXd> starts;
  for (double r : options.start_ratios) starts.push_back(Eigen::VectorXd::Constant(m, std::log(r)));
  for (const auto& r : options.extra_starts) {
    if (r.size() != m) throw ShapeError("extra start must hold one ratio per block");
    Eigen::VectorXd th(m);
    for (int j = 0; j < m; ++j) th[j] = r[j] > 0 ? std::clamp(std::log(r[j]), kLogRatioLo, kLogRatioHi) : kLogRatioLo;
    starts.push_back(th);
  }

  Eigen::VectorXd best_theta;
  double best_val = -std::numeric_limits<double>::infinity();
  bool best_conv = false;
  for (const auto& s : starts) {
    auto [th, val, conv] = run(s, all_active);
    if (val > best_val) {
      best_val = val;
      best_theta = th;
      best_conv = conv;
    }
  }
  if (!best_conv) {
    auto [th, val, conv] = run(best_theta, all_active);
    if (val >= best_val) {
      best_val = val;
      best_theta = th;
    }
    best_conv = conv;
  }

  // Boundary handling: pin a component at zero whenever that is no worse.
  std::vector<bool> active(m, true);
  auto ratios_of = [&](const Eigen::VectorXd& th) {
    Eigen::VectorXd r(m);
    for (int j = 0; j < m; ++j) r[j] = active[j] ? std::exp(th[j]) : 0.0;
    return r;
  };
  for (int pass = 0; pass < m; ++pass) {
    bool changed = false;
    for (int j = 0; j < m; ++j) {
      if (!active[j]) continue;
      Eigen::VectorXd r = ratios_of(best_theta);
      if (r[j] < options.zero_threshold) {
        active[j] = false;
        changed = true;
        continue;
      }
      r[j] = 0.0;
      const double v0 = profiled_criterion(r, crit);
      if (v0 >= best_val - options.tolerance) {
        active[j] = false;
        best_val = std::max(best_val, v0);
        changed = true;
      }
    }
    if (!changed) break;
    best_val = profiled_criterion(ratios_of(best_theta), crit);
    if (std::find(active.begin(), active.end(), true) == active.end()) break;
    auto [th, val, conv] = run(best_theta, active);
    if (val >= best_val) {
      best_val = val;
      best_theta = th;
      best_conv = conv;
    }
  }

  Eigen::VectorXd ratios = ratios_of(best_theta);
  for (int j = 0; j < m; ++j)
    if (ratios[j] < options.zero_threshold) ratios[j] = 0.0;

  VarianceComponentFit fit = evaluate(ratios, crit);
  fit.iterations = total_iters;
  fit.evaluations = total_evals;
  fit.converged = best_conv;
  const Eigen::VectorXd g = profiled_gradient(ratios, crit);
  double gn = 0.0;
  for (int j = 0; j < m; ++j)
    if (ratios[j] > 0.0) gn = std::max(gn, std::abs(g[j]));
  fit.gradient_norm = gn;
  if (!best_conv) {
    std::ostringstream os;
    os << "variance-component optimisation did not converge within " << options.max_iterations
       << " iterations";
    throw MixedModelConvergenceError(os.str(), fit);
  }
  return fit;
}

namespace {

MixedModelProblem problem_for(const MixedModelSpec& spec) {
  spec.validate();
  MixedModelProblem prob(spec.X, spec.Z);
  prob.set_response(spec.y);
  return prob;
}

}  // namespace

double restricted_log_likelihood(const MixedModelSpec& spec, double sigma2_e, const Eigen::VectorXd& sigma2) {
  return problem_for(spec).log_likelihood(sigma2_e, sigma2, Criterion::REML);
}

double ml_log_likelihood(const MixedModelSpec& spec, double sigma2_e, const Eigen::VectorXd& sigma2) {
  return problem_for(spec).log_likelihood(sigma2_e, sigma2, Criterion::ML);
}

VarianceComponentFit fit_mixed_model(const MixedModelSpec& spec, const FitOptions& options) {
  return problem_for(spec).fit(options);
}

std::vector<Eigen::VectorXd> predict_random_effects(const VarianceComponentFit& fit, const MixedModelSpec& spec) {
  return problem_for(spec).evaluate(fit.ratios, fit.criterion).blups;
}

}  // namespace fgam
