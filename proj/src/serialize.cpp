#include "fgam/serialize.hpp"

#include <string>

namespace fgam {

namespace {

using nlohmann::json;

json vec(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd to_vec(const json& j, const char* what) {
  if (!j.is_array()) throw DataError(std::string("fit summary: '") + what + "' must be an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) {
    if (!j[k].is_number()) throw DataError(std::string("fit summary: '") + what + "' must contain numbers only");
    v[static_cast<Eigen::Index>(k)] = j[k].get<double>();
  }
  return v;
}

const json& field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw DataError(std::string("fit summary is missing '") + key + "'");
  return j[key];
}

json null_json(const NullSummary& s) {
  return {{"size", s.size}, {"zero_fraction", s.zero_fraction}, {"q50", s.q50},
          {"q90", s.q90},   {"q95", s.q95},                     {"q99", s.q99}};
}

}  // namespace

json fit_to_json(const FgamFit& fit) {
  json j;
  j["model"] = to_string(fit.kind);
  j["kx"] = fit.kx;
  j["kt"] = fit.kt;
  j["quadrature"] = to_string(fit.rule);
  j["n"] = fit.n();
  j["x_range"] = {fit.x_range.lo, fit.x_range.hi};
  j["t_range"] = {fit.t[0], fit.t[fit.t.size() - 1]};
  j["rss"] = fit.residuals.squaredNorm();
  if (fit.kind == ModelKind::TensorGcv) {
    j["lambda_x"] = fit.gcv.lambda_x;
    j["lambda_t"] = fit.gcv.lambda_t;
    j["gcv"] = fit.gcv.score;
    j["edf"] = fit.edf;
    j["coefficients"] = {{"theta", vec(fit.theta)}};
  } else {
    const VarianceComponentFit& c = fit.components;
    j["criterion"] = to_string(c.criterion);
    j["log_likelihood"] = c.log_likelihood;
    j["converged"] = c.converged;
    j["iterations"] = c.iterations;
    json vc;
    vc["sigma2_e"] = c.sigma2_e;
    for (Eigen::Index k = 0; k < c.sigma2.size(); ++k) vc["sigma2_" + std::to_string(k + 1)] = c.sigma2[k];
    j["variance_components"] = vc;
    json coef;
    coef["beta"] = vec(c.beta);
    for (std::size_t k = 0; k < c.blups.size(); ++k) coef["b" + std::to_string(k + 1)] = vec(c.blups[k]);
    j["coefficients"] = coef;
  }
  j["warnings"] = fit.warnings;
  return j;
}

FgamFit fit_from_summary(const json& s) {
  FgamFit fit;
  try {
    fit.kind = model_kind_from_string(field(s, "model").get<std::string>());
    fit.rule = quadrature_rule_from_string(field(s, "quadrature").get<std::string>());
    fit.kx = field(s, "kx").get<int>();
    fit.kt = field(s, "kt").get<int>();
    const Eigen::VectorXd xr = to_vec(field(s, "x_range"), "x_range");
    const Eigen::VectorXd tr = to_vec(field(s, "t_range"), "t_range");
    if (xr.size() != 2 || tr.size() != 2) throw DataError("fit summary: ranges must have two entries");
    fit.x_range = {xr[0], xr[1]};
    fit.t = tr;
    const json& coef = field(s, "coefficients");
    const MarginalSmooth ts(make_knots({tr[0], tr[1]}, fit.kt), 2);
    if (fit.kind == ModelKind::TensorGcv) {
      fit.x_smooth = MarginalSmooth(make_knots(fit.x_range, fit.kx), 2);
      fit.t_smooth = ts;
      fit.theta = to_vec(field(coef, "theta"), "theta");
      if (fit.theta.size() != static_cast<Eigen::Index>(fit.kx) * fit.kt)
        throw DataError("fit summary: theta has the wrong length");
    } else {
      std::optional<MarginalSmooth> xs;
      if (fit.kind == ModelKind::Fgamm) xs = MarginalSmooth(make_knots(fit.x_range, fit.kx), 2);
      fit.basis = PsAnovaBasis(std::move(xs), ts, fit.rule);
      fit.components.beta = to_vec(field(coef, "beta"), "beta");
      const int blocks = fit.kind == ModelKind::Fgamm ? 3 : 1;
      for (int k = 1; k <= blocks; ++k) {
        const std::string key = "b" + std::to_string(k);
        fit.components.blups.push_back(to_vec(field(coef, key.c_str()), key.c_str()));
      }
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed fit summary: ") + e.what());
  }
  return fit;
}

Eigen::VectorXd fitted_from_summary(const json& summary, const FunctionalDataset& data) {
  const FgamFit fit = fit_from_summary(summary);
  const Eigen::VectorXd fitted = predict(fit, data.x, data.t).mean;
  return fitted;
}

json null_summary_to_json(const NullSummary& s) { return null_json(s); }

json test_result_to_json(const TestResult& r) {
  json j;
  j["method"] = to_string(r.method);
  j["statistic"] = r.statistic;
  j["p_value"] = r.p_value;
  j["alpha"] = r.alpha;
  j["reject"] = r.reject;
  j["nsim"] = r.nsim;
  j["seed"] = r.seed;
  j["subtests"] = json::array();
  for (const auto& st : r.subtests)
    j["subtests"].push_back(
        {{"component", st.component}, {"statistic", st.statistic}, {"p_value", st.p_value}, {"null", null_json(st.null)}});
  json vc = json::object();
  for (std::size_t k = 0; k < r.variance_names.size() && k < r.variances.size(); ++k)
    vc[r.variance_names[k]] = r.variances[k];
  j["variance_components"] = vc;
  j["failures"] = r.failures;
  j["unreliable"] = r.unreliable;
  j["warnings"] = r.warnings;
  return j;
}

json study_config_to_json(const StudyConfig& cfg) {
  json j;
  j["scenario"] = to_string(cfg.scenario);
  j["n"] = cfg.n;
  j["j"] = cfg.j;
  j["reps"] = cfg.reps;
  j["kx"] = cfg.kx;
  j["kt"] = cfg.kt;
  j["alphas"] = cfg.alphas;
  j["nsim"] = cfg.nsim;
  j["nboot"] = cfg.nboot;
  j["seed"] = cfg.seed;
  j["quadrature"] = to_string(cfg.rule);
  j["threads"] = cfg.threads;
  j["bonferroni_separate_fits"] = cfg.bonferroni_separate_fits;
  j["methods"] = json::array();
  for (TestMethod m : cfg.methods) j["methods"].push_back(to_string(m));
  j["points"] = json::array();
  for (const auto& p : cfg.points) {
    if (cfg.scenario == Scenario::Convex)
      j["points"].push_back({{"phi", p.phi}});
    else
      j["points"].push_back({{"sigma2_2", p.sigma2_2}, {"sigma2_3", p.sigma2_3}});
  }
  return j;
}

}  // namespace fgam
