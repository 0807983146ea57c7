#include "fgam/fgam.h"

#include "fgam/dataset_io.hpp"
#include "fgam/model.hpp"
#include "fgam/rng.hpp"
#include "fgam/serialize.hpp"
#include "fgam/sim.hpp"

#include <cstring>
#include <memory>
#include <new>
#include <optional>
#include <string>

struct fgam_dataset {
  fgam::FunctionalDataset data;
};
struct fgam_fit {
  fgam::FgamFit fit;
};
struct fgam_test_result {
  fgam::TestResult result;
};
struct fgam_null_sample {
  fgam::RlrtNullSample sample;
};
struct fgam_study {
  fgam::StudyConfig config;
  std::optional<fgam::RejectionTable> table;
};

namespace {

thread_local std::string g_last_error;

fgam_status fail(fgam_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

// Runs fn, translating exceptions into status codes.
template <class F>
fgam_status guard(F&& fn) {
  try {
    g_last_error.clear();
    fn();
    return FGAM_OK;
  } catch (const fgam::ConfigError& e) {
    return fail(FGAM_ERR_CONFIG, e.what());
  } catch (const fgam::ParameterError& e) {
    return fail(FGAM_ERR_PARAMETER, e.what());
  } catch (const fgam::ShapeError& e) {
    return fail(FGAM_ERR_SHAPE, e.what());
  } catch (const fgam::DomainError& e) {
    return fail(FGAM_ERR_DOMAIN, e.what());
  } catch (const fgam::CapacityError& e) {
    return fail(FGAM_ERR_CAPACITY, e.what());
  } catch (const fgam::IoError& e) {
    return fail(FGAM_ERR_IO, e.what());
  } catch (const fgam::DataError& e) {
    return fail(FGAM_ERR_DATA, e.what());
  } catch (const fgam::DegenerateDesignError& e) {
    return fail(FGAM_ERR_DEGENERATE, e.what());
  } catch (const fgam::ConvergenceError& e) {
    return fail(FGAM_ERR_CONVERGENCE, e.what());
  } catch (const fgam::NumericalError& e) {
    return fail(FGAM_ERR_NUMERICAL, e.what());
  } catch (const std::bad_alloc&) {
    return fail(FGAM_ERR_CAPACITY, "out of memory");
  } catch (const std::exception& e) {
    return fail(FGAM_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(FGAM_ERR_INTERNAL, "unknown error");
  }
}

void require(bool cond, const char* msg) {
  if (!cond) throw fgam::ParameterError(msg);
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

fgam::QuadratureRule rule_of(fgam_quadrature q) {
  switch (q) {
    case FGAM_QUAD_TRAPEZOID: return fgam::QuadratureRule::Trapezoid;
    case FGAM_QUAD_MIDPOINT: return fgam::QuadratureRule::Midpoint;
  }
  throw fgam::ParameterError("unknown quadrature rule");
}

fgam::TestMethod method_of(fgam_test_method m) {
  switch (m) {
    case FGAM_TEST_EQUALVC: return fgam::TestMethod::EqualVC;
    case FGAM_TEST_BONFERRONI: return fgam::TestMethod::Bonferroni;
    case FGAM_TEST_BOOTSTRAP: return fgam::TestMethod::Bootstrap;
    case FGAM_TEST_NO_EFFECT: return fgam::TestMethod::NoEffect;
    case FGAM_TEST_LINEAR_IN_T: return fgam::TestMethod::LinearInT;
    case FGAM_TEST_KNOWNSIG1: return fgam::TestMethod::KnownSig1;
  }
  throw fgam::ParameterError("unknown test method");
}

Eigen::MatrixXd row_major(const double* p, int rows, int cols) {
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(p, rows, cols);
}

void copy_row_major(const Eigen::MatrixXd& m, double* out) {
  if (!out) return;
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(out, m.rows(), m.cols()) = m;
}

void copy_vec(const Eigen::VectorXd& v, double* out) {
  if (out) Eigen::Map<Eigen::VectorXd>(out, v.size()) = v;
}

}  // namespace

extern "C" {

const char* fgam_version(void) { return "1.0.0"; }

const char* fgam_status_name(fgam_status s) {
  switch (s) {
    case FGAM_OK: return "ok";
    case FGAM_ERR_PARAMETER: return "parameter";
    case FGAM_ERR_SHAPE: return "shape";
    case FGAM_ERR_DOMAIN: return "domain";
    case FGAM_ERR_DATA: return "data";
    case FGAM_ERR_NUMERICAL: return "numerical";
    case FGAM_ERR_CONVERGENCE: return "convergence";
    case FGAM_ERR_DEGENERATE: return "degenerate";
    case FGAM_ERR_CONFIG: return "config";
    case FGAM_ERR_IO: return "io";
    case FGAM_ERR_CAPACITY: return "capacity";
    case FGAM_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* fgam_last_error(void) { return g_last_error.c_str(); }

void fgam_string_free(char* s) { delete[] s; }

/* datasets */

fgam_status fgam_dataset_create(int n, int j, const double* y, const double* x, const double* t,
                                fgam_dataset** out) {
  return guard([&] {
    require(out != nullptr, "output handle pointer is null");
    require(n > 0 && j > 0, "dataset dimensions must be positive");
    require(x != nullptr && t != nullptr, "predictor and grid buffers are required");
    auto d = std::make_unique<fgam_dataset>();
    d->data.x = row_major(x, n, j);
    d->data.t = Eigen::Map<const Eigen::VectorXd>(t, j);
    if (y) d->data.y = Eigen::Map<const Eigen::VectorXd>(y, n);
    d->data.validate(y != nullptr);
    *out = d.release();
  });
}

fgam_status fgam_dataset_load_csv(const char* y_path, const char* x_path, const char* t_path, int header,
                                  fgam_dataset** out) {
  return guard([&] {
    require(out != nullptr, "output handle pointer is null");
    require(x_path && t_path, "predictor and grid paths are required");
    auto d = std::make_unique<fgam_dataset>();
    d->data = fgam::load_dataset(y_path ? y_path : "", x_path, t_path, header != 0);
    *out = d.release();
  });
}

fgam_status fgam_dataset_write_csv(const fgam_dataset* d, const char* y_path, const char* x_path,
                                   const char* t_path) {
  return guard([&] {
    require(d != nullptr, "dataset handle is null");
    if (y_path && *y_path && d->data.y.size()) fgam::write_csv_matrix(y_path, d->data.y);
    if (x_path && *x_path) fgam::write_csv_matrix(x_path, d->data.x);
    if (t_path && *t_path) fgam::write_csv_matrix(t_path, d->data.t);
  });
}

void fgam_dataset_free(fgam_dataset* d) { delete d; }
int fgam_dataset_n(const fgam_dataset* d) { return d ? static_cast<int>(d->data.n()) : 0; }
int fgam_dataset_j(const fgam_dataset* d) { return d ? static_cast<int>(d->data.j()) : 0; }
int fgam_dataset_has_response(const fgam_dataset* d) { return d && d->data.y.size() > 0 ? 1 : 0; }

fgam_status fgam_dataset_get(const fgam_dataset* d, double* y, double* x, double* t) {
  return guard([&] {
    require(d != nullptr, "dataset handle is null");
    copy_vec(d->data.y, y);
    copy_row_major(d->data.x, x);
    copy_vec(d->data.t, t);
  });
}

fgam_status fgam_generate_convex(int n, int j, double phi, uint64_t seed, fgam_dataset** out) {
  return guard([&] {
    require(out != nullptr, "output handle pointer is null");
    auto d = std::make_unique<fgam_dataset>();
    d->data = fgam::gen_predictors(n, j, fgam::derive_seed(seed, 1));
    d->data.y = fgam::gen_response_convex(d->data.x, d->data.t, phi, fgam::derive_seed(seed, 2));
    *out = d.release();
  });
}

fgam_status fgam_generate_mixed(int n, int j, double sigma2_2, double sigma2_3, int kx, int kt,
                                fgam_quadrature quadrature, uint64_t seed, fgam_dataset** out, double* b1_out) {
  return guard([&] {
    require(out != nullptr, "output handle pointer is null");
    auto d = std::make_unique<fgam_dataset>();
    d->data = fgam::gen_predictors(n, j, fgam::derive_seed(seed, 1));
    fgam::MixedResponse r = fgam::gen_response_mixed(d->data.x, d->data.t, sigma2_2, sigma2_3, kx, kt,
                                                     fgam::derive_seed(seed, 2), rule_of(quadrature));
    d->data.y = std::move(r.y);
    copy_vec(r.b1, b1_out);
    *out = d.release();
  });
}

/* fits */

fgam_status fgam_fit_model(const fgam_dataset* d, fgam_model model, int kx, int kt, fgam_quadrature quadrature,
                           fgam_fit** out) {
  return guard([&] {
    require(d != nullptr && out != nullptr, "null handle");
    const fgam::QuadratureRule rule = rule_of(quadrature);
    auto f = std::make_unique<fgam_fit>();
    switch (model) {
      case FGAM_MODEL_FGAMM: f->fit = fgam::fit_fgamm(d->data, kx, kt, rule); break;
      case FGAM_MODEL_FLM: f->fit = fgam::fit_flm(d->data, kt, rule); break;
      case FGAM_MODEL_GCV: f->fit = fgam::fit_fgam_gcv(d->data, kx, kt, rule); break;
      default: throw fgam::ParameterError("unknown model");
    }
    *out = f.release();
  });
}

void fgam_fit_free(fgam_fit* f) { delete f; }
int fgam_fit_n(const fgam_fit* f) { return f ? static_cast<int>(f->fit.n()) : 0; }

fgam_status fgam_fit_fitted(const fgam_fit* f, double* out) {
  return guard([&] {
    require(f != nullptr && out != nullptr, "null handle");
    copy_vec(f->fit.fitted, out);
  });
}

fgam_status fgam_fit_summary_json(const fgam_fit* f, char** out) {
  return guard([&] {
    require(f != nullptr && out != nullptr, "null handle");
    *out = dup_string(fgam::fit_to_json(f->fit).dump());
  });
}

fgam_status fgam_fit_predict(const fgam_fit* f, int n, int j, const double* x, const double* t, double* out,
                             int* clamped) {
  return guard([&] {
    require(f != nullptr && x != nullptr && t != nullptr && out != nullptr, "null argument");
    require(n > 0 && j > 0, "dimensions must be positive");
    const fgam::Prediction p = fgam::predict(f->fit, row_major(x, n, j), Eigen::Map<const Eigen::VectorXd>(t, j));
    copy_vec(p.mean, out);
    if (clamped) *clamped = p.clamped;
  });
}

fgam_status fgam_fit_surface(const fgam_fit* f, int nx, int nt, double* x_out, double* t_out, double* parametric,
                             double* x_linear, double* x_smooth, double* nonparametric, double* total) {
  return guard([&] {
    require(f != nullptr, "fit handle is null");
    require(nx > 1 && nt > 1, "surface grids need at least two points per axis");
    const fgam::SurfaceDecomposition s = fgam::evaluate_surface(f->fit, nx, nt);
    copy_vec(s.x, x_out);
    copy_vec(s.t, t_out);
    copy_row_major(s.parametric, parametric);
    copy_row_major(s.x_linear, x_linear);
    copy_row_major(s.x_smooth, x_smooth);
    copy_row_major(s.nonparametric, nonparametric);
    copy_row_major(s.total, total);
  });
}

fgam_status fgam_fitted_from_summary(const char* summary_json, const fgam_dataset* d, double* out) {
  return guard([&] {
    require(summary_json != nullptr && d != nullptr && out != nullptr, "null argument");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(summary_json);
    } catch (const nlohmann::json::exception& e) {
      throw fgam::DataError(std::string("fit summary is not valid JSON: ") + e.what());
    }
    copy_vec(fgam::fitted_from_summary(j, d->data), out);
  });
}

/* tests */

void fgam_test_options_init(fgam_test_options* opt) {
  if (!opt) return;
  const fgam::TestOptions d;
  opt->kx = d.kx;
  opt->kt = d.kt;
  opt->quadrature = FGAM_QUAD_TRAPEZOID;
  opt->nsim = d.nsim;
  opt->seed = d.seed;
  opt->alpha = d.alpha;
  opt->threads = d.threads;
  opt->bonferroni_separate_fits = d.bonferroni_separate_fits ? 1 : 0;
}

fgam_status fgam_test_method_from_name(const char* name, fgam_test_method* out) {
  return guard([&] {
    require(name != nullptr && out != nullptr, "null argument");
    *out = static_cast<fgam_test_method>(static_cast<int>(fgam::test_method_from_string(name)));
  });
}

const char* fgam_test_method_name(fgam_test_method m) {
  try {
    return fgam::to_string(method_of(m));
  } catch (...) {
    return "unknown";
  }
}

fgam_status fgam_test_run(const fgam_dataset* d, fgam_test_method method, const fgam_test_options* opt,
                          const double* true_b1, int b1_len, fgam_test_result** out) {
  return guard([&] {
    require(d != nullptr && out != nullptr, "null handle");
    fgam::TestOptions o;
    if (opt) {
      o.kx = opt->kx;
      o.kt = opt->kt;
      o.rule = rule_of(opt->quadrature);
      o.nsim = opt->nsim;
      o.seed = opt->seed;
      o.alpha = opt->alpha;
      o.threads = opt->threads;
      o.bonferroni_separate_fits = opt->bonferroni_separate_fits != 0;
    }
    std::optional<Eigen::VectorXd> b1;
    if (true_b1) {
      require(b1_len > 0, "b1_len must be positive");
      b1 = Eigen::Map<const Eigen::VectorXd>(true_b1, b1_len);
    }
    auto r = std::make_unique<fgam_test_result>();
    r->result = fgam::run_test(method_of(method), d->data, o, b1 ? &*b1 : nullptr);
    *out = r.release();
  });
}

void fgam_test_result_free(fgam_test_result* r) { delete r; }
double fgam_test_result_statistic(const fgam_test_result* r) { return r ? r->result.statistic : 0.0; }
double fgam_test_result_p_value(const fgam_test_result* r) { return r ? r->result.p_value : 1.0; }
int fgam_test_result_reject(const fgam_test_result* r) { return r && r->result.reject ? 1 : 0; }

fgam_status fgam_test_result_json(const fgam_test_result* r, char** out) {
  return guard([&] {
    require(r != nullptr && out != nullptr, "null handle");
    *out = dup_string(fgam::test_result_to_json(r->result).dump());
  });
}

/* null distributions */

fgam_status fgam_null_simulate(const fgam_dataset* d, int kx, int kt, fgam_quadrature quadrature,
                               fgam_null_block block, int nsim, uint64_t seed, int threads,
                               fgam_null_sample** out) {
  return guard([&] {
    require(d != nullptr && out != nullptr, "null handle");
    require(nsim > 0, "nsim must be positive");
    require(threads >= 0, "threads must be non-negative");
    d->data.validate(false);
    const fgam::QuadratureRule rule = rule_of(quadrature);
    Eigen::MatrixXd X, Z;
    if (block == FGAM_NULL_SIGMA1) {
      const fgam::PsAnovaDesign des =
          fgam::PsAnovaBasis::flm_from_data(d->data, kt, rule).design(d->data.x, d->data.t);
      X = des.X;
      Z = des.Z1;
    } else {
      const fgam::PsAnovaDesign des = fgam::build_psanova_design(d->data, kx, kt, rule);
      X = des.X;
      switch (block) {
        case FGAM_NULL_SIGMA23:
          Z.resize(des.n(), des.q2() + des.q3());
          Z << des.Z2, des.Z3;
          break;
        case FGAM_NULL_SIGMA2: Z = des.Z2; break;
        case FGAM_NULL_SIGMA3: Z = des.Z3; break;
        default: throw fgam::ParameterError("unknown null block");
      }
    }
    auto s = std::make_unique<fgam_null_sample>();
    s->sample = fgam::OneComponentModel(X, Z).simulate_null(nsim, seed, threads);
    *out = s.release();
  });
}

void fgam_null_sample_free(fgam_null_sample* s) { delete s; }
int fgam_null_sample_size(const fgam_null_sample* s) { return s ? static_cast<int>(s->sample.values.size()) : 0; }

fgam_status fgam_null_sample_values(const fgam_null_sample* s, double* out) {
  return guard([&] {
    require(s != nullptr && out != nullptr, "null argument");
    std::copy(s->sample.values.begin(), s->sample.values.end(), out);
  });
}

double fgam_null_sample_zero_fraction(const fgam_null_sample* s) { return s ? s->sample.zero_fraction() : 0.0; }

fgam_status fgam_null_sample_quantile(const fgam_null_sample* s, double p, double* out) {
  return guard([&] {
    require(s != nullptr && out != nullptr, "null argument");
    *out = s->sample.quantile(p);
  });
}

fgam_status fgam_null_sample_json(const fgam_null_sample* s, char** out) {
  return guard([&] {
    require(s != nullptr && out != nullptr, "null argument");
    nlohmann::json j = fgam::null_summary_to_json(fgam::summarize_null(s->sample.values));
    j["nsim"] = s->sample.nsim;
    j["seed"] = s->sample.seed;
    j["mu"] = std::vector<double>(s->sample.mu.data(), s->sample.mu.data() + s->sample.mu.size());
    *out = dup_string(j.dump());
  });
}

/* studies */

fgam_status fgam_study_load(const char* path, fgam_study** out) {
  return guard([&] {
    require(path != nullptr && out != nullptr, "null argument");
    auto s = std::make_unique<fgam_study>();
    s->config = fgam::load_study_config(path);
    *out = s.release();
  });
}

fgam_status fgam_study_parse(const char* text, int is_json, fgam_study** out) {
  return guard([&] {
    require(text != nullptr && out != nullptr, "null argument");
    auto s = std::make_unique<fgam_study>();
    s->config = is_json ? fgam::parse_study_config_json(text) : fgam::parse_study_config_toml(text);
    *out = s.release();
  });
}

void fgam_study_free(fgam_study* s) { delete s; }

fgam_status fgam_study_override(fgam_study* s, int reps, int threads, int64_t seed) {
  return guard([&] {
    require(s != nullptr, "study handle is null");
    fgam::StudyConfig c = s->config;
    if (reps >= 0) c.reps = reps;
    if (threads >= 0) c.threads = threads;
    if (seed >= 0) c.seed = static_cast<std::uint64_t>(seed);
    c.validate();
    s->config = c;
    s->table.reset();
  });
}

fgam_status fgam_study_config_json(const fgam_study* s, char** out) {
  return guard([&] {
    require(s != nullptr && out != nullptr, "null argument");
    *out = dup_string(fgam::study_config_to_json(s->config).dump());
  });
}

fgam_status fgam_study_run(fgam_study* s, fgam_progress_fn progress, void* user) {
  return guard([&] {
    require(s != nullptr, "study handle is null");
    fgam::ProgressCallback cb;
    if (progress) cb = [=](int done, int total) { progress(done, total, user); };
    s->table = fgam::run_rejection_study(s->config, cb);
  });
}

fgam_status fgam_study_table_csv(const fgam_study* s, char** out) {
  return guard([&] {
    require(s != nullptr && out != nullptr, "null argument");
    require(s->table.has_value(), "study has not been run");
    *out = dup_string(s->table->to_csv());
  });
}

fgam_status fgam_study_table_json(const fgam_study* s, char** out) {
  return guard([&] {
    require(s != nullptr && out != nullptr, "null argument");
    require(s->table.has_value(), "study has not been run");
    *out = dup_string(s->table->to_json());
  });
}

}  // extern "C"
