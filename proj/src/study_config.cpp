#include "fgam/sim.hpp"

#define TOML_EXCEPTIONS 1
#include <json.hpp>
#include <toml.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace fgam {

namespace {

using nlohmann::json;

const std::set<std::string> kKnownKeys{
    "scenario", "n",   "j",       "reps",    "kx",          "kt",         "alpha",  "alphas",
    "nsim",     "nboot", "seed",  "methods", "quadrature",  "threads",    "phi",    "sigma2_grid",
    "points",   "bonferroni_separate_fits", "name",          "description"};

struct Reader {
  const json& doc;
  std::vector<std::string> errors;

  template <class T>
  void integer(const char* key, T& out, long long lo) {
    if (!doc.contains(key)) return;
    const json& v = doc[key];
    if (!v.is_number_integer()) {
      errors.push_back(std::string(key) + " must be an integer");
      return;
    }
    const long long x = v.get<long long>();
    if (x < lo) {
      errors.push_back(std::string(key) + " must be at least " + std::to_string(lo) + " (got " + std::to_string(x) + ")");
      return;
    }
    out = static_cast<T>(x);
  }

  std::vector<double> numbers(const json& v, const std::string& what) {
    std::vector<double> out;
    if (v.is_number()) return {v.get<double>()};
    if (!v.is_array()) {
      errors.push_back(what + " must be a number or an array of numbers");
      return out;
    }
    for (const auto& e : v) {
      if (!e.is_number()) {
        errors.push_back(what + " must contain numbers only");
        return {};
      }
      out.push_back(e.get<double>());
    }
    return out;
  }
};

StudyConfig from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError({"configuration must be a table/object"});
  Reader rd{doc, {}};
  StudyConfig cfg;
  for (const auto& [k, v] : doc.items())
    if (!kKnownKeys.count(k)) rd.errors.push_back("unknown key '" + k + "'");

  if (!doc.contains("scenario")) {
    rd.errors.push_back("missing key 'scenario' (convex or mixed)");
  } else if (doc["scenario"] == "convex") {
    cfg.scenario = Scenario::Convex;
  } else if (doc["scenario"] == "mixed") {
    cfg.scenario = Scenario::Mixed;
  } else {
    rd.errors.push_back("scenario must be 'convex' or 'mixed'");
  }
  rd.integer("n", cfg.n, 0);
  rd.integer("j", cfg.j, 0);
  rd.integer("reps", cfg.reps, 0);
  rd.integer("kx", cfg.kx, 0);
  rd.integer("kt", cfg.kt, 0);
  rd.integer("nsim", cfg.nsim, 0);
  rd.integer("nboot", cfg.nboot, 0);
  rd.integer("threads", cfg.threads, 0);
  rd.integer("seed", cfg.seed, 0);
  if (doc.contains("alphas")) cfg.alphas = rd.numbers(doc["alphas"], "alphas");
  if (doc.contains("alpha")) cfg.alphas = rd.numbers(doc["alpha"], "alpha");
  if (doc.contains("quadrature")) {
    const json& q = doc["quadrature"];
    if (q == "trapezoid")
      cfg.rule = QuadratureRule::Trapezoid;
    else if (q == "midpoint")
      cfg.rule = QuadratureRule::Midpoint;
    else
      rd.errors.push_back("quadrature must be 'trapezoid' or 'midpoint'");
  }
  if (doc.contains("bonferroni_separate_fits")) {
    if (doc["bonferroni_separate_fits"].is_boolean())
      cfg.bonferroni_separate_fits = doc["bonferroni_separate_fits"].get<bool>();
    else
      rd.errors.push_back("bonferroni_separate_fits must be true or false");
  }
  if (doc.contains("methods")) {
    cfg.methods.clear();
    const json& m = doc["methods"];
    if (!m.is_array()) {
      rd.errors.push_back("methods must be an array of names");
    } else {
      for (const auto& e : m) {
        const std::string name = e.is_string() ? e.get<std::string>() : e.dump();
        try {
          cfg.methods.push_back(test_method_from_string(name));
        } catch (const ParameterError&) {
          rd.errors.push_back("unknown method '" + name + "' (allowed: " + allowed_test_methods() + ")");
        }
      }
    }
  }
  if (cfg.scenario == Scenario::Convex) {
    if (doc.contains("sigma2_grid") || doc.contains("points"))
      rd.errors.push_back("sigma2_grid/points apply to the mixed scenario only");
    if (!doc.contains("phi")) {
      rd.errors.push_back("convex scenario needs 'phi' (array of values in [0, 1])");
    } else {
      for (double phi : rd.numbers(doc["phi"], "phi")) cfg.points.push_back({phi, 0.0, 0.0});
    }
  } else {
    if (doc.contains("phi")) rd.errors.push_back("phi applies to the convex scenario only");
    if (doc.contains("sigma2_grid")) {
      const auto g = rd.numbers(doc["sigma2_grid"], "sigma2_grid");
      for (double a : g)
        for (double b : g) cfg.points.push_back({1.0, a, b});
    }
    if (doc.contains("points")) {
      const json& p = doc["points"];
      if (!p.is_array()) {
        rd.errors.push_back("points must be an array of [sigma2_2, sigma2_3] pairs");
      } else {
        for (const auto& e : p) {
          if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number()) {
            rd.errors.push_back("each point must be a pair [sigma2_2, sigma2_3]");
            continue;
          }
          cfg.points.push_back({1.0, e[0].get<double>(), e[1].get<double>()});
        }
      }
    }
    if (!doc.contains("sigma2_grid") && !doc.contains("points"))
      rd.errors.push_back("mixed scenario needs 'sigma2_grid' or 'points'");
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    for (const auto& v : e.violations())
      if (std::find(rd.errors.begin(), rd.errors.end(), v) == rd.errors.end()) rd.errors.push_back(v);
  }
  if (!rd.errors.empty()) throw ConfigError(std::move(rd.errors));
  return cfg;
}

}  // namespace

StudyConfig parse_study_config_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError({std::string("JSON parse error: ") + e.what()});
  }
  return from_json(doc);
}

StudyConfig parse_study_config_toml(const std::string& text) {
  toml::table tbl;
  try {
    tbl = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "TOML parse error at line " << e.source().begin.line << ": " << e.description();
    throw ConfigError({os.str()});
  }
  std::ostringstream js;
  js << toml::json_formatter{tbl};
  return from_json(json::parse(js.str()));
}

StudyConfig load_study_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError({"cannot open configuration file '" + path + "'"});
  std::ostringstream ss;
  ss << in.rdbuf();
  const bool is_json = path.size() >= 5 && path.substr(path.size() - 5) == ".json";
  return is_json ? parse_study_config_json(ss.str()) : parse_study_config_toml(ss.str());
}

}  // namespace fgam
