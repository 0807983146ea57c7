#pragma once

#include "fgam/hypothesis.hpp"
#include "fgam/model.hpp"
#include "fgam/rlrt.hpp"
#include "fgam/sim.hpp"

#include <json.hpp>

namespace fgam {

/// Fit summary: model settings, variance components or smoothing
/// parameters, criterion value and every coefficient needed to rebuild the
/// fitted values (see fitted_from_summary).
nlohmann::json fit_to_json(const FgamFit& fit);

/// Rebuilds a fit from fit_to_json output; enough for predict() and
/// evaluate_surface(). Throws DataError on malformed summaries.
FgamFit fit_from_summary(const nlohmann::json& summary);

/// Recomputes fitted values for `data` from a summary written by fit_to_json.
Eigen::VectorXd fitted_from_summary(const nlohmann::json& summary, const FunctionalDataset& data);

nlohmann::json test_result_to_json(const TestResult& r);
nlohmann::json null_summary_to_json(const NullSummary& s);
nlohmann::json study_config_to_json(const StudyConfig& cfg);

}  // namespace fgam
