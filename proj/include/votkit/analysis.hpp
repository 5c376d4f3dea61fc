#ifndef VOTKIT_ANALYSIS_HPP
#define VOTKIT_ANALYSIS_HPP

#include <Eigen/Core>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "votkit/design.hpp"
#include "votkit/estimator.hpp"

namespace votkit {

// One converged cell prepared for the elasticity regressions: log VOT, log
// income and dummies against female / 20s / bachelor's / business.
struct RegressionRow {
  double ln_vot = 0.0;
  double ln_income = 0.0;
  int male = 0;
  int age50s = 0;
  int highschool = 0;
  int commute = 0;
  int leisure = 0;
  int personal = 0;
  std::string package_label;
};

enum class RegressionSpec {
  eq_pooled,             // intercept, ln income, demographics, purpose dummies
  eq_demographics_only,  // intercept, ln income, demographics
};

struct RegressionResult {
  std::vector<std::string> names;  // aligned with all vectors below
  Eigen::VectorXd coefficients;
  Eigen::VectorXd std_errors;
  Eigen::VectorXd t_stats;
  Eigen::VectorXd p_values;
  double r_squared = 0.0;
  double adj_r_squared = 0.0;
  double f_statistic = 0.0;
  double f_p_value = 1.0;
  int f_df1 = 0;
  int f_df2 = 0;
  int n = 0;
  double sigma = 0.0;  // residual standard error
};

enum class PurposeScope { pooled, business, commute, leisure, personal };

std::string to_string(PurposeScope scope);

struct ElasticityEstimate {
  double value = 0.0;  // coefficient on ln income
  double ci_low = 0.0;
  double ci_high = 0.0;
  PurposeScope purpose_scope = PurposeScope::pooled;
  std::string package_label;
  int n = 0;
};

struct VotCurvePoint {
  int income = 0;
  double mean_vot = 0.0;
  int count = 0;
};

struct VotCurve {
  std::string group_factor;  // "package", "purpose", "sex", "age", "education"
  std::string group_level;
  std::vector<VotCurvePoint> points;  // incomes strictly increasing
};

// Cells dropped from a regression or curve, with the reason, so exclusions
// are always visible downstream.
struct Exclusion {
  ScenarioCell cell;
  std::string reason;
};

using CellFits = std::vector<std::pair<ScenarioCell, FitResult>>;

struct AssembledRows {
  std::vector<RegressionRow> rows;
  std::vector<Exclusion> exclusions;
};

// One row per converged cell with a defined, positive VOT. All cells must
// come from the named package.
AssembledRows assemble_rows(const CellFits& fits,
                            const std::string& package_label);

// Ordinary least squares through a column-pivoted QR decomposition, with
// classical standard errors, two-sided t p-values and the joint F test.
RegressionResult ols_fit(const std::vector<RegressionRow>& rows,
                         RegressionSpec spec);

// Pooled scope: the full regression on all rows of one package. Per-purpose
// scope: the demographics-only regression per purpose partition. 95% CI via
// Student-t quantiles at the fit's residual degrees of freedom.
std::vector<ElasticityEstimate> elasticities(const CellFits& fits,
                                             const std::string& package_label,
                                             bool per_purpose);

// Mean VOT per income level for every level of the grouping factor, over
// all converged cells with defined VOT.
std::vector<VotCurve> vot_income_curves(const CellFits& fits,
                                        const std::string& group_factor);

// Everything the report bundle needs, already computed.
struct ReportInputs {
  CellFits fits;
  std::vector<std::string> package_labels;  // emission order
  nlohmann::json* metadata = nullptr;       // optional run metadata sidecar
};

// Writes the report bundle under output_dir: a per-income VOT and
// VOT-income-ratio table per package, a regression table (CSV + markdown,
// with significance stars) per package, CSV series for every VOT-income
// curve and elasticity, and a metadata sidecar. Deterministic bytes for
// identical inputs.
void export_report(const ReportInputs& inputs,
                   const std::filesystem::path& output_dir);

// Rendering helpers shared by the CLI and the report writer.
std::string significance_stars(double p_value);
std::string render_regression_markdown(const RegressionResult& result,
                                       const std::string& title);

nlohmann::json regression_result_to_json(const RegressionResult& r);
nlohmann::json elasticity_to_json(const ElasticityEstimate& e);

}  // namespace votkit

#endif  // VOTKIT_ANALYSIS_HPP
