#include "votkit/analysis.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "votkit/errors.hpp"
#include "votkit/numeric.hpp"

namespace votkit {

namespace {

const std::vector<std::string>& spec_names(RegressionSpec spec) {
  static const std::vector<std::string> pooled = {
      "intercept", "ln_income", "male",    "age50s",
      "highschool", "commute",  "leisure", "personal"};
  static const std::vector<std::string> demo = {
      "intercept", "ln_income", "male", "age50s", "highschool"};
  return spec == RegressionSpec::eq_pooled ? pooled : demo;
}

Eigen::RowVectorXd design_row(const RegressionRow& r, RegressionSpec spec) {
  if (spec == RegressionSpec::eq_pooled) {
    Eigen::RowVectorXd x(8);
    x << 1.0, r.ln_income, r.male, r.age50s, r.highschool, r.commute,
        r.leisure, r.personal;
    return x;
  }
  Eigen::RowVectorXd x(5);
  x << 1.0, r.ln_income, r.male, r.age50s, r.highschool;
  return x;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out << body;
  if (!out.flush()) {
    throw std::runtime_error("write failed for " + path.string());
  }
}

std::string factor_level(const ScenarioCell& cell,
                         const std::string& factor) {
  if (factor == "package") return cell.package_label;
  if (factor == "purpose") return to_string(cell.purpose);
  if (factor == "sex") return to_string(cell.sex);
  if (factor == "age") return to_string(cell.age_band);
  if (factor == "education") return to_string(cell.education);
  throw std::invalid_argument("unknown grouping factor: '" + factor + "'");
}

}  // namespace

std::string to_string(PurposeScope scope) {
  switch (scope) {
    case PurposeScope::pooled: return "pooled";
    case PurposeScope::business: return "business";
    case PurposeScope::commute: return "commute";
    case PurposeScope::leisure: return "leisure";
    case PurposeScope::personal: return "personal";
  }
  throw std::invalid_argument("bad PurposeScope");
}

AssembledRows assemble_rows(const CellFits& fits,
                            const std::string& package_label) {
  AssembledRows out;
  for (const auto& [cell, fit] : fits) {
    if (cell.package_label != package_label) {
      throw std::invalid_argument(
          "assemble_rows: fits mix package '" + cell.package_label +
          "' into '" + package_label + "'");
    }
    if (!fit.converged) {
      out.exclusions.push_back({cell, "fit did not converge"});
      continue;
    }
    if (!fit.vot) {
      out.exclusions.push_back({cell, "VOT undefined (degenerate cost "
                                      "coefficient)"});
      continue;
    }
    if (*fit.vot <= 0.0) {
      out.exclusions.push_back({cell, "VOT not positive; log undefined"});
      continue;
    }
    RegressionRow r;
    r.ln_vot = std::log(*fit.vot);
    r.ln_income = std::log(static_cast<double>(cell.income));
    r.male = cell.sex == Sex::male ? 1 : 0;
    r.age50s = cell.age_band == AgeBand::fifties ? 1 : 0;
    r.highschool = cell.education == Education::high_school ? 1 : 0;
    r.commute = cell.purpose == Purpose::commute ? 1 : 0;
    r.leisure = cell.purpose == Purpose::leisure ? 1 : 0;
    r.personal = cell.purpose == Purpose::personal ? 1 : 0;
    r.package_label = package_label;
    out.rows.push_back(std::move(r));
  }
  return out;
}

RegressionResult ols_fit(const std::vector<RegressionRow>& rows,
                         RegressionSpec spec) {
  const auto& names = spec_names(spec);
  const int p = static_cast<int>(names.size());
  const int n = static_cast<int>(rows.size());
  if (n <= p) {
    throw std::invalid_argument("ols_fit: need more observations (" +
                                std::to_string(n) + ") than coefficients (" +
                                std::to_string(p) + ")");
  }

  Eigen::MatrixXd X(n, p);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X.row(i) = design_row(rows[i], spec);
    y[i] = rows[i].ln_vot;
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) {
    const auto perm = qr.colsPermutation().indices();
    std::string collinear;
    for (int k = qr.rank(); k < p; ++k) {
      if (!collinear.empty()) collinear += ", ";
      collinear += names[perm[k]];
    }
    throw std::invalid_argument("ols_fit: design matrix rank deficient; "
                                "collinear columns: " + collinear);
  }

  RegressionResult res;
  res.names = names;
  res.n = n;
  res.coefficients = qr.solve(y);

  const Eigen::VectorXd residuals = y - X * res.coefficients;
  const double ssr = residuals.squaredNorm();
  const double sst = (y.array() - y.mean()).square().sum();
  const int dof = n - p;
  const double sigma2 = ssr / dof;
  res.sigma = std::sqrt(sigma2);

  // (X'X)^{-1} from the pivoted QR factors: X P = Q R.
  const Eigen::MatrixXd R =
      qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd Rinv =
      R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  const Eigen::MatrixXd P = qr.colsPermutation();
  const Eigen::MatrixXd xtx_inv = P * Rinv * Rinv.transpose() * P.transpose();

  res.std_errors = (sigma2 * xtx_inv.diagonal()).cwiseSqrt();
  res.t_stats = res.coefficients.cwiseQuotient(res.std_errors);
  res.p_values.resize(p);
  for (int j = 0; j < p; ++j) {
    res.p_values[j] = student_t_two_sided_p(res.t_stats[j], dof);
  }

  res.r_squared = sst > 0.0 ? 1.0 - ssr / sst : 0.0;
  res.adj_r_squared =
      1.0 - (1.0 - res.r_squared) * (n - 1) / static_cast<double>(dof);
  res.f_df1 = p - 1;
  res.f_df2 = dof;
  if (ssr == 0.0) {
    res.f_statistic = std::numeric_limits<double>::infinity();
    res.f_p_value = 0.0;
  } else {
    res.f_statistic =
        (res.r_squared / res.f_df1) / ((1.0 - res.r_squared) / res.f_df2);
    res.f_p_value = f_sf(res.f_statistic, res.f_df1, res.f_df2);
  }
  return res;
}

std::vector<ElasticityEstimate> elasticities(const CellFits& fits,
                                             const std::string& package_label,
                                             bool per_purpose) {
  const AssembledRows assembled = assemble_rows(fits, package_label);
  std::vector<ElasticityEstimate> out;

  auto estimate = [&](const std::vector<RegressionRow>& rows,
                      RegressionSpec spec, PurposeScope scope) {
    const RegressionResult r = ols_fit(rows, spec);
    const double t975 = student_t_quantile(0.975, r.f_df2);
    ElasticityEstimate e;
    e.value = r.coefficients[1];  // ln income sits in column 1 of both specs
    e.ci_low = e.value - t975 * r.std_errors[1];
    e.ci_high = e.value + t975 * r.std_errors[1];
    e.purpose_scope = scope;
    e.package_label = package_label;
    e.n = r.n;
    return e;
  };

  if (!per_purpose) {
    out.push_back(
        estimate(assembled.rows, RegressionSpec::eq_pooled, PurposeScope::pooled));
    return out;
  }

  const std::pair<PurposeScope, Purpose> scopes[] = {
      {PurposeScope::business, Purpose::business},
      {PurposeScope::commute, Purpose::commute},
      {PurposeScope::leisure, Purpose::leisure},
      {PurposeScope::personal, Purpose::personal}};
  for (const auto& [scope, purpose] : scopes) {
    std::vector<RegressionRow> subset;
    for (const auto& r : assembled.rows) {
      const bool match =
          (purpose == Purpose::commute && r.commute) ||
          (purpose == Purpose::leisure && r.leisure) ||
          (purpose == Purpose::personal && r.personal) ||
          (purpose == Purpose::business && !r.commute && !r.leisure &&
           !r.personal);
      if (match) subset.push_back(r);
    }
    out.push_back(
        estimate(subset, RegressionSpec::eq_demographics_only, scope));
  }
  return out;
}

std::vector<VotCurve> vot_income_curves(const CellFits& fits,
                                        const std::string& group_factor) {
  if (fits.empty()) {
    throw std::invalid_argument("vot_income_curves: no fits supplied");
  }
  // level -> income -> (sum, count); levels ordered by first appearance so
  // package/purpose orderings follow the grid.
  std::vector<std::string> level_order;
  std::map<std::string, std::map<int, std::pair<double, int>>> acc;
  for (const auto& [cell, fit] : fits) {
    if (!fit.converged || !fit.vot) continue;
    const std::string level = factor_level(cell, group_factor);
    if (acc.find(level) == acc.end()) level_order.push_back(level);
    auto& slot = acc[level][cell.income];
    slot.first += *fit.vot;
    slot.second += 1;
  }

  std::vector<VotCurve> curves;
  for (const auto& level : level_order) {
    VotCurve c;
    c.group_factor = group_factor;
    c.group_level = level;
    for (const auto& [income, sum_count] : acc[level]) {  // map: ascending
      c.points.push_back(
          {income, sum_count.first / sum_count.second, sum_count.second});
    }
    curves.push_back(std::move(c));
  }
  return curves;
}

std::string significance_stars(double p_value) {
  if (p_value < 0.01) return "***";
  if (p_value < 0.05) return "**";
  if (p_value < 0.1) return "*";
  return "";
}

std::string render_regression_markdown(const RegressionResult& result,
                                       const std::string& title) {
  std::ostringstream os;
  os << "## " << title << "\n\n";
  os << "| Variable | Estimate | Std. Err. | t | p |\n";
  os << "|---|---|---|---|---|\n";
  char buf[160];
  for (size_t j = 0; j < result.names.size(); ++j) {
    std::snprintf(buf, sizeof(buf), "| %s | %.4f%s | %.4f | %.3f | %.4g |\n",
                  result.names[j].c_str(), result.coefficients[j],
                  significance_stars(result.p_values[j]).c_str(),
                  result.std_errors[j], result.t_stats[j],
                  result.p_values[j]);
    os << buf;
  }
  std::snprintf(buf, sizeof(buf),
                "\nR² %.3f | adj. R² %.3f | n %d | F(%d,%d) %.2f%s\n",
                result.r_squared, result.adj_r_squared, result.n, result.f_df1,
                result.f_df2, result.f_statistic,
                significance_stars(result.f_p_value).c_str());
  os << buf;
  os << "\nSignificance: *** p<0.01, ** p<0.05, * p<0.1\n";
  return os.str();
}

nlohmann::json regression_result_to_json(const RegressionResult& r) {
  nlohmann::json coef = nlohmann::json::object();
  for (size_t j = 0; j < r.names.size(); ++j) {
    coef[r.names[j]] = {{"estimate", r.coefficients[j]},
                        {"std_error", r.std_errors[j]},
                        {"t", r.t_stats[j]},
                        {"p", r.p_values[j]}};
  }
  return {{"coefficients", std::move(coef)},
          {"r_squared", r.r_squared},
          {"adj_r_squared", r.adj_r_squared},
          {"f_statistic", r.f_statistic},
          {"f_p_value", r.f_p_value},
          {"f_df", {r.f_df1, r.f_df2}},
          {"n", r.n},
          {"sigma", r.sigma}};
}

nlohmann::json elasticity_to_json(const ElasticityEstimate& e) {
  return {{"package", e.package_label},
          {"scope", to_string(e.purpose_scope)},
          {"value", e.value},
          {"ci_low", e.ci_low},
          {"ci_high", e.ci_high},
          {"n", e.n}};
}

void export_report(const ReportInputs& inputs,
                   const std::filesystem::path& output_dir) {
  std::error_code ec;
  std::filesystem::create_directories(output_dir, ec);
  if (ec) {
    throw std::runtime_error("cannot create report directory " +
                             output_dir.string() + ": " + ec.message());
  }

  for (const auto& label : inputs.package_labels) {
    CellFits package_fits;
    for (const auto& cf : inputs.fits) {
      if (cf.first.package_label == label) package_fits.push_back(cf);
    }
    if (package_fits.empty()) continue;

    // Per-income mean VOT and VOT-income ratio.
    {
      const auto curves = vot_income_curves(package_fits, "package");
      std::ostringstream csv;
      csv << "income,mean_vot,vot_income_ratio\n";
      for (const auto& curve : curves) {
        for (const auto& pt : curve.points) {
          csv << pt.income << ',' << format_double(pt.mean_vot) << ','
              << format_double(pt.mean_vot / pt.income) << '\n';
        }
      }
      write_file(output_dir / ("vot_by_income_" + label + ".csv"), csv.str());
    }

    // Full regression table, CSV and markdown.
    const AssembledRows assembled = assemble_rows(package_fits, label);
    if (assembled.rows.size() > 8) {
      const RegressionResult reg =
          ols_fit(assembled.rows, RegressionSpec::eq_pooled);
      std::ostringstream csv;
      csv << "variable,estimate,std_error,t,p,stars\n";
      for (size_t j = 0; j < reg.names.size(); ++j) {
        csv << reg.names[j] << ',' << format_double(reg.coefficients[j]) << ','
            << format_double(reg.std_errors[j]) << ','
            << format_double(reg.t_stats[j]) << ','
            << format_double(reg.p_values[j]) << ','
            << significance_stars(reg.p_values[j]) << '\n';
      }
      csv << "r_squared," << format_double(reg.r_squared) << ",,,,\n";
      csv << "adj_r_squared," << format_double(reg.adj_r_squared) << ",,,,\n";
      csv << "observations," << reg.n << ",,,,\n";
      csv << "f_statistic," << format_double(reg.f_statistic) << ",F("
          << reg.f_df1 << ";" << reg.f_df2 << "),,"
          << format_double(reg.f_p_value) << ','
          << significance_stars(reg.f_p_value) << '\n';
      write_file(output_dir / ("regression_" + label + ".csv"), csv.str());
      write_file(output_dir / ("regression_" + label + ".md"),
                 render_regression_markdown(
                     reg, "ln(VOT) regression, package " + label));
    }
  }

  // Curves for every grouping factor, across all packages.
  for (const std::string factor :
       {"package", "purpose", "sex", "age", "education"}) {
    const auto curves = vot_income_curves(inputs.fits, factor);
    std::ostringstream csv;
    csv << "factor,level,income,mean_vot,n_cells\n";
    for (const auto& curve : curves) {
      for (const auto& pt : curve.points) {
        csv << factor << ',' << curve.group_level << ',' << pt.income << ','
            << format_double(pt.mean_vot) << ',' << pt.count << '\n';
      }
    }
    write_file(output_dir / ("curves_by_" + factor + ".csv"), csv.str());
  }

  // Elasticities: pooled plus per-purpose scope for every package.
  {
    std::ostringstream csv;
    csv << "package,scope,elasticity,ci_low,ci_high,n\n";
    for (const auto& label : inputs.package_labels) {
      CellFits package_fits;
      for (const auto& cf : inputs.fits) {
        if (cf.first.package_label == label) package_fits.push_back(cf);
      }
      if (package_fits.empty()) continue;
      std::vector<ElasticityEstimate> all =
          elasticities(package_fits, label, false);
      const auto per_purpose = elasticities(package_fits, label, true);
      all.insert(all.end(), per_purpose.begin(), per_purpose.end());
      for (const auto& e : all) {
        csv << e.package_label << ',' << to_string(e.purpose_scope) << ','
            << format_double(e.value) << ',' << format_double(e.ci_low) << ','
            << format_double(e.ci_high) << ',' << e.n << '\n';
      }
    }
    write_file(output_dir / "elasticities.csv", csv.str());
  }

  // Exclusion log across all packages.
  {
    std::ostringstream csv;
    csv << "cell,reason\n";
    for (const auto& label : inputs.package_labels) {
      CellFits package_fits;
      for (const auto& cf : inputs.fits) {
        if (cf.first.package_label == label) package_fits.push_back(cf);
      }
      if (package_fits.empty()) continue;
      for (const auto& ex : assemble_rows(package_fits, label).exclusions) {
        csv << ex.cell.key() << ",\"" << ex.reason << "\"\n";
      }
    }
    write_file(output_dir / "exclusions.csv", csv.str());
  }

  if (inputs.metadata != nullptr) {
    write_file(output_dir / "metadata.json", inputs.metadata->dump(2) + "\n");
  }
}

}  // namespace votkit
