// Command-line front end: design inspection, experiment execution,
// estimation, analysis and report export, plus a built-in oracle selftest.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include <nlohmann/json.hpp>

#include "votkit/analysis.hpp"
#include "votkit/design.hpp"
#include "votkit/errors.hpp"
#include "votkit/estimator.hpp"
#include "votkit/pipeline.hpp"
#include "votkit/respondents.hpp"
#include "votkit/survey.hpp"

namespace fs = std::filesystem;
using namespace votkit;

namespace {

std::string one_line(std::string msg) {
  std::replace(msg.begin(), msg.end(), '\n', ';');
  return msg;
}

int guarded(const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "error category=config: " << one_line(e.what()) << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error category=config: " << one_line(e.what()) << "\n";
    return 3;
  } catch (const DataIntegrityError& e) {
    std::cerr << "error category=data: " << one_line(e.what()) << "\n";
    return 4;
  } catch (const TransportError& e) {
    std::cerr << "error category=transport: " << one_line(e.what()) << "\n";
    return 5;
  } catch (const RequestError& e) {
    std::cerr << "error category=request: " << one_line(e.what()) << "\n";
    return 5;
  } catch (const IdentificationError& e) {
    std::cerr << "error category=estimation: " << one_line(e.what()) << "\n";
    return 6;
  } catch (const UndefinedRatioError& e) {
    std::cerr << "error category=estimation: " << one_line(e.what()) << "\n";
    return 6;
  } catch (const std::exception& e) {
    std::cerr << "error category=internal: " << one_line(e.what()) << "\n";
    return 1;
  }
}

void write_json_file(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  nlohmann::json j;
  in >> j;
  return j;
}

RunManifest load_manifest(const fs::path& runs_dir, const std::string& run_id) {
  const fs::path manifest_path = runs_dir / run_id / "manifest.json";
  if (!fs::exists(manifest_path)) {
    throw ConfigError("no manifest at " + manifest_path.string() +
                      "; run `votkit run` first or check --resume/--out");
  }
  return manifest_from_json(read_json_file(manifest_path));
}

std::string resolve_run_id(const fs::path& runs_dir, std::string run_id) {
  if (!run_id.empty()) return run_id;
  std::vector<std::string> found;
  if (fs::exists(runs_dir)) {
    for (const auto& entry : fs::directory_iterator(runs_dir)) {
      if (entry.is_directory() &&
          fs::exists(entry.path() / "manifest.json")) {
        found.push_back(entry.path().filename().string());
      }
    }
  }
  if (found.size() == 1) return found[0];
  if (found.empty()) {
    throw ConfigError("no runs under " + runs_dir.string());
  }
  std::sort(found.begin(), found.end());
  std::string msg = "multiple runs under " + runs_dir.string() +
                    "; pick one with --resume:";
  for (const auto& id : found) msg += " " + id;
  throw ConfigError(msg);
}

// ---------------------------------------------------------------------------
// selftest: fast independent checks of the estimation core.
// ---------------------------------------------------------------------------

RankingObservation random_observation(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> cost(0.0, 20.0);
  std::uniform_int_distribution<int> time(5, 60);
  std::uniform_int_distribution<int> truck(0, 1);
  RankingObservation obs;
  obs.attributes.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    obs.attributes.row(i) << cost(rng), static_cast<double>(time(rng)),
        static_cast<double>(truck(rng));
  }
  obs.order.resize(n);
  for (int i = 0; i < n; ++i) obs.order[i] = i + 1;
  std::shuffle(obs.order.begin(), obs.order.end(), rng);
  return obs;
}

bool selftest_permutation_sum(std::ostream& os) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> coef(0.0, 0.3);
  double worst = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    RankingObservation obs = random_observation(4, rng);
    const Coefficients beta{coef(rng), coef(rng), coef(rng)};
    std::vector<int> ids = {1, 2, 3, 4};
    double total = 0.0;
    std::sort(ids.begin(), ids.end());
    do {
      obs.order = ids;
      total += ranking_probability(beta, obs);
    } while (std::next_permutation(ids.begin(), ids.end()));
    worst = std::max(worst, std::abs(total - 1.0));
  }
  const bool ok = worst < 1e-10;
  os << (ok ? "ok" : "FAIL") << "  permutation-sum (4 alternatives, 10 "
     << "random coefficient draws); worst |1-sum| = " << worst << "\n";
  return ok;
}

bool selftest_gradient(std::ostream& os) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> coef(0.0, 0.2);
  std::vector<RankingObservation> data;
  for (int i = 0; i < 60; ++i) data.push_back(random_observation(13, rng));
  double worst = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    const Coefficients beta{coef(rng), coef(rng), coef(rng)};
    const Eigen::Vector3d g = gradient(beta, data);
    Eigen::Vector3d fd;
    const double h = 1e-5;
    for (int j = 0; j < 3; ++j) {
      Eigen::Vector3d hi = beta.vec(), lo = beta.vec();
      hi[j] += h;
      lo[j] -= h;
      fd[j] = (log_likelihood(Coefficients::from_vec(hi), data) -
               log_likelihood(Coefficients::from_vec(lo), data)) /
              (2 * h);
    }
    worst = std::max(worst, (g - fd).norm() / std::max(1.0, fd.norm()));
  }
  const bool ok = worst < 1e-6;
  os << (ok ? "ok" : "FAIL") << "  gradient vs central differences; worst "
     << "relative error = " << worst << "\n";
  return ok;
}

bool selftest_recovery(std::ostream& os) {
  const Coefficients truth{-0.30, -0.05, -0.50};
  const ChoicePackage package = builtin_packages()[1];
  std::mt19937_64 rng(13);
  std::vector<RankingObservation> data;
  for (int i = 0; i < 1500; ++i) {
    const ChoiceSet& set = package.set(i % 2 + 1);
    Eigen::Matrix<double, Eigen::Dynamic, 3> X(kNumAlternatives, 3);
    for (const auto& a : set.alternatives) {
      X.row(a.id - 1) << a.cost_usd(), static_cast<double>(a.time_min),
          a.trucks ? 1.0 : 0.0;
    }
    RankingObservation obs;
    obs.attributes = X;
    obs.order = sample_plackett_luce(X * truth.vec(), rng);
    data.push_back(std::move(obs));
  }
  const FitResult result = fit(data);
  bool ok = result.converged && result.std_errors.has_value();
  if (ok) {
    const Eigen::Vector3d err = result.beta_hat.vec() - truth.vec();
    for (int j = 0; j < 3; ++j) {
      ok = ok && std::abs(err[j]) <= 4.0 * (*result.std_errors)[j];
    }
    ok = ok && result.vot.has_value() &&
         std::abs(*result.vot - 10.0) / 10.0 < 0.10;
  }
  os << (ok ? "ok" : "FAIL")
     << "  parameter recovery (1500 rankings); beta = ("
     << result.beta_hat.cost << ", " << result.beta_hat.time << ", "
     << result.beta_hat.truck << "), vot = "
     << (result.vot ? *result.vot : 0.0) << "\n";
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stated-preference route-ranking experiments and value of "
               "travel time estimation"};
  app.require_subcommand(1);

  std::string config_path;
  std::string provider_override;
  std::string resume_id;
  std::string out_dir = "runs";
  std::int64_t seed = -1;
  std::int64_t max_requests = 0;

  auto add_common = [&](CLI::App* cmd, bool with_config) {
    if (with_config) {
      cmd->add_option("--config", config_path, "JSON config file");
      cmd->add_option("--provider", provider_override,
                      "override provider kind (synthetic|remote)")
          ->check(CLI::IsMember({"synthetic", "remote"}));
      cmd->add_option("--seed", seed, "override rng seed");
    }
    cmd->add_option("--resume", resume_id, "existing run id");
    cmd->add_option("--out", out_dir, "runs directory (default: runs)");
  };

  auto* cmd_design = app.add_subcommand(
      "design", "print the choice packages, trade-off ratios and grid");
  std::string design_out;
  cmd_design->add_option("--out", design_out,
                         "also write packages.json/grid.json here");

  auto* cmd_run = app.add_subcommand("run", "plan and execute an experiment");
  add_common(cmd_run, true);
  cmd_run->add_option("--max-requests", max_requests,
                      "budget: stop after this many new records");

  auto* cmd_estimate =
      app.add_subcommand("estimate", "fit the ranking model per cell");
  add_common(cmd_estimate, false);

  auto* cmd_analyze = app.add_subcommand(
      "analyze", "elasticity regressions and VOT-income curves");
  add_common(cmd_analyze, false);

  auto* cmd_report =
      app.add_subcommand("report", "write the CSV/markdown report bundle");
  add_common(cmd_report, false);

  auto* cmd_selftest =
      app.add_subcommand("selftest", "run the estimation oracle suite");

  CLI11_PARSE(app, argc, argv);

  if (cmd_design->parsed()) {
    return guarded([&] {
      std::cout << "choice settings:\n";
      for (const auto& p : standard_packages()) {
        std::cout << "  " << p.label << ": declared ratio " << p.declared_ratio
                  << " USD/h, computed trade-off ratio "
                  << average_tradeoff_ratio(p) << " USD/h\n";
      }
      const auto cells = factorial_cells(full_grid());
      std::cout << "full factorial grid: " << cells.size() << " cells\n";
      if (!design_out.empty()) {
        fs::create_directories(design_out);
        nlohmann::json packages = nlohmann::json::array();
        for (const auto& p : standard_packages()) {
          packages.push_back(package_to_json(p));
        }
        write_json_file(fs::path(design_out) / "packages.json", packages);
        write_json_file(fs::path(design_out) / "grid.json",
                        grid_to_json(full_grid()));
        std::ofstream tmpl(fs::path(design_out) / "prompt_v1.txt",
                           std::ios::binary);
        tmpl << template_text("v1");
        std::cout << "wrote " << design_out << "/packages.json, grid.json, "
                  << "prompt_v1.txt\n";
      }
    });
  }

  if (cmd_run->parsed()) {
    return guarded([&] {
      RunManifest manifest;
      if (!resume_id.empty() &&
          fs::exists(fs::path(out_dir) / resume_id / "manifest.json")) {
        manifest = load_manifest(out_dir, resume_id);
      } else {
        if (config_path.empty()) {
          throw ConfigError("run needs --config (or --resume with an "
                            "existing manifest)");
        }
        nlohmann::json config = read_json_file(config_path);
        if (seed >= 0) config["seed"] = seed;
        if (!provider_override.empty()) {
          if (!config.contains("provider")) {
            config["provider"] = nlohmann::json::object();
          }
          config["provider"]["kind"] = provider_override;
        }
        if (!resume_id.empty()) config["run_id"] = resume_id;
        manifest = plan_run(config);
        const fs::path run_dir = fs::path(out_dir) / manifest.run_id;
        if (fs::exists(run_dir / "manifest.json")) {
          throw ConfigError("run id '" + manifest.run_id +
                            "' already exists; use --resume " +
                            manifest.run_id);
        }
        fs::create_directories(run_dir);
        write_json_file(run_dir / "manifest.json", manifest_to_json(manifest));
      }
      if (!provider_override.empty()) {
        manifest.provider.kind = provider_kind_from_string(provider_override);
      }
      if (manifest.provider.kind == ProviderKind::remote &&
          network_disabled()) {
        std::cerr << "NO_NETWORK=1: falling back to the synthetic "
                  << "respondent\n";
      }

      ResponseStore store(fs::path(out_dir) / manifest.run_id);
      auto respondent = make_respondent(manifest);
      ExecuteOptions options;
      options.max_new_records = max_requests;
      std::int64_t last_printed = -1;
      options.progress = [&](std::int64_t done, std::int64_t total) {
        if (total >= 20 && done % (total / 20) != 0 && done != total) return;
        if (done == last_printed) return;
        last_printed = done;
        std::cerr << "progress: " << done << "/" << total << "\n";
      };
      const ExecuteReport report = execute(manifest, *respondent, store, options);
      std::cout << "run " << manifest.run_id << ": planned "
                << report.planned << ", already present "
                << report.already_present << ", new " << report.new_records
                << ", parse failures " << report.parse_failures
                << ", transport failures " << report.transport_failures
                << "\n";
      if (report.transport_failures > 0) {
        throw TransportError(
            std::to_string(report.transport_failures) +
            " request(s) failed; see transport_errors.log, then re-run "
            "with --resume " + manifest.run_id);
      }
    });
  }

  if (cmd_estimate->parsed()) {
    return guarded([&] {
      const std::string run_id = resolve_run_id(out_dir, resume_id);
      const RunManifest manifest = load_manifest(out_dir, run_id);
      ResponseStore store(fs::path(out_dir) / run_id);
      const EstimateOutcome outcome = estimate_all(store.load(), manifest);
      write_json_file(fs::path(out_dir) / run_id / "fits.json",
                      estimate_outcome_to_json(outcome));
      std::cout << "estimated " << outcome.fits.size() << " cells ("
                << outcome.exclusions.size() << " excluded) -> "
                << (fs::path(out_dir) / run_id / "fits.json").string()
                << "\n";
    });
  }

  if (cmd_analyze->parsed() || cmd_report->parsed()) {
    const bool full_report = cmd_report->parsed();
    return guarded([&] {
      const std::string run_id = resolve_run_id(out_dir, resume_id);
      const RunManifest manifest = load_manifest(out_dir, run_id);
      const fs::path run_dir = fs::path(out_dir) / run_id;
      if (!fs::exists(run_dir / "fits.json")) {
        throw ConfigError("no fits.json for run '" + run_id +
                          "'; run `votkit estimate` first");
      }
      const EstimateOutcome outcome =
          estimate_outcome_from_json(read_json_file(run_dir / "fits.json"));
      if (outcome.fits.empty()) {
        throw DataIntegrityError("fits.json holds no converged cells");
      }

      std::vector<std::string> labels;
      for (const auto& level : manifest.grid.factors[0].second) {
        labels.push_back(level);
      }

      if (full_report) {
        nlohmann::json metadata{
            {"run_id", manifest.run_id},
            {"template_version", manifest.template_version},
            {"provider", provider_config_to_json(manifest.provider)},
            {"rng_seed", manifest.rng_seed},
            {"created_at", manifest.created_at},
            {"exported_at", std::string{}},  // filled below
            {"cells_fit", outcome.fits.size()},
            {"cells_excluded", outcome.exclusions.size()}};
        metadata["exported_at"] = [] {
          std::time_t t = std::time(nullptr);
          std::tm tm{};
          gmtime_r(&t, &tm);
          char buf[32];
          std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
          return std::string(buf);
        }();
        ReportInputs inputs{outcome.fits, labels, &metadata};
        export_report(inputs, run_dir / "report");
        std::cout << "report bundle -> " << (run_dir / "report").string()
                  << "\n";
        return;
      }

      nlohmann::json analysis{{"run_id", manifest.run_id},
                              {"packages", nlohmann::json::array()}};
      for (const auto& label : labels) {
        CellFits package_fits;
        for (const auto& cf : outcome.fits) {
          if (cf.first.package_label == label) package_fits.push_back(cf);
        }
        if (package_fits.empty()) continue;
        const AssembledRows rows = assemble_rows(package_fits, label);
        nlohmann::json entry{{"package", label},
                             {"rows", rows.rows.size()},
                             {"excluded", rows.exclusions.size()}};
        if (rows.rows.size() > 8) {
          const RegressionResult reg =
              ols_fit(rows.rows, RegressionSpec::eq_pooled);
          entry["regression"] = regression_result_to_json(reg);
          std::cout << render_regression_markdown(
                           reg, "ln(VOT) regression, package " + label)
                    << "\n";
        }
        nlohmann::json elas = nlohmann::json::array();
        for (const auto& e : elasticities(package_fits, label, false)) {
          elas.push_back(elasticity_to_json(e));
        }
        for (const auto& e : elasticities(package_fits, label, true)) {
          elas.push_back(elasticity_to_json(e));
        }
        entry["elasticities"] = std::move(elas);
        analysis["packages"].push_back(std::move(entry));
      }
      write_json_file(run_dir / "analysis.json", analysis);
      std::cout << "analysis -> " << (run_dir / "analysis.json").string()
                << "\n";
    });
  }

  if (cmd_selftest->parsed()) {
    return guarded([&] {
      bool ok = true;
      ok &= selftest_permutation_sum(std::cout);
      ok &= selftest_gradient(std::cout);
      ok &= selftest_recovery(std::cout);
      if (!ok) throw std::runtime_error("selftest failed");
      std::cout << "selftest passed\n";
    });
  }

  return 0;
}
