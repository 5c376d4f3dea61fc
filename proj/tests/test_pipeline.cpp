#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "votkit/errors.hpp"
#include "votkit/pipeline.hpp"

using namespace votkit;
namespace fs = std::filesystem;

namespace {

nlohmann::json smoke_config() {
  return nlohmann::json{
      {"run_id", "t"},
      {"seed", 99},
      {"responses_per_cell_per_set", 4},
      {"min_rankings_per_cell", 4},
      {"grid",
       {{"package", {"ratio-29.1"}},
        {"purpose", {"business"}},
        {"income", {"15", "50"}},
        {"sex", {"male"}},
        {"age", {"20s"}},
        {"education", {"high_school"}}}},
      {"provider", {{"kind", "synthetic"}, {"concurrency_cap", 2}}},
      {"synthetic_rule",
       {{"base_beta", {{"cost", -0.30}, {"time", -0.05}, {"truck", -0.50}}},
        {"income_exponent", 1.0},
        {"noise_seed", 321}}}};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Emits a malformed answer for every k-th draw, otherwise delegates.
class FaultyRespondent : public Respondent {
 public:
  FaultyRespondent(SyntheticRule rule, int every)
      : inner_(std::move(rule)), every_(every) {}
  std::string answer(const AnswerRequest& request,
                     AnswerMetadata& metadata) override {
    ++calls_;
    if (calls_ % every_ == 0) {
      metadata.model = "faulty";
      return "I refuse to rank anything today.";
    }
    return inner_.answer(request, metadata);
  }
  int calls() const { return calls_; }

 private:
  SyntheticRespondent inner_;
  int every_;
  int calls_ = 0;
};

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("plan_run on the full design counts 92160 requests") {
  nlohmann::json config{{"seed", 1}};
  const RunManifest m = plan_run(config);
  CHECK(m.planned_requests() == 768 * 2 * 60);
  CHECK(m.responses_per_cell_per_set == 60);
  CHECK(m.template_version == "v1");
  CHECK(m.cells().size() == 768);
}

TEST_CASE("plan_run on the smoke grid counts 2*2*2*4 requests") {
  // 1 package x 1 purpose x 2 incomes x 1x1x1 demographics = 2 cells
  const RunManifest m = plan_run(smoke_config());
  CHECK(m.cells().size() == 2);
  CHECK(m.planned_requests() == 2 * 2 * 4);
}

TEST_CASE("plan_run with defaults elsewhere matches the documented example") {
  // 1 package, 1 purpose, 1 income, defaults elsewhere, 2 responses
  nlohmann::json config{
      {"responses_per_cell_per_set", 2},
      {"grid",
       {{"package", {"calfee-original"}},
        {"purpose", {"leisure"}},
        {"income", {"25"}}}}};
  const RunManifest m = plan_run(config);
  CHECK(m.cells().size() == 8);
  CHECK(m.planned_requests() == 8 * 2 * 2);
}

TEST_CASE("plan_run is deterministic apart from run id and timestamp") {
  const RunManifest a = plan_run(smoke_config());
  const RunManifest b = plan_run(smoke_config());
  nlohmann::json ja = manifest_to_json(a);
  nlohmann::json jb = manifest_to_json(b);
  ja.erase("created_at");
  jb.erase("created_at");
  CHECK(ja.dump() == jb.dump());
}

TEST_CASE("plan_run reports every config problem at once") {
  nlohmann::json config{
      {"responses_per_cell_per_set", 0},
      {"template_version", "v9"},
      {"grid", {{"package", {"no-such-package"}}, {"weather", {"wet"}}}},
      {"provider", {{"kind", "remote"}}}};
  try {
    plan_run(config);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    CHECK(what.find("responses_per_cell_per_set") != std::string::npos);
    CHECK(what.find("template") != std::string::npos);
    CHECK(what.find("no-such-package") != std::string::npos);
    CHECK(what.find("weather") != std::string::npos);
    CHECK(what.find("model_name") != std::string::npos);
    CHECK(what.find("endpoint_url") != std::string::npos);
    CHECK(what.find("api_key_env") != std::string::npos);
  }
}

TEST_CASE("manifest and records round-trip through JSON") {
  const RunManifest m = plan_run(smoke_config());
  const RunManifest back = manifest_from_json(manifest_to_json(m));
  CHECK(manifest_to_json(back).dump() == manifest_to_json(m).dump());

  ResponseRecord r;
  r.run_id = "t";
  r.cell = m.cells()[0];
  r.set_index = 2;
  r.draw_index = 31;
  r.raw = "RANKING: nonsense";
  r.parsed = parse_response(r.raw);
  r.provider_metadata = {"synthetic", 1.5, 2};
  r.timestamp = "2026-01-01T00:00:00Z";
  const ResponseRecord rback = record_from_json(record_to_json(r));
  CHECK(rback.key() == r.key());
  CHECK(record_to_json(rback).dump() == record_to_json(r).dump());
}

TEST_CASE("execute fills the store and resumes idempotently") {
  TempDir tmp("votkit_pipeline_exec");
  const RunManifest manifest = plan_run(smoke_config());
  auto respondent = make_respondent(manifest);

  // First pass: stop halfway through ("kill at 50%").
  ResponseStore store(tmp.path / manifest.run_id);
  ExecuteOptions half;
  half.max_new_records = manifest.planned_requests() / 2;
  const ExecuteReport first = execute(manifest, *respondent, store, half);
  CHECK(first.new_records == manifest.planned_requests() / 2);

  const std::string prefix = slurp(store.responses_path());

  // Second pass: complete.
  const ExecuteReport second = execute(manifest, *respondent, store);
  CHECK(second.already_present == first.new_records);
  CHECK(second.new_records ==
        manifest.planned_requests() - first.new_records);

  // append-only: the first pass's bytes are an untouched prefix
  const std::string full = slurp(store.responses_path());
  CHECK(full.substr(0, prefix.size()) == prefix);

  // exactly one record per planned key
  std::set<std::string> keys;
  for (const auto& r : store.load()) keys.insert(r.key());
  CHECK(static_cast<std::int64_t>(keys.size()) ==
        manifest.planned_requests());
  CHECK(store.load().size() == keys.size());

  // a third execute is a no-op
  const ExecuteReport third = execute(manifest, *respondent, store);
  CHECK(third.new_records == 0);
  CHECK(third.already_present == manifest.planned_requests());

  // synthetic answers never fail to parse
  CHECK(first.parse_failures + second.parse_failures == 0);

  // interrupted-then-resumed estimates match an uninterrupted run
  ResponseStore fresh(tmp.path / "uninterrupted");
  auto respondent2 = make_respondent(manifest);
  execute(manifest, *respondent2, fresh);
  const auto resumed = estimate_all(store.load(), manifest);
  const auto straight = estimate_all(fresh.load(), manifest);
  CHECK(estimate_outcome_to_json(resumed).dump() ==
        estimate_outcome_to_json(straight).dump());
}

TEST_CASE("fault injection is counted exactly and excluded downstream") {
  TempDir tmp("votkit_pipeline_fault");
  nlohmann::json config = smoke_config();
  config["responses_per_cell_per_set"] = 10;
  config["min_rankings_per_cell"] = 10;
  const RunManifest manifest = plan_run(config);

  FaultyRespondent faulty(*manifest.synthetic_rule, 10);  // 1 bad in 10
  ResponseStore store(tmp.path / manifest.run_id);
  const ExecuteReport report = execute(manifest, faulty, store);
  CHECK(report.new_records == 40);
  CHECK(report.parse_failures == 4);

  // bad answers are stored verbatim, flagged as failures
  int stored_failures = 0;
  for (const auto& r : store.load()) {
    if (!parse_ok(r.parsed)) {
      ++stored_failures;
      CHECK(r.raw == "I refuse to rank anything today.");
    }
  }
  CHECK(stored_failures == 4);
}

TEST_CASE("estimate_all recovers the synthetic rule per cell") {
  TempDir tmp("votkit_pipeline_est");
  nlohmann::json config = smoke_config();
  config["responses_per_cell_per_set"] = 60;  // 120 rankings per cell
  config["min_rankings_per_cell"] = 30;
  const RunManifest manifest = plan_run(config);
  auto respondent = make_respondent(manifest);
  ResponseStore store(tmp.path / manifest.run_id);
  execute(manifest, *respondent, store);

  const EstimateOutcome outcome = estimate_all(store.load(), manifest);
  REQUIRE(outcome.fits.size() == 2);
  CHECK(outcome.exclusions.empty());
  for (const auto& [cell, fit] : outcome.fits) {
    REQUIRE(fit.converged);
    REQUIRE(fit.vot.has_value());
    const double target = manifest.synthetic_rule->analytic_vot(cell);
    CHECK(std::abs(*fit.vot - target) / target < 0.15);
    CHECK(fit.n_observations == 120);
  }
}

TEST_CASE("cells starved of parseable answers are skipped with a reason") {
  TempDir tmp("votkit_pipeline_skip");
  const RunManifest manifest = plan_run(smoke_config());

  // every answer malformed -> every cell short of the minimum
  FaultyRespondent all_bad(*manifest.synthetic_rule, 1);
  ResponseStore store(tmp.path / manifest.run_id);
  execute(manifest, all_bad, store);

  const EstimateOutcome outcome = estimate_all(store.load(), manifest);
  CHECK(outcome.fits.empty());
  REQUIRE(outcome.exclusions.size() == 2);
  CHECK(outcome.exclusions[0].reason.find("minimum") != std::string::npos);
}

TEST_CASE("records from a different run are refused") {
  TempDir tmp("votkit_pipeline_integrity");
  const RunManifest manifest = plan_run(smoke_config());
  auto respondent = make_respondent(manifest);
  ResponseStore store(tmp.path / manifest.run_id);
  ExecuteOptions one;
  one.max_new_records = 1;
  execute(manifest, *respondent, store, one);

  auto records = store.load();
  REQUIRE(!records.empty());
  records[0].run_id = "other-run";
  CHECK_THROWS_AS(estimate_all(records, manifest), DataIntegrityError);
}

TEST_CASE("a torn trailing line is tolerated and never merged into") {
  TempDir tmp("votkit_pipeline_torn");
  const RunManifest manifest = plan_run(smoke_config());
  auto respondent = make_respondent(manifest);
  ResponseStore store(tmp.path / manifest.run_id);
  ExecuteOptions two;
  two.max_new_records = 2;
  execute(manifest, *respondent, store, two);

  {
    std::ofstream out(store.responses_path(),
                      std::ios::binary | std::ios::app);
    out << "{\"run_id\": \"t\", \"cell\"";  // simulated torn write
  }
  CHECK(store.load().size() == 2);  // torn line skipped

  const ExecuteReport rest = execute(manifest, *respondent, store);
  CHECK(rest.new_records == manifest.planned_requests() - 2);
  CHECK(store.load().size() ==
        static_cast<size_t>(manifest.planned_requests()));
}

TEST_CASE("NO_NETWORK forces the synthetic respondent") {
  nlohmann::json config = smoke_config();
  config["provider"] = {{"kind", "remote"},
                        {"model_name", "gpt-x"},
                        {"endpoint_url", "https://example.invalid/v1"},
                        {"api_key_env", "NOPE"}};
  const RunManifest manifest = plan_run(config);
  setenv("NO_NETWORK", "1", 1);
  auto respondent = make_respondent(manifest);
  unsetenv("NO_NETWORK");
  CHECK(dynamic_cast<SyntheticRespondent*>(respondent.get()) != nullptr);
}

}  // TEST_SUITE
