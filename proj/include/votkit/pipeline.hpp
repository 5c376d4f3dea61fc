#ifndef VOTKIT_PIPELINE_HPP
#define VOTKIT_PIPELINE_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "votkit/analysis.hpp"
#include "votkit/design.hpp"
#include "votkit/respondents.hpp"
#include "votkit/survey.hpp"

namespace votkit {

struct RunManifest {
  std::string run_id;
  FactorGrid grid;
  int responses_per_cell_per_set = 60;
  ProviderConfig provider;
  std::optional<SyntheticRule> synthetic_rule;  // present for synthetic runs
  std::string template_version = "v1";
  std::string created_at;  // ISO 8601 UTC
  std::uint64_t rng_seed = 0;
  int min_rankings_per_cell = 30;

  std::vector<ScenarioCell> cells() const { return factorial_cells(grid); }
  std::int64_t planned_requests() const;
};

nlohmann::json manifest_to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const nlohmann::json& j);

struct ResponseRecord {
  std::string run_id;
  ScenarioCell cell;
  int set_index = 0;
  int draw_index = 0;
  std::string raw;
  ParseResult parsed{ParseFailure{}};
  AnswerMetadata provider_metadata;
  std::string timestamp;

  // The resumability key: unique per (run, cell, set, draw).
  std::string key() const;
};

nlohmann::json record_to_json(const ResponseRecord& record);
ResponseRecord record_from_json(const nlohmann::json& j);

// Append-only JSONL store under runs/<run_id>/. Existing bytes are never
// rewritten; loading tolerates (and reports) a torn trailing line from a
// killed writer.
class ResponseStore {
 public:
  explicit ResponseStore(std::filesystem::path run_dir);

  const std::filesystem::path& run_dir() const { return run_dir_; }
  std::filesystem::path responses_path() const;

  std::vector<ResponseRecord> load() const;
  // Keys present in the store (valid records only).
  std::vector<std::string> load_keys() const;
  void append(const ResponseRecord& record);

 private:
  std::filesystem::path run_dir_;
};

// Parse and validate a config document. Unknown levels, bad provider
// fields and inconsistent counts are all reported together in one error.
RunManifest plan_run(const nlohmann::json& config);
RunManifest plan_run_file(const std::filesystem::path& config_path);

struct ExecuteOptions {
  // Stop after this many new records this invocation (0 = unlimited); a
  // later execute resumes from the store. Used for budgeted runs.
  std::int64_t max_new_records = 0;
  std::function<void(std::int64_t done, std::int64_t total)> progress;
};

struct ExecuteReport {
  std::int64_t planned = 0;
  std::int64_t already_present = 0;
  std::int64_t new_records = 0;
  std::int64_t parse_failures = 0;
  std::int64_t transport_failures = 0;
};

// Renders, asks and parses every (cell, set, draw) key missing from the
// store, fanning out across workers bounded by the provider concurrency
// cap. Transport failures are logged per key (transport_errors.log) and
// left missing so a resume retries them; the run aborts only on storage
// failure.
ExecuteReport execute(const RunManifest& manifest, Respondent& respondent,
                      ResponseStore& store, const ExecuteOptions& options = {});

struct EstimateOutcome {
  CellFits fits;  // manifest cell order
  std::vector<Exclusion> exclusions;
};

// Pools every successfully parsed ranking of both choice sets per cell and
// fits the ranking model; cells with fewer parsed rankings than the
// manifest minimum are skipped with a logged reason.
EstimateOutcome estimate_all(const std::vector<ResponseRecord>& records,
                             const RunManifest& manifest);

nlohmann::json estimate_outcome_to_json(const EstimateOutcome& outcome);
EstimateOutcome estimate_outcome_from_json(const nlohmann::json& j);

// True when the environment forbids remote traffic (NO_NETWORK=1).
bool network_disabled();

// Build the respondent the manifest asks for, honoring the NO_NETWORK
// guard by substituting the synthetic respondent.
std::unique_ptr<Respondent> make_respondent(const RunManifest& manifest);

}  // namespace votkit

#endif  // VOTKIT_PIPELINE_HPP
