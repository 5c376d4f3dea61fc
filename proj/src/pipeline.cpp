#include "votkit/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "votkit/errors.hpp"
#include "votkit/numeric.hpp"

namespace votkit {

namespace {

std::string iso8601_utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string default_run_id(std::uint64_t seed) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::strftime(buf, sizeof(buf), "run-%Y%m%d-%H%M%S", &tm);
  std::ostringstream os;
  os << buf << '-' << std::hex
     << (splitmix64(seed ^ static_cast<std::uint64_t>(t)) & 0xffffffffull);
  return os.str();
}

}  // namespace

std::int64_t RunManifest::planned_requests() const {
  std::int64_t n_cells = 1;
  for (const auto& [name, levels] : grid.factors) {
    n_cells *= static_cast<std::int64_t>(levels.size());
  }
  return n_cells * 2 * responses_per_cell_per_set;
}

nlohmann::json manifest_to_json(const RunManifest& m) {
  nlohmann::json j{{"run_id", m.run_id},
                   {"grid", grid_to_json(m.grid)},
                   {"responses_per_cell_per_set", m.responses_per_cell_per_set},
                   {"provider", provider_config_to_json(m.provider)},
                   {"template_version", m.template_version},
                   {"created_at", m.created_at},
                   {"rng_seed", m.rng_seed},
                   {"min_rankings_per_cell", m.min_rankings_per_cell}};
  if (m.synthetic_rule) {
    j["synthetic_rule"] = synthetic_rule_to_json(*m.synthetic_rule);
  }
  return j;
}

RunManifest manifest_from_json(const nlohmann::json& j) {
  RunManifest m;
  m.run_id = j.at("run_id").get<std::string>();
  m.grid = grid_from_json(j.at("grid"));
  m.responses_per_cell_per_set = j.at("responses_per_cell_per_set").get<int>();
  m.provider = provider_config_from_json(j.at("provider"));
  if (j.contains("synthetic_rule")) {
    m.synthetic_rule = synthetic_rule_from_json(j.at("synthetic_rule"));
  }
  m.template_version = j.at("template_version").get<std::string>();
  m.created_at = j.at("created_at").get<std::string>();
  m.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  m.min_rankings_per_cell = j.value("min_rankings_per_cell", 30);
  return m;
}

std::string ResponseRecord::key() const {
  std::ostringstream os;
  os << cell.key() << '|' << set_index << '|' << draw_index;
  return os.str();
}

nlohmann::json record_to_json(const ResponseRecord& r) {
  nlohmann::json parsed;
  if (parse_ok(r.parsed)) {
    const auto& ok = std::get<RankingResponse>(r.parsed);
    parsed = {{"ok", true}, {"order", ok.order}, {"reason", ok.reason}};
  } else {
    const auto& f = std::get<ParseFailure>(r.parsed);
    parsed = {{"ok", false},
              {"kind", to_string(f.kind)},
              {"detail", f.detail}};
  }
  return {{"run_id", r.run_id},
          {"cell", cell_to_json(r.cell)},
          {"set_index", r.set_index},
          {"draw_index", r.draw_index},
          {"raw", r.raw},
          {"parsed", std::move(parsed)},
          {"provider",
           {{"model", r.provider_metadata.model},
            {"latency_ms", r.provider_metadata.latency_ms},
            {"retries", r.provider_metadata.retries}}},
          {"timestamp", r.timestamp}};
}

ResponseRecord record_from_json(const nlohmann::json& j) {
  ResponseRecord r;
  r.run_id = j.at("run_id").get<std::string>();
  r.cell = cell_from_json(j.at("cell"));
  r.set_index = j.at("set_index").get<int>();
  r.draw_index = j.at("draw_index").get<int>();
  r.raw = j.at("raw").get<std::string>();
  const auto& parsed = j.at("parsed");
  if (parsed.at("ok").get<bool>()) {
    RankingResponse ok;
    ok.order = parsed.at("order").get<std::vector<int>>();
    ok.reason = parsed.value("reason", std::string{});
    r.parsed = std::move(ok);
  } else {
    ParseFailure f;
    f.kind = parse_failure_kind_from_string(parsed.at("kind").get<std::string>());
    f.detail = parsed.value("detail", std::string{});
    f.raw = r.raw;
    r.parsed = std::move(f);
  }
  r.provider_metadata.model = j.at("provider").value("model", std::string{});
  r.provider_metadata.latency_ms = j.at("provider").value("latency_ms", 0.0);
  r.provider_metadata.retries = j.at("provider").value("retries", 0);
  r.timestamp = j.value("timestamp", std::string{});
  return r;
}

ResponseStore::ResponseStore(std::filesystem::path run_dir)
    : run_dir_(std::move(run_dir)) {
  std::error_code ec;
  std::filesystem::create_directories(run_dir_, ec);
  if (ec) {
    throw std::runtime_error("cannot create run directory " +
                             run_dir_.string() + ": " + ec.message());
  }
}

std::filesystem::path ResponseStore::responses_path() const {
  return run_dir_ / "responses.jsonl";
}

std::vector<ResponseRecord> ResponseStore::load() const {
  std::vector<ResponseRecord> records;
  std::ifstream in(responses_path(), std::ios::binary);
  if (!in) return records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      records.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception&) {
      // A torn trailing line from a killed writer carries no key; skip it.
      // Mid-file garbage would indicate real corruption, but recovering
      // the valid records is still the most useful behavior.
      continue;
    }
  }
  return records;
}

std::vector<std::string> ResponseStore::load_keys() const {
  std::vector<std::string> keys;
  for (const auto& r : load()) keys.push_back(r.key());
  return keys;
}

void ResponseStore::append(const ResponseRecord& record) {
  // If a killed writer left a torn line, terminate it first so the next
  // record starts on a fresh line; existing bytes are never rewritten.
  bool needs_newline = false;
  {
    std::ifstream in(responses_path(), std::ios::binary | std::ios::ate);
    if (in && in.tellg() > 0) {
      in.seekg(-1, std::ios::end);
      char last = '\n';
      in.get(last);
      needs_newline = last != '\n';
    }
  }
  std::ofstream out(responses_path(), std::ios::binary | std::ios::app);
  if (!out) {
    throw std::runtime_error("cannot open store for append: " +
                             responses_path().string());
  }
  if (needs_newline) out << '\n';
  out << record_to_json(record).dump() << '\n';
  if (!out.flush()) {
    throw std::runtime_error("store append failed: " +
                             responses_path().string());
  }
}

namespace {

// Collect every config problem before failing, so one round trip fixes all.
struct Problems {
  std::vector<std::string> items;
  void add(std::string p) { items.push_back(std::move(p)); }
  void raise_if_any() const {
    if (items.empty()) return;
    std::string msg = "invalid config:";
    for (const auto& p : items) msg += "\n  - " + p;
    throw ConfigError(msg);
  }
};

std::vector<std::string> grid_levels(const nlohmann::json& grid,
                                     const std::string& factor,
                                     const std::vector<std::string>& fallback,
                                     Problems& problems) {
  if (!grid.contains(factor)) return fallback;
  const auto& node = grid.at(factor);
  std::vector<std::string> levels;
  if (!node.is_array() || node.empty()) {
    problems.add("grid." + factor + " must be a non-empty array");
    return fallback;
  }
  for (const auto& v : node) {
    if (v.is_string()) {
      levels.push_back(v.get<std::string>());
    } else if (v.is_number_integer()) {
      levels.push_back(std::to_string(v.get<int>()));
    } else {
      problems.add("grid." + factor + " has a non-string level");
    }
  }
  return levels;
}

}  // namespace

RunManifest plan_run(const nlohmann::json& config) {
  Problems problems;
  RunManifest m;

  m.rng_seed = config.value("seed", std::uint64_t{0});
  m.responses_per_cell_per_set = config.value("responses_per_cell_per_set", 60);
  if (m.responses_per_cell_per_set < 1) {
    problems.add("responses_per_cell_per_set must be >= 1");
  }
  m.min_rankings_per_cell = config.value("min_rankings_per_cell", 30);
  if (m.min_rankings_per_cell < 1) {
    problems.add("min_rankings_per_cell must be >= 1");
  }
  m.template_version = config.value("template_version", std::string{"v1"});
  try {
    template_text(m.template_version);
  } catch (const std::invalid_argument& e) {
    problems.add(e.what());
  }

  const auto& defaults = full_grid();
  const nlohmann::json grid_node =
      config.contains("grid") ? config.at("grid") : nlohmann::json::object();
  FactorGrid grid;
  for (const auto& [name, fallback] : defaults.factors) {
    grid.factors.emplace_back(
        name, grid_levels(grid_node, name, fallback, problems));
  }
  for (const auto& [key, ignored] : grid_node.items()) {
    bool known = false;
    for (const auto& [name, levels] : defaults.factors) known |= (key == name);
    if (!known) problems.add("grid." + key + " is not a known factor");
  }
  m.grid = std::move(grid);
  try {
    (void)factorial_cells(m.grid);
  } catch (const std::invalid_argument& e) {
    problems.add(e.what());
  }

  if (config.contains("provider")) {
    try {
      m.provider = provider_config_from_json(config.at("provider"));
    } catch (const std::exception& e) {
      problems.add(e.what());
    }
  } else {
    m.provider.kind = ProviderKind::synthetic;
  }
  if (m.provider.kind == ProviderKind::remote) {
    if (m.provider.model_name.empty()) problems.add("provider.model_name missing");
    if (m.provider.endpoint_url.empty()) problems.add("provider.endpoint_url missing");
    if (m.provider.api_key_env.empty()) problems.add("provider.api_key_env missing");
  }

  if (config.contains("synthetic_rule")) {
    try {
      m.synthetic_rule = synthetic_rule_from_json(config.at("synthetic_rule"));
    } catch (const std::exception& e) {
      problems.add(e.what());
    }
  }
  if (m.provider.kind == ProviderKind::synthetic && !m.synthetic_rule) {
    SyntheticRule rule;
    rule.noise_seed = m.rng_seed;
    m.synthetic_rule = rule;
  }
  if (m.synthetic_rule && m.synthetic_rule->noise_seed == 0) {
    m.synthetic_rule->noise_seed = m.rng_seed;
  }

  problems.raise_if_any();

  m.run_id = config.value("run_id", std::string{});
  if (m.run_id.empty()) m.run_id = default_run_id(m.rng_seed);
  m.created_at = iso8601_utc_now();
  return m;
}

RunManifest plan_run_file(const std::filesystem::path& config_path) {
  std::ifstream in(config_path);
  if (!in) {
    throw ConfigError("cannot read config file: " + config_path.string());
  }
  nlohmann::json config;
  try {
    in >> config;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  return plan_run(config);
}

bool network_disabled() {
  const char* v = std::getenv("NO_NETWORK");
  return v != nullptr && std::string_view(v) == "1";
}

std::unique_ptr<Respondent> make_respondent(const RunManifest& manifest) {
  if (manifest.provider.kind == ProviderKind::remote && !network_disabled()) {
    return std::make_unique<RemoteRespondent>(manifest.provider);
  }
  SyntheticRule rule =
      manifest.synthetic_rule ? *manifest.synthetic_rule : SyntheticRule{};
  if (!manifest.synthetic_rule) rule.noise_seed = manifest.rng_seed;
  return std::make_unique<SyntheticRespondent>(rule);
}

ExecuteReport execute(const RunManifest& manifest, Respondent& respondent,
                      ResponseStore& store, const ExecuteOptions& options) {
  const std::vector<ScenarioCell> cells = manifest.cells();
  for (const auto& cell : cells) {
    (void)find_package(cell.package_label);  // fail fast on unknown labels
  }

  struct Task {
    const ScenarioCell* cell;
    int set_index;
    int draw_index;
  };

  std::set<std::string> present;
  for (auto& key : store.load_keys()) present.insert(std::move(key));

  std::vector<Task> tasks;
  for (const auto& cell : cells) {
    for (int set_index = 1; set_index <= 2; ++set_index) {
      for (int draw = 0; draw < manifest.responses_per_cell_per_set; ++draw) {
        ResponseRecord probe;
        probe.run_id = manifest.run_id;
        probe.cell = cell;
        probe.set_index = set_index;
        probe.draw_index = draw;
        if (present.count(probe.key()) == 0) {
          tasks.push_back(Task{&cell, set_index, draw});
        }
      }
    }
  }

  ExecuteReport report;
  report.planned = manifest.planned_requests();
  report.already_present = static_cast<std::int64_t>(present.size());

  std::int64_t budget = options.max_new_records > 0
                            ? std::min<std::int64_t>(options.max_new_records,
                                                     tasks.size())
                            : static_cast<std::int64_t>(tasks.size());

  std::atomic<std::int64_t> next_task{0};
  std::mutex store_mutex;
  std::mutex error_log_mutex;
  std::atomic<std::int64_t> done{0};
  std::atomic<std::int64_t> parse_failures{0};
  std::atomic<std::int64_t> transport_failures{0};
  std::exception_ptr storage_error;
  std::mutex storage_error_mutex;

  auto log_transport_error = [&](const std::string& key,
                                 const std::string& what) {
    std::lock_guard lock(error_log_mutex);
    std::ofstream out(store.run_dir() / "transport_errors.log",
                      std::ios::app);
    out << iso8601_utc_now() << '\t' << key << '\t' << what << '\n';
  };

  auto worker = [&] {
    while (true) {
      const std::int64_t i = next_task.fetch_add(1);
      if (i >= budget) return;
      {
        std::lock_guard lock(storage_error_mutex);
        if (storage_error) return;
      }
      const Task& task = tasks[static_cast<size_t>(i)];

      ResponseRecord record;
      record.run_id = manifest.run_id;
      record.cell = *task.cell;
      record.set_index = task.set_index;
      record.draw_index = task.draw_index;

      const ChoiceSet& set =
          find_package(task.cell->package_label).set(task.set_index);
      AnswerRequest request{*task.cell, task.set_index, task.draw_index,
                            render_prompt(*task.cell, set,
                                          manifest.template_version)};
      try {
        record.raw = respondent.answer(request, record.provider_metadata);
      } catch (const std::exception& e) {
        // Leave the key missing so a later execute retries it.
        transport_failures.fetch_add(1);
        log_transport_error(record.key(), e.what());
        done.fetch_add(1);
        if (options.progress) options.progress(done.load(), budget);
        continue;
      }

      record.parsed = parse_response(record.raw);
      if (!parse_ok(record.parsed)) parse_failures.fetch_add(1);
      record.timestamp = iso8601_utc_now();

      try {
        std::lock_guard lock(store_mutex);
        store.append(record);
      } catch (...) {
        std::lock_guard lock(storage_error_mutex);
        if (!storage_error) storage_error = std::current_exception();
        return;
      }
      done.fetch_add(1);
      if (options.progress) options.progress(done.load(), budget);
    }
  };

  const int n_workers = std::max(
      1, std::min<int>(manifest.provider.concurrency_cap,
                       static_cast<int>(std::min<std::int64_t>(
                           budget, std::numeric_limits<int>::max()))));
  std::vector<std::thread> threads;
  threads.reserve(static_cast<size_t>(n_workers));
  for (int t = 0; t < n_workers; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();

  {
    std::lock_guard lock(storage_error_mutex);
    if (storage_error) std::rethrow_exception(storage_error);
  }

  report.parse_failures = parse_failures.load();
  report.transport_failures = transport_failures.load();
  report.new_records = done.load() - report.transport_failures;
  return report;
}

EstimateOutcome estimate_all(const std::vector<ResponseRecord>& records,
                             const RunManifest& manifest) {
  // Bucket parsed rankings by cell key, keeping (set, draw) sort keys so
  // the fit sees a deterministic order regardless of store append order.
  struct Entry {
    int set_index;
    int draw_index;
    const RankingResponse* response;
  };
  std::map<std::string, std::vector<Entry>> by_cell;
  std::map<std::string, std::int64_t> all_by_cell;
  for (const auto& r : records) {
    if (r.run_id != manifest.run_id) {
      throw DataIntegrityError("store record for run '" + r.run_id +
                               "' mixed into run '" + manifest.run_id + "'");
    }
    all_by_cell[r.cell.key()] += 1;
    if (parse_ok(r.parsed)) {
      by_cell[r.cell.key()].push_back(
          {r.set_index, r.draw_index, &std::get<RankingResponse>(r.parsed)});
    }
  }

  // Attribute matrices per (package, set), rows indexed by alternative id.
  auto attribute_matrix = [](const ChoiceSet& set) {
    Eigen::Matrix<double, Eigen::Dynamic, 3> X(kNumAlternatives, 3);
    for (const auto& a : set.alternatives) {
      X.row(a.id - 1) << a.cost_usd(), static_cast<double>(a.time_min),
          a.trucks ? 1.0 : 0.0;
    }
    return X;
  };

  EstimateOutcome outcome;
  for (const auto& cell : manifest.cells()) {
    const auto it = by_cell.find(cell.key());
    const std::int64_t n_parsed =
        it == by_cell.end() ? 0 : static_cast<std::int64_t>(it->second.size());
    if (n_parsed < manifest.min_rankings_per_cell) {
      std::ostringstream reason;
      reason << "only " << n_parsed << " parsed rankings (of "
             << all_by_cell[cell.key()] << " stored) — minimum is "
             << manifest.min_rankings_per_cell;
      outcome.exclusions.push_back({cell, reason.str()});
      continue;
    }

    auto& entries = it->second;
    std::sort(entries.begin(), entries.end(), [](const Entry& a,
                                                 const Entry& b) {
      return std::tie(a.set_index, a.draw_index) <
             std::tie(b.set_index, b.draw_index);
    });

    const ChoicePackage& package = find_package(cell.package_label);
    const auto X1 = attribute_matrix(package.set(1));
    const auto X2 = attribute_matrix(package.set(2));

    std::vector<RankingObservation> observations;
    observations.reserve(entries.size());
    for (const auto& e : entries) {
      RankingObservation obs;
      obs.attributes = e.set_index == 1 ? X1 : X2;
      obs.order = e.response->order;
      observations.push_back(std::move(obs));
    }

    outcome.fits.emplace_back(cell, fit(observations));
  }
  return outcome;
}

nlohmann::json estimate_outcome_to_json(const EstimateOutcome& outcome) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& [cell, fit] : outcome.fits) {
    cells.push_back(
        {{"cell", cell_to_json(cell)}, {"fit", fit_result_to_json(fit)}});
  }
  nlohmann::json exclusions = nlohmann::json::array();
  for (const auto& ex : outcome.exclusions) {
    exclusions.push_back(
        {{"cell", cell_to_json(ex.cell)}, {"reason", ex.reason}});
  }
  return {{"cells", std::move(cells)}, {"exclusions", std::move(exclusions)}};
}

EstimateOutcome estimate_outcome_from_json(const nlohmann::json& j) {
  EstimateOutcome outcome;
  for (const auto& entry : j.at("cells")) {
    outcome.fits.emplace_back(cell_from_json(entry.at("cell")),
                              fit_result_from_json(entry.at("fit")));
  }
  for (const auto& entry : j.at("exclusions")) {
    outcome.exclusions.push_back({cell_from_json(entry.at("cell")),
                                  entry.at("reason").get<std::string>()});
  }
  return outcome;
}

}  // namespace votkit
