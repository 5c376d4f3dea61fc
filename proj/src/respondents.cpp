#include "votkit/respondents.hpp"

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "votkit/errors.hpp"
#include "votkit/numeric.hpp"

namespace votkit {

std::string to_string(ProviderKind k) {
  return k == ProviderKind::remote ? "remote" : "synthetic";
}

ProviderKind provider_kind_from_string(const std::string& s) {
  if (s == "remote") return ProviderKind::remote;
  if (s == "synthetic") return ProviderKind::synthetic;
  throw std::invalid_argument("unknown provider kind: " + s);
}

nlohmann::json provider_config_to_json(const ProviderConfig& config) {
  return {{"kind", to_string(config.kind)},
          {"model_name", config.model_name},
          {"endpoint_url", config.endpoint_url},
          {"api_key_env", config.api_key_env},
          {"temperature", config.temperature},
          {"max_retries", config.max_retries},
          {"concurrency_cap", config.concurrency_cap},
          {"timeout_seconds", config.timeout_seconds},
          {"backoff_base_ms", config.backoff_base_ms}};
}

ProviderConfig provider_config_from_json(const nlohmann::json& j) {
  ProviderConfig c;
  c.kind = provider_kind_from_string(j.at("kind").get<std::string>());
  c.model_name = j.value("model_name", std::string{});
  c.endpoint_url = j.value("endpoint_url", std::string{});
  c.api_key_env = j.value("api_key_env", std::string{});
  c.temperature = j.value("temperature", 1.0);
  c.max_retries = j.value("max_retries", 3);
  c.concurrency_cap = j.value("concurrency_cap", 4);
  c.timeout_seconds = j.value("timeout_seconds", 60.0);
  c.backoff_base_ms = j.value("backoff_base_ms", 250);
  if (c.temperature < 0.0) {
    throw ConfigError("provider temperature must be >= 0");
  }
  if (c.concurrency_cap < 1) {
    throw ConfigError("provider concurrency_cap must be >= 1");
  }
  if (c.max_retries < 0) {
    throw ConfigError("provider max_retries must be >= 0");
  }
  return c;
}

Coefficients SyntheticRule::cell_beta(const ScenarioCell& cell) const {
  Coefficients b = base_beta;
  b.cost *= std::pow(cell.income / 25.0, -income_exponent);
  b.time *= purpose_time_multipliers.at(cell.purpose);
  return b;
}

double SyntheticRule::analytic_vot(const ScenarioCell& cell) const {
  const Coefficients b = cell_beta(cell);
  return 60.0 * b.time / b.cost;
}

nlohmann::json synthetic_rule_to_json(const SyntheticRule& rule) {
  nlohmann::json mult;
  for (const auto& [purpose, m] : rule.purpose_time_multipliers) {
    mult[to_string(purpose)] = m;
  }
  return {{"base_beta",
           {{"cost", rule.base_beta.cost},
            {"time", rule.base_beta.time},
            {"truck", rule.base_beta.truck}}},
          {"income_exponent", rule.income_exponent},
          {"purpose_time_multipliers", std::move(mult)},
          {"noise_seed", rule.noise_seed}};
}

SyntheticRule synthetic_rule_from_json(const nlohmann::json& j) {
  SyntheticRule r;
  if (j.contains("base_beta")) {
    r.base_beta.cost = j.at("base_beta").at("cost").get<double>();
    r.base_beta.time = j.at("base_beta").at("time").get<double>();
    r.base_beta.truck = j.at("base_beta").at("truck").get<double>();
  }
  r.income_exponent = j.value("income_exponent", 0.0);
  if (j.contains("purpose_time_multipliers")) {
    for (const auto& [key, value] : j.at("purpose_time_multipliers").items()) {
      r.purpose_time_multipliers[purpose_from_string(key)] =
          value.get<double>();
    }
  }
  r.noise_seed = j.value("noise_seed", std::uint64_t{0});
  for (Purpose p : {Purpose::personal, Purpose::business, Purpose::commute,
                    Purpose::leisure}) {
    auto it = r.purpose_time_multipliers.find(p);
    if (it == r.purpose_time_multipliers.end() || it->second <= 0.0) {
      throw ConfigError("synthetic rule must give every purpose a positive "
                        "time multiplier");
    }
  }
  return r;
}

std::vector<int> sample_plackett_luce(const Eigen::VectorXd& utilities,
                                      std::mt19937_64& rng) {
  if (!utilities.allFinite()) {
    throw std::invalid_argument("sample_plackett_luce: non-finite utility");
  }
  const int n = static_cast<int>(utilities.size());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::pair<double, int>> keys(n);
  for (int i = 0; i < n; ++i) {
    // u = 0 or 1 would send the Gumbel to +/-inf; nudge into the open set
    double u = unif(rng);
    u = std::min(std::max(u, 1e-300), 1.0 - 1e-16);
    const double gumbel = -std::log(-std::log(u));
    keys[i] = {utilities[i] + gumbel, i + 1};
  }
  std::sort(keys.begin(), keys.end(), [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  });
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = keys[i].second;
  return order;
}

std::string synthetic_answer(const ScenarioCell& cell, const ChoiceSet& set,
                             const SyntheticRule& rule, int draw_index) {
  const Coefficients beta = rule.cell_beta(cell);
  if (!beta.finite()) {
    throw std::invalid_argument("synthetic rule yields non-finite "
                                "coefficients for cell " + cell.key());
  }
  Eigen::VectorXd utilities(kNumAlternatives);
  const Eigen::Vector3d b = beta.vec();
  for (const auto& alt : set.alternatives) {
    utilities[alt.id - 1] =
        b[0] * alt.cost_usd() + b[1] * alt.time_min + b[2] * (alt.trucks ? 1 : 0);
  }

  std::uint64_t seed = rule.noise_seed;
  seed = hash_combine(seed, fnv1a64(cell.key()));
  seed = hash_combine(seed, static_cast<std::uint64_t>(set.index));
  seed = hash_combine(seed, static_cast<std::uint64_t>(draw_index));
  std::mt19937_64 rng(seed);

  const std::vector<int> order = sample_plackett_luce(utilities, rng);
  return format_answer(order, "synthetic");
}

// ---------------------------------------------------------------------------
// Remote chat-completion client.
// ---------------------------------------------------------------------------

namespace {

struct ParsedUrl {
  std::string scheme_host;  // e.g. "https://api.example.com:8443"
  std::string path;         // e.g. "/v1/chat/completions"
};

ParsedUrl parse_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("endpoint_url must start with http:// or https://");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    return {url, "/"};
  }
  return {url.substr(0, path_start), url.substr(path_start)};
}

bool retryable_status(int status) {
  return status == 429 || (status >= 500 && status < 600);
}

std::string extract_completion_text(const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error&) {
    throw TransportError("completion response is not valid JSON");
  }
  try {
    const auto& choice = j.at("choices").at(0);
    if (choice.contains("message")) {
      return choice.at("message").at("content").get<std::string>();
    }
    return choice.at("text").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw TransportError("completion response carries no choices[0] text");
  }
}

// Issues one chat-completion call with the retry policy. Thread-safe; every
// call opens its own connection (remote latency dwarfs the handshake).
std::string chat_completion(const ProviderConfig& config,
                            const std::string& user_message,
                            AnswerMetadata& metadata) {
  if (config.kind != ProviderKind::remote) {
    throw ConfigError("remote_answer requires a remote provider config");
  }
  if (config.api_key_env.empty()) {
    throw ConfigError("remote provider needs api_key_env");
  }
  const char* key = std::getenv(config.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw ConfigError("environment variable '" + config.api_key_env +
                      "' is unset; cannot authenticate");
  }
  const ParsedUrl endpoint = parse_endpoint(config.endpoint_url);

  const nlohmann::json body{
      {"model", config.model_name},
      {"temperature", config.temperature},
      {"messages",
       nlohmann::json::array(
           {{{"role", "user"}, {"content", user_message}}})}};
  const std::string payload = body.dump();

  thread_local std::mt19937_64 jitter_rng(
      std::random_device{}() ^
      std::hash<std::thread::id>{}(std::this_thread::get_id()));

  std::string last_error;
  const auto started = std::chrono::steady_clock::now();
  for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
    if (attempt > 0) {
      std::uniform_int_distribution<int> jitter(0, config.backoff_base_ms);
      const int delay_ms =
          config.backoff_base_ms * (1 << std::min(attempt - 1, 6)) +
          jitter(jitter_rng);
      std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
    }

    httplib::Client client(endpoint.scheme_host);
    const auto timeout =
        std::chrono::duration<double>(config.timeout_seconds);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    client.set_bearer_token_auth(key);

    auto res = client.Post(endpoint.path, payload, "application/json");
    if (!res) {
      last_error = "transport failure: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) {
      metadata.model = config.model_name;
      metadata.retries = attempt;
      metadata.latency_ms =
          std::chrono::duration<double, std::milli>(
              std::chrono::steady_clock::now() - started)
              .count();
      return extract_completion_text(res->body);
    }
    if (retryable_status(res->status)) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    throw RequestError("endpoint rejected request with HTTP " +
                       std::to_string(res->status));
  }
  throw TransportError("retries exhausted after " +
                       std::to_string(config.max_retries + 1) +
                       " attempts; last error: " + last_error);
}

// Counting gate sized at runtime (std::counting_semaphore fixes its ceiling
// at compile time, which reads worse than this four-liner).
class ConcurrencyGate {
 public:
  explicit ConcurrencyGate(int capacity) : available_(capacity) {}

  void acquire() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return available_ > 0; });
    --available_;
  }
  void release() {
    {
      std::lock_guard lock(mutex_);
      ++available_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  int available_;
};

}  // namespace

std::string remote_answer(const RenderedPrompt& prompt,
                          const ProviderConfig& config) {
  AnswerMetadata metadata;
  return chat_completion(config, prompt.text, metadata);
}

std::string SyntheticRespondent::answer(const AnswerRequest& request,
                                        AnswerMetadata& metadata) {
  metadata.model = "synthetic";
  metadata.latency_ms = 0.0;
  metadata.retries = 0;
  const ChoiceSet& set =
      find_package(request.cell.package_label).set(request.set_index);
  return synthetic_answer(request.cell, set, rule_, request.draw_index);
}

struct RemoteRespondent::Impl {
  ProviderConfig config;
  ConcurrencyGate gate;
  explicit Impl(ProviderConfig c) : config(std::move(c)), gate(config.concurrency_cap) {}
};

RemoteRespondent::RemoteRespondent(ProviderConfig config)
    : impl_(std::make_unique<Impl>(std::move(config))) {}

RemoteRespondent::~RemoteRespondent() = default;

std::string RemoteRespondent::answer(const AnswerRequest& request,
                                     AnswerMetadata& metadata) {
  impl_->gate.acquire();
  struct Release {
    ConcurrencyGate& g;
    ~Release() { g.release(); }
  } release{impl_->gate};
  return chat_completion(impl_->config, request.prompt.text, metadata);
}

}  // namespace votkit
