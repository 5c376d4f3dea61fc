#ifndef VOTKIT_RESPONDENTS_HPP
#define VOTKIT_RESPONDENTS_HPP

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "votkit/design.hpp"
#include "votkit/estimator.hpp"
#include "votkit/survey.hpp"

namespace votkit {

enum class ProviderKind { remote, synthetic };

std::string to_string(ProviderKind k);
ProviderKind provider_kind_from_string(const std::string& s);

struct ProviderConfig {
  ProviderKind kind = ProviderKind::synthetic;
  std::string model_name;     // remote
  std::string endpoint_url;   // remote, e.g. https://host/v1/chat/completions
  std::string api_key_env;    // name of the env var holding the key
  double temperature = 1.0;
  int max_retries = 3;
  int concurrency_cap = 4;
  double timeout_seconds = 60.0;
  int backoff_base_ms = 250;  // first retry delay; doubles per attempt
};

nlohmann::json provider_config_to_json(const ProviderConfig& config);
ProviderConfig provider_config_from_json(const nlohmann::json& j);

// Ground-truth preference rule for the synthetic respondent. The cost
// coefficient scales with (income/25)^(-income_exponent) and the time
// coefficient with a per-purpose multiplier, so the implied value of time
// is vot_base * multiplier(purpose) * (income/25)^income_exponent --- a
// known target the estimation pipeline must recover.
struct SyntheticRule {
  Coefficients base_beta{-0.30, -0.05, -0.50};
  double income_exponent = 0.0;
  std::map<Purpose, double> purpose_time_multipliers = {
      {Purpose::personal, 1.0},
      {Purpose::business, 1.0},
      {Purpose::commute, 1.0},
      {Purpose::leisure, 1.0}};
  std::uint64_t noise_seed = 0;

  Coefficients cell_beta(const ScenarioCell& cell) const;
  // The exact value of travel time (USD/h) this rule implies for a cell.
  double analytic_vot(const ScenarioCell& cell) const;
};

nlohmann::json synthetic_rule_to_json(const SyntheticRule& rule);
SyntheticRule synthetic_rule_from_json(const nlohmann::json& j);

// Draw one full ranking from the Plackett-Luce distribution with the given
// utilities: sort ids 1..n by utility plus independent standard Gumbel
// noise (distributionally identical to sequential softmax selection).
std::vector<int> sample_plackett_luce(const Eigen::VectorXd& utilities,
                                      std::mt19937_64& rng);

// Deterministic synthetic answer for (cell, set, rule, draw_index), already
// serialized in the RANKING/REASON format the survey parser accepts.
std::string synthetic_answer(const ScenarioCell& cell, const ChoiceSet& set,
                             const SyntheticRule& rule, int draw_index);

// Blocking chat-completion call with bounded concurrency, retry with
// exponential backoff and jitter on 429/5xx/timeouts. Returns the first
// choice's text verbatim.
std::string remote_answer(const RenderedPrompt& prompt,
                          const ProviderConfig& config);

// ---------------------------------------------------------------------------
// Uniform interface the pipeline fans requests through.
// ---------------------------------------------------------------------------

struct AnswerRequest {
  ScenarioCell cell;
  int set_index = 0;
  int draw_index = 0;
  RenderedPrompt prompt;
};

struct AnswerMetadata {
  std::string model;
  double latency_ms = 0.0;
  int retries = 0;
};

class Respondent {
 public:
  virtual ~Respondent() = default;
  // May be called concurrently from several workers.
  virtual std::string answer(const AnswerRequest& request,
                             AnswerMetadata& metadata) = 0;
};

class SyntheticRespondent : public Respondent {
 public:
  explicit SyntheticRespondent(SyntheticRule rule) : rule_(std::move(rule)) {}
  std::string answer(const AnswerRequest& request,
                     AnswerMetadata& metadata) override;
  const SyntheticRule& rule() const { return rule_; }

 private:
  SyntheticRule rule_;
};

class RemoteRespondent : public Respondent {
 public:
  explicit RemoteRespondent(ProviderConfig config);
  ~RemoteRespondent() override;
  std::string answer(const AnswerRequest& request,
                     AnswerMetadata& metadata) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace votkit

#endif  // VOTKIT_RESPONDENTS_HPP
