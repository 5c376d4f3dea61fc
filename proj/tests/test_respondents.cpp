#include <doctest.h>

#include <atomic>
#include <cmath>
#include <map>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "votkit/errors.hpp"
#include "votkit/respondents.hpp"
#include "votkit/survey.hpp"

using namespace votkit;

namespace {

ScenarioCell sample_cell() {
  ScenarioCell c;
  c.package_label = "ratio-29.1";
  c.purpose = Purpose::commute;
  c.income = 25;
  c.sex = Sex::male;
  c.age_band = AgeBand::twenties;
  c.education = Education::high_school;
  return c;
}

}  // namespace

TEST_SUITE("respondents") {

TEST_CASE("equal utilities give each id the top rank 1/13 of the time") {
  std::mt19937_64 rng(7);
  const Eigen::VectorXd u = Eigen::VectorXd::Zero(13);
  std::array<int, 14> top1{};
  const int draws = 50000;
  for (int i = 0; i < draws; ++i) {
    top1[static_cast<size_t>(sample_plackett_luce(u, rng)[0])]++;
  }
  const double p = 1.0 / 13.0;
  const double sigma = std::sqrt(p * (1.0 - p) / draws);
  for (int id = 1; id <= 13; ++id) {
    CHECK(std::abs(top1[id] / static_cast<double>(draws) - p) <= 3.0 * sigma);
  }
}

TEST_CASE("huge utility gaps make the ranking all but deterministic") {
  std::mt19937_64 rng(8);
  Eigen::VectorXd u(13);
  for (int i = 0; i < 13; ++i) u[i] = -40.0 * i;
  int top_hits = 0;
  const int draws = 5000;
  for (int i = 0; i < draws; ++i) {
    top_hits += sample_plackett_luce(u, rng)[0] == 1 ? 1 : 0;
  }
  CHECK(top_hits >= static_cast<int>(draws * 0.999));
}

TEST_CASE("3-alternative order frequency matches the analytic product") {
  std::mt19937_64 rng(9);
  Eigen::VectorXd u(3);
  u << 1.0, 0.0, -1.0;
  const std::vector<int> target = {1, 2, 3};
  const double analytic = oracles::ranking_probability_direct(u, target);
  // e^1/(e^1+e^0+e^-1) * e^0/(e^0+e^-1)
  CHECK(analytic == doctest::Approx(std::exp(1.0) /
                                    (std::exp(1.0) + 1.0 + std::exp(-1.0)) /
                                    (1.0 + std::exp(-1.0))));
  int hits = 0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    hits += sample_plackett_luce(u, rng) == target ? 1 : 0;
  }
  CHECK(std::abs(hits / static_cast<double>(draws) - analytic) <= 0.01);
}

TEST_CASE("Gumbel sampling agrees with the sequential-softmax oracle on "
          "every 3-alternative permutation") {
  std::mt19937_64 rng_a(10), rng_b(20);
  Eigen::VectorXd u(3);
  u << 0.4, -0.3, 0.9;
  std::map<std::vector<int>, int> gumbel, sequential;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    gumbel[sample_plackett_luce(u, rng_a)]++;
    sequential[oracles::sample_sequential_softmax(u, rng_b)]++;
  }
  for (const auto& order : oracles::all_permutations(3)) {
    const double expected = oracles::ranking_probability_direct(u, order);
    CHECK(std::abs(gumbel[order] / static_cast<double>(draws) - expected) <=
          0.01);
    CHECK(std::abs(sequential[order] / static_cast<double>(draws) -
                   expected) <= 0.01);
  }
}

TEST_CASE("non-finite utilities are rejected") {
  std::mt19937_64 rng(3);
  Eigen::VectorXd u(3);
  u << 0.0, std::numeric_limits<double>::infinity(), 1.0;
  CHECK_THROWS_AS(sample_plackett_luce(u, rng), std::invalid_argument);
}

TEST_CASE("synthetic answers parse and are seed-deterministic") {
  const SyntheticRule rule{{-0.30, -0.05, -0.50},
                           0.5,
                           {{Purpose::personal, 0.9},
                            {Purpose::business, 1.2},
                            {Purpose::commute, 1.1},
                            {Purpose::leisure, 0.7}},
                           42};
  const ChoiceSet& set = find_package("ratio-29.1").set(1);
  const std::string a = synthetic_answer(sample_cell(), set, rule, 17);
  const std::string b = synthetic_answer(sample_cell(), set, rule, 17);
  CHECK(a == b);
  CHECK(parse_ok(parse_response(a)));

  const std::string c = synthetic_answer(sample_cell(), set, rule, 18);
  CHECK(a != c);  // a different draw index reseeds the noise
}

TEST_CASE("synthetic answers parse for every cell of the full grid") {
  SyntheticRule rule;
  rule.noise_seed = 5;
  for (const auto& cell : factorial_cells(full_grid())) {
    const ChoicePackage& p = find_package(cell.package_label);
    const auto r = parse_response(synthetic_answer(cell, p.set(1), rule, 0));
    CHECK(parse_ok(r));
  }
}

TEST_CASE("zero coefficients give uniform top-1 counts (chi-square)") {
  SyntheticRule rule;
  rule.base_beta = {0.0, 0.0, 0.0};
  rule.noise_seed = 31337;
  const ChoiceSet& set = find_package("calfee-original").set(1);
  std::array<int, 14> top1{};
  const int draws = 13000;
  for (int i = 0; i < draws; ++i) {
    const auto r = parse_response(synthetic_answer(sample_cell(), set, rule, i));
    REQUIRE(parse_ok(r));
    top1[static_cast<size_t>(std::get<RankingResponse>(r).order[0])]++;
  }
  const double expected = draws / 13.0;
  double chi2 = 0.0;
  for (int id = 1; id <= 13; ++id) {
    chi2 += (top1[id] - expected) * (top1[id] - expected) / expected;
  }
  CHECK(chi2 < 26.217);  // chi-square(12) upper 1% point
}

TEST_CASE("the income exponent doubles implied VOT from 25 to 50 USD/h") {
  SyntheticRule rule;
  rule.income_exponent = 1.0;
  ScenarioCell lo = sample_cell();
  lo.income = 25;
  ScenarioCell hi = lo;
  hi.income = 50;
  CHECK(rule.analytic_vot(hi) == doctest::Approx(2.0 * rule.analytic_vot(lo)));
}

// --- remote provider against a local stub endpoint ---

namespace {

struct StubServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;

  explicit StubServer(httplib::Server::Handler handler) {
    server.Post("/v1/chat/completions", std::move(handler));
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~StubServer() {
    server.stop();
    thread.join();
  }

  ProviderConfig config() const {
    ProviderConfig c;
    c.kind = ProviderKind::remote;
    c.model_name = "stub-model";
    c.endpoint_url =
        "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    c.api_key_env = "VOTKIT_TEST_KEY";
    c.max_retries = 3;
    c.backoff_base_ms = 1;
    c.timeout_seconds = 5.0;
    return c;
  }
};

std::string completion_body(const std::string& text) {
  return nlohmann::json{
      {"choices",
       nlohmann::json::array(
           {{{"message", {{"role", "assistant"}, {"content", text}}}}})}}
      .dump();
}

RenderedPrompt sample_prompt() {
  const ChoiceSet& set = find_package("calfee-original").set(1);
  return render_prompt(sample_cell(), set, "v1");
}

struct EnvKey {
  EnvKey() { setenv("VOTKIT_TEST_KEY", "test-secret", 1); }
  ~EnvKey() { unsetenv("VOTKIT_TEST_KEY"); }
};

}  // namespace

TEST_CASE("remote answers pass the completion text through verbatim") {
  EnvKey key;
  const std::string ranking =
      "RANKING: 1 > 2 > 3 > 4 > 5 > 6 > 7 > 8 > 9 > 10 > 11 > 12 > 13\n"
      "REASON: stub";
  std::string seen_auth;
  nlohmann::json seen_body;
  StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    seen_body = nlohmann::json::parse(req.body);
    res.set_content(completion_body(ranking), "application/json");
  });
  CHECK(remote_answer(sample_prompt(), stub.config()) == ranking);
  CHECK(seen_auth == "Bearer test-secret");
  CHECK(seen_body.at("model") == "stub-model");
  CHECK(seen_body.at("temperature").get<double>() == 1.0);
  CHECK(seen_body.at("messages").size() == 1);
  CHECK(seen_body.at("messages")[0].at("role") == "user");
}

TEST_CASE("429s are retried and the third attempt succeeds") {
  EnvKey key;
  std::atomic<int> calls{0};
  StubServer stub([&](const httplib::Request&, httplib::Response& res) {
    if (calls.fetch_add(1) < 2) {
      res.status = 429;
      res.set_content("slow down", "text/plain");
      return;
    }
    res.set_content(completion_body("ok after backoff"), "application/json");
  });
  CHECK(remote_answer(sample_prompt(), stub.config()) == "ok after backoff");
  CHECK(calls.load() == 3);
}

TEST_CASE("permanent 500s exhaust retries into a transport error") {
  EnvKey key;
  std::atomic<int> calls{0};
  StubServer stub([&](const httplib::Request&, httplib::Response& res) {
    calls.fetch_add(1);
    res.status = 500;
  });
  CHECK_THROWS_AS(remote_answer(sample_prompt(), stub.config()),
                  TransportError);
  CHECK(calls.load() == 4);  // 1 + max_retries
}

TEST_CASE("non-retryable 4xx fails immediately as a request error") {
  EnvKey key;
  std::atomic<int> calls{0};
  StubServer stub([&](const httplib::Request&, httplib::Response& res) {
    calls.fetch_add(1);
    res.status = 400;
  });
  CHECK_THROWS_AS(remote_answer(sample_prompt(), stub.config()), RequestError);
  CHECK(calls.load() == 1);
}

TEST_CASE("a missing api key is a configuration error, not a request") {
  unsetenv("VOTKIT_TEST_KEY");
  std::atomic<int> calls{0};
  StubServer stub([&](const httplib::Request&, httplib::Response& res) {
    calls.fetch_add(1);
    res.set_content(completion_body("x"), "application/json");
  });
  CHECK_THROWS_AS(remote_answer(sample_prompt(), stub.config()), ConfigError);
  CHECK(calls.load() == 0);
}

TEST_CASE("in-flight requests never exceed the concurrency cap") {
  EnvKey key;
  std::atomic<int> in_flight{0};
  std::atomic<int> max_in_flight{0};
  const std::string ranking =
      "RANKING: 1 > 2 > 3 > 4 > 5 > 6 > 7 > 8 > 9 > 10 > 11 > 12 > 13";
  StubServer stub([&](const httplib::Request&, httplib::Response& res) {
    const int now = in_flight.fetch_add(1) + 1;
    int seen = max_in_flight.load();
    while (now > seen && !max_in_flight.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    in_flight.fetch_sub(1);
    res.set_content(completion_body(ranking), "application/json");
  });

  ProviderConfig config = stub.config();
  config.concurrency_cap = 3;
  RemoteRespondent respondent(config);

  std::vector<std::thread> callers;
  std::atomic<int> ok{0};
  for (int i = 0; i < 16; ++i) {
    callers.emplace_back([&] {
      AnswerRequest request{sample_cell(), 1, 0, sample_prompt()};
      AnswerMetadata metadata;
      if (respondent.answer(request, metadata) == ranking) ok.fetch_add(1);
    });
  }
  for (auto& t : callers) t.join();
  CHECK(ok.load() == 16);
  CHECK(max_in_flight.load() <= 3);
  CHECK(max_in_flight.load() >= 2);  // parallelism actually happened
}

}  // TEST_SUITE
