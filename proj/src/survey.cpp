#include "votkit/survey.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>
#include <sstream>
#include <stdexcept>

namespace votkit {

namespace {

// Keep this string byte-identical to assets/templates/prompt_v1.txt; a unit
// test pins the two together so wording edits cannot drift silently.
constexpr const char* kTemplateV1 =
    "You are taking part in a route choice survey.\n"
    "\n"
    "Traveler profile:\n"
    "- Sex: {sex}\n"
    "- Age: in your {age}\n"
    "- Education: {education}\n"
    "- Income: {income} USD per hour\n"
    "\n"
    "Trip purpose: you are driving {purpose}.\n"
    "\n"
    "Below are 13 route alternatives for this trip. They differ in toll "
    "cost, travel time, and whether heavy trucks are present on the road.\n"
    "\n"
    "Alternative | Cost (USD) | Time (minutes) | Trucks on road\n"
    "{table}"
    "\n"
    "Rank all 13 alternatives from your most preferred (rank 1) to your "
    "least preferred (rank 13). Use every alternative exactly once, "
    "ensuring that no ranks are repeated.\n"
    "\n"
    "Reply in exactly this format and nothing else:\n"
    "RANKING: id > id > ... > id\n"
    "REASON: <a short explanation of your ranking>\n";

std::string education_phrase(Education e) {
  return e == Education::high_school ? "high school diploma"
                                     : "bachelor's degree or higher";
}

std::string purpose_phrase(Purpose p) {
  switch (p) {
    case Purpose::personal: return "for a personal errand";
    case Purpose::business: return "for a business trip";
    case Purpose::commute: return "on your daily commute to work";
    case Purpose::leisure: return "for a leisure trip";
  }
  throw std::invalid_argument("bad Purpose");
}

void replace_all(std::string& text, const std::string& marker,
                 const std::string& value) {
  size_t pos = 0;
  while ((pos = text.find(marker, pos)) != std::string::npos) {
    text.replace(pos, marker.size(), value);
    pos += value.size();
  }
}

bool is_space(char c) {
  return std::isspace(static_cast<unsigned char>(c)) != 0;
}

std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

bool iequals_prefix(std::string_view text, std::string_view prefix) {
  if (text.size() < prefix.size()) return false;
  for (size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(text[i])) !=
        std::tolower(static_cast<unsigned char>(prefix[i]))) {
      return false;
    }
  }
  return true;
}

// Locate a "KEY:" line (case-insensitive), skipping leading whitespace and
// light markdown decoration. Returns the text after the colon, or nullopt.
std::optional<std::string> find_keyed_line(const std::string& raw,
                                           std::string_view key) {
  std::istringstream in(raw);
  std::string line;
  while (std::getline(in, line)) {
    size_t b = 0;
    while (b < line.size() &&
           (is_space(line[b]) || line[b] == '*' || line[b] == '#' ||
            line[b] == '-' || line[b] == '>')) {
      ++b;
    }
    std::string_view rest(line.data() + b, line.size() - b);
    if (!iequals_prefix(rest, key)) continue;
    rest.remove_prefix(key.size());
    // tolerate "**RANKING**:" style closers before the colon
    size_t c = 0;
    while (c < rest.size() && (is_space(rest[c]) || rest[c] == '*')) ++c;
    if (c >= rest.size() || rest[c] != ':') continue;
    return std::string(rest.substr(c + 1));
  }
  return std::nullopt;
}

// One ranking token: optional "Alt"/"Option"/"Alternative" prefix, then an
// integer, with light punctuation tolerated. Returns nullopt on anything else.
std::optional<int> parse_id_token(std::string token) {
  token = trim(token);
  for (std::string_view prefix :
       {"alternative", "option", "alt"}) {
    if (iequals_prefix(token, prefix)) {
      token = trim(token.substr(prefix.size()));
      break;
    }
  }
  while (!token.empty() && (token.front() == '.' || token.front() == '#' ||
                            token.front() == ')' || token.front() == '(')) {
    token = trim(token.substr(1));
  }
  if (token.empty()) return std::nullopt;
  size_t i = 0;
  while (i < token.size() && std::isdigit(static_cast<unsigned char>(token[i])))
    ++i;
  if (i == 0 || i != token.size()) return std::nullopt;
  if (i > 6) return std::nullopt;  // absurdly long digit runs
  return std::stoi(token);
}

}  // namespace

std::string to_string(ParseFailureKind kind) {
  switch (kind) {
    case ParseFailureKind::malformed_structure: return "malformed_structure";
    case ParseFailureKind::duplicate_rank: return "duplicate_rank";
    case ParseFailureKind::missing_alternative: return "missing_alternative";
    case ParseFailureKind::out_of_range_id: return "out_of_range_id";
    case ParseFailureKind::rank_count_mismatch: return "rank_count_mismatch";
  }
  throw std::invalid_argument("bad ParseFailureKind");
}

ParseFailureKind parse_failure_kind_from_string(const std::string& s) {
  if (s == "malformed_structure") return ParseFailureKind::malformed_structure;
  if (s == "duplicate_rank") return ParseFailureKind::duplicate_rank;
  if (s == "missing_alternative") return ParseFailureKind::missing_alternative;
  if (s == "out_of_range_id") return ParseFailureKind::out_of_range_id;
  if (s == "rank_count_mismatch") return ParseFailureKind::rank_count_mismatch;
  throw std::invalid_argument("unknown ParseFailureKind: " + s);
}

std::vector<std::string> template_versions() { return {"v1"}; }

const std::string& template_text(const std::string& version) {
  static const std::string v1 = kTemplateV1;
  if (version == "v1") return v1;
  throw std::invalid_argument("unknown template version: '" + version + "'");
}

RenderedPrompt render_prompt(const ScenarioCell& cell, const ChoiceSet& set,
                             const std::string& template_version) {
  std::string text = template_text(template_version);

  std::ostringstream table;
  for (const auto& a : set.alternatives) {
    table << a.id << " | " << format_dollars(a.cost_cents) << " | "
          << a.time_min << " | " << (a.trucks ? "yes" : "no") << "\n";
  }

  replace_all(text, "{sex}", to_string(cell.sex));
  replace_all(text, "{age}", to_string(cell.age_band));
  replace_all(text, "{education}", education_phrase(cell.education));
  replace_all(text, "{income}", std::to_string(cell.income));
  replace_all(text, "{purpose}", purpose_phrase(cell.purpose));
  replace_all(text, "{table}", table.str());

  return RenderedPrompt{cell, set.index, std::move(text), template_version};
}

std::string format_answer(const std::vector<int>& order,
                          const std::string& reason) {
  std::ostringstream os;
  os << "RANKING: ";
  for (size_t i = 0; i < order.size(); ++i) {
    if (i > 0) os << " > ";
    os << order[i];
  }
  os << "\nREASON: " << reason << "\n";
  return os.str();
}

ParseResult parse_response(const std::string& raw) {
  auto fail = [&](ParseFailureKind kind, std::string detail) {
    return ParseResult(ParseFailure{kind, std::move(detail), raw});
  };

  const auto ranking_line = find_keyed_line(raw, "ranking");
  if (!ranking_line) {
    return fail(ParseFailureKind::malformed_structure, "no RANKING line");
  }

  // split on '>' or ',' (whichever the respondent used)
  std::vector<std::string> tokens;
  std::string current;
  for (char c : *ranking_line) {
    if (c == '>' || c == ',') {
      tokens.push_back(current);
      current.clear();
    } else {
      current += c;
    }
  }
  tokens.push_back(current);

  std::vector<int> order;
  for (const auto& tok : tokens) {
    if (trim(tok).empty() && tokens.size() == 1) {
      return fail(ParseFailureKind::malformed_structure, "empty RANKING line");
    }
    const auto id = parse_id_token(tok);
    if (!id) {
      return fail(ParseFailureKind::malformed_structure,
                  "unreadable ranking token: '" + trim(tok) + "'");
    }
    order.push_back(*id);
  }

  for (int id : order) {
    if (id < 1 || id > kNumAlternatives) {
      return fail(ParseFailureKind::out_of_range_id,
                  "alternative id " + std::to_string(id) +
                      " outside 1..13");
    }
  }
  if (order.size() != kNumAlternatives) {
    return fail(ParseFailureKind::rank_count_mismatch,
                "expected 13 ranked ids, got " +
                    std::to_string(order.size()));
  }
  std::array<bool, kNumAlternatives + 1> seen{};
  for (int id : order) {
    if (seen[id]) {
      return fail(ParseFailureKind::duplicate_rank,
                  "alternative " + std::to_string(id) + " ranked twice");
    }
    seen[id] = true;
  }
  // 13 in-range ids without duplicates is a permutation; this final guard
  // only fires if the checks above ever drift apart.
  for (int id = 1; id <= kNumAlternatives; ++id) {
    if (!seen[id]) {
      return fail(ParseFailureKind::missing_alternative,
                  "alternative " + std::to_string(id) + " missing");
    }
  }

  RankingResponse ok;
  ok.order = std::move(order);
  if (const auto reason = find_keyed_line(raw, "reason")) {
    ok.reason = trim(*reason);
  }
  return ParseResult(std::move(ok));
}

}  // namespace votkit
