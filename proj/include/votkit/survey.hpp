#ifndef VOTKIT_SURVEY_HPP
#define VOTKIT_SURVEY_HPP

#include <string>
#include <variant>
#include <vector>

#include "votkit/design.hpp"

namespace votkit {

struct RenderedPrompt {
  ScenarioCell cell;
  int set_index = 0;
  std::string text;
  std::string template_version;
};

struct RankingResponse {
  // order[k] holds the alternative id ranked (k+1)-th; a permutation of 1..13.
  std::vector<int> order;
  std::string reason;  // stored verbatim, never interpreted
};

enum class ParseFailureKind {
  malformed_structure,
  duplicate_rank,
  missing_alternative,
  out_of_range_id,
  rank_count_mismatch,
};

std::string to_string(ParseFailureKind kind);
ParseFailureKind parse_failure_kind_from_string(const std::string& s);

struct ParseFailure {
  ParseFailureKind kind = ParseFailureKind::malformed_structure;
  std::string detail;
  std::string raw;
};

using ParseResult = std::variant<RankingResponse, ParseFailure>;

inline bool parse_ok(const ParseResult& r) {
  return std::holds_alternative<RankingResponse>(r);
}

// The prompt template versions shipped with this build.
std::vector<std::string> template_versions();
const std::string& template_text(const std::string& version);

// Deterministic prompt for one cell and one choice set: persona block,
// purpose sentence, the 13-row alternative table, the no-repeated-ranks
// instruction and the RANKING/REASON answer format.
// Throws std::invalid_argument for an unknown template version.
RenderedPrompt render_prompt(const ScenarioCell& cell, const ChoiceSet& set,
                             const std::string& template_version);

// Serialize a ranking in the exact answer format the parser accepts.
std::string format_answer(const std::vector<int>& order,
                          const std::string& reason);

// Extract and validate the RANKING/REASON lines. Never throws on arbitrary
// input: anything that is not a full permutation of 1..13 comes back as a
// ParseFailure whose kind names the violated property.
ParseResult parse_response(const std::string& raw);

}  // namespace votkit

#endif  // VOTKIT_SURVEY_HPP
