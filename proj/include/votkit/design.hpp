#ifndef VOTKIT_DESIGN_HPP
#define VOTKIT_DESIGN_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace votkit {

inline constexpr int kNumAlternatives = 13;

// Money is carried as integer cents so cost rescaling and serialization
// stay exact; render as dollars with two decimals at the boundary.
using Cents = std::int64_t;

std::string format_dollars(Cents cents);

// One row of a choice set: a route with a toll, a travel time and a flag
// for heavy-truck presence.
struct Alternative {
  int id = 0;  // 1..13, unique within a set
  Cents cost_cents = 0;
  int time_min = 0;
  bool trucks = false;

  double cost_usd() const { return static_cast<double>(cost_cents) / 100.0; }
  bool operator==(const Alternative&) const = default;
};

struct ChoiceSet {
  int index = 0;  // 1 or 2
  std::vector<Alternative> alternatives;  // exactly 13, ids a permutation of 1..13

  const Alternative& by_id(int id) const;
  bool operator==(const ChoiceSet&) const = default;
};

// A full survey design: two related 13-alternative choice sets plus the
// published average trade-off ratio used as the factor level.
struct ChoicePackage {
  std::string label;
  std::array<ChoiceSet, 2> sets;
  double declared_ratio = 0.0;  // USD per hour

  const ChoiceSet& set(int index) const;
  bool operator==(const ChoicePackage&) const = default;
};

enum class Purpose { personal, business, commute, leisure };
enum class Sex { male, female };
enum class AgeBand { twenties, fifties };
enum class Education { high_school, bachelors_plus };

std::string to_string(Purpose p);
std::string to_string(Sex s);
std::string to_string(AgeBand a);
std::string to_string(Education e);
Purpose purpose_from_string(const std::string& s);
Sex sex_from_string(const std::string& s);
AgeBand age_band_from_string(const std::string& s);
Education education_from_string(const std::string& s);

inline constexpr std::array<int, 4> kIncomeLevels = {15, 25, 35, 50};

// One combination of the six context factors.
struct ScenarioCell {
  std::string package_label;
  Purpose purpose = Purpose::personal;
  int income = 0;  // USD per hour, one of kIncomeLevels
  Sex sex = Sex::male;
  AgeBand age_band = AgeBand::twenties;
  Education education = Education::high_school;

  bool operator==(const ScenarioCell&) const = default;
  // Canonical single-line key, used for store resumability and seeding.
  std::string key() const;
};

// Ordered factor/level lists describing a (possibly restricted) factorial
// experiment over scenario cells.
struct FactorGrid {
  std::vector<std::pair<std::string, std::vector<std::string>>> factors;

  bool operator==(const FactorGrid&) const = default;
};

// Factor names in row order, with their full level sets.
const FactorGrid& full_grid();

// An exact rational scale factor (cost rescaling uses thirds, which have
// no finite decimal form).
struct Rational {
  std::int64_t num = 1;
  std::int64_t den = 1;

  double value() const { return static_cast<double>(num) / den; }
  static Rational parse(const std::string& text);  // "1/3", "2", "0.5"
};

// The two transcribed survey designs: the original low-ratio package
// ("calfee-original", 6.6 USD/h) and the rescaled package ("ratio-29.1").
std::vector<ChoicePackage> builtin_packages();

// All six standard choice settings: calfee-original plus the five packages
// obtained by rescaling ratio-29.1 costs by 1/3, 2/3, 1, 4/3, 5/3.
std::vector<ChoicePackage> standard_packages();

// Look up a standard package by label. Throws DataIntegrityError for
// unknown labels.
const ChoicePackage& find_package(const std::string& label);

// Rescale every cost by `factor` (rounded to the nearest cent, ties away
// from zero); times and truck flags unchanged. The declared ratio scales by
// the same factor, rounded to one decimal. The label becomes
// "ratio-<declared>".
ChoicePackage scale_costs(const ChoicePackage& package, const Rational& factor);

// Package-level average trade-off ratio in USD/h: over both choice sets,
// total |cost difference| divided by total |time difference| across all
// within-set pairs in which the faster alternative costs strictly more.
// Pairs with equal times, and pairs where the cheaper route is also the
// faster one, carry no time-money trade-off and are excluded.
// Throws UndefinedRatioError when no pair qualifies.
double average_tradeoff_ratio(const ChoicePackage& package);

// Cartesian product of all levels, in lexicographic order of the factor
// list (first factor varies slowest, levels in listed order).
std::vector<ScenarioCell> factorial_cells(const FactorGrid& grid);

// JSON schema: {label, declared_ratio, sets:[{index, alternatives:
// [{id, cost_cents, time_min, trucks}]}]}.
nlohmann::json package_to_json(const ChoicePackage& package);
ChoicePackage package_from_json(const nlohmann::json& j);

nlohmann::json grid_to_json(const FactorGrid& grid);
FactorGrid grid_from_json(const nlohmann::json& j);

nlohmann::json cell_to_json(const ScenarioCell& cell);
ScenarioCell cell_from_json(const nlohmann::json& j);

// Validates ids, level membership and set structure; throws
// std::invalid_argument describing the first violation.
void validate(const ChoicePackage& package);
void validate(const ScenarioCell& cell);

}  // namespace votkit

#endif  // VOTKIT_DESIGN_HPP
