#include "votkit/design.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "votkit/errors.hpp"

namespace votkit {

std::string format_dollars(Cents cents) {
  char buf[32];
  const char* sign = cents < 0 ? "-" : "";
  const Cents a = cents < 0 ? -cents : cents;
  std::snprintf(buf, sizeof(buf), "%s%lld.%02lld", sign,
                static_cast<long long>(a / 100),
                static_cast<long long>(a % 100));
  return buf;
}

const Alternative& ChoiceSet::by_id(int id) const {
  for (const auto& a : alternatives) {
    if (a.id == id) return a;
  }
  throw std::invalid_argument("ChoiceSet::by_id: no alternative with id " +
                              std::to_string(id));
}

const ChoiceSet& ChoicePackage::set(int index) const {
  for (const auto& s : sets) {
    if (s.index == index) return s;
  }
  throw std::invalid_argument("ChoicePackage::set: no set with index " +
                              std::to_string(index));
}

std::string to_string(Purpose p) {
  switch (p) {
    case Purpose::personal: return "personal";
    case Purpose::business: return "business";
    case Purpose::commute: return "commute";
    case Purpose::leisure: return "leisure";
  }
  throw std::invalid_argument("bad Purpose");
}

std::string to_string(Sex s) {
  return s == Sex::male ? "male" : "female";
}

std::string to_string(AgeBand a) {
  return a == AgeBand::twenties ? "20s" : "50s";
}

std::string to_string(Education e) {
  return e == Education::high_school ? "high_school" : "bachelors_plus";
}

Purpose purpose_from_string(const std::string& s) {
  if (s == "personal") return Purpose::personal;
  if (s == "business") return Purpose::business;
  if (s == "commute") return Purpose::commute;
  if (s == "leisure") return Purpose::leisure;
  throw std::invalid_argument("unknown purpose level: " + s);
}

Sex sex_from_string(const std::string& s) {
  if (s == "male") return Sex::male;
  if (s == "female") return Sex::female;
  throw std::invalid_argument("unknown sex level: " + s);
}

AgeBand age_band_from_string(const std::string& s) {
  if (s == "20s") return AgeBand::twenties;
  if (s == "50s") return AgeBand::fifties;
  throw std::invalid_argument("unknown age level: " + s);
}

Education education_from_string(const std::string& s) {
  if (s == "high_school") return Education::high_school;
  if (s == "bachelors_plus") return Education::bachelors_plus;
  throw std::invalid_argument("unknown education level: " + s);
}

std::string ScenarioCell::key() const {
  std::ostringstream os;
  os << package_label << '|' << to_string(purpose) << '|' << income << '|'
     << to_string(sex) << '|' << to_string(age_band) << '|'
     << to_string(education);
  return os.str();
}

namespace {

ChoiceSet make_set(int index,
                   std::initializer_list<std::tuple<Cents, int, bool>> rows) {
  ChoiceSet s;
  s.index = index;
  int id = 1;
  for (const auto& [cost, time, trucks] : rows) {
    s.alternatives.push_back(Alternative{id++, cost, time, trucks});
  }
  return s;
}

ChoicePackage make_calfee_original() {
  ChoicePackage p;
  p.label = "calfee-original";
  p.declared_ratio = 6.6;
  p.sets[0] = make_set(1, {{0, 40, true},
                           {35, 30, true},
                           {70, 30, true},
                           {100, 30, true},
                           {35, 20, true},
                           {70, 20, true},
                           {135, 20, true},
                           {200, 10, true},
                           {335, 10, true},
                           {35, 40, false},
                           {70, 30, false},
                           {175, 20, false},
                           {400, 10, false}});
  p.sets[1] = make_set(2, {{0, 60, true},
                           {50, 45, true},
                           {100, 45, true},
                           {150, 45, true},
                           {50, 30, true},
                           {100, 30, true},
                           {200, 30, true},
                           {300, 15, true},
                           {500, 15, true},
                           {50, 60, false},
                           {100, 45, false},
                           {250, 30, false},
                           {600, 15, false}});
  return p;
}

ChoicePackage make_ratio_29_1() {
  ChoicePackage p;
  p.label = "ratio-29.1";
  p.declared_ratio = 29.1;
  p.sets[0] = make_set(1, {{0, 40, true},
                           {150, 30, true},
                           {300, 30, true},
                           {450, 30, true},
                           {150, 20, true},
                           {300, 20, true},
                           {600, 20, true},
                           {900, 10, true},
                           {1500, 10, true},
                           {150, 40, false},
                           {300, 30, false},
                           {800, 20, false},
                           {1800, 10, false}});
  p.sets[1] = make_set(2, {{0, 60, true},
                           {225, 45, true},
                           {450, 45, true},
                           {675, 45, true},
                           {225, 30, true},
                           {450, 30, true},
                           {900, 30, true},
                           {1350, 15, true},
                           {2250, 15, true},
                           {225, 60, false},
                           {450, 45, false},
                           {1200, 30, false},
                           {2700, 15, false}});
  return p;
}

// Round cents*num/den to the nearest integer, ties away from zero.
// Exact integer arithmetic; inputs here stay far below the overflow range.
Cents scale_cents(Cents cents, const Rational& f) {
  const std::int64_t num = cents * f.num;
  const std::int64_t den = f.den;
  const std::int64_t q =
      num >= 0 ? (2 * num + den) / (2 * den) : -((-2 * num + den) / (2 * den));
  return q;
}

std::string one_decimal(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

}  // namespace

const FactorGrid& full_grid() {
  static const FactorGrid grid{{
      {"package",
       {"calfee-original", "ratio-9.7", "ratio-19.4", "ratio-29.1",
        "ratio-38.8", "ratio-48.5"}},
      {"purpose", {"personal", "business", "commute", "leisure"}},
      {"income", {"15", "25", "35", "50"}},
      {"sex", {"male", "female"}},
      {"age", {"20s", "50s"}},
      {"education", {"high_school", "bachelors_plus"}},
  }};
  return grid;
}

Rational Rational::parse(const std::string& text) {
  auto fail = [&] {
    throw std::invalid_argument("not a positive rational: '" + text + "'");
  };
  const auto slash = text.find('/');
  try {
    if (slash != std::string::npos) {
      const std::int64_t n = std::stoll(text.substr(0, slash));
      const std::int64_t d = std::stoll(text.substr(slash + 1));
      if (n <= 0 || d <= 0) fail();
      return Rational{n, d};
    }
    const auto dot = text.find('.');
    if (dot == std::string::npos) {
      const std::int64_t n = std::stoll(text);
      if (n <= 0) fail();
      return Rational{n, 1};
    }
    const std::string digits = text.substr(0, dot) + text.substr(dot + 1);
    const std::int64_t n = std::stoll(digits);
    std::int64_t d = 1;
    for (size_t i = 0; i < text.size() - dot - 1; ++i) d *= 10;
    if (n <= 0) fail();
    return Rational{n, d};
  } catch (const std::invalid_argument&) {
    throw;
  } catch (const std::exception&) {
    fail();
  }
  return {};  // unreachable
}

std::vector<ChoicePackage> builtin_packages() {
  return {make_calfee_original(), make_ratio_29_1()};
}

std::vector<ChoicePackage> standard_packages() {
  std::vector<ChoicePackage> out;
  out.push_back(make_calfee_original());
  const ChoicePackage base = make_ratio_29_1();
  for (const Rational& f :
       {Rational{1, 3}, Rational{2, 3}, Rational{1, 1}, Rational{4, 3},
        Rational{5, 3}}) {
    out.push_back(f.num == f.den ? base : scale_costs(base, f));
  }
  return out;
}

const ChoicePackage& find_package(const std::string& label) {
  static const std::vector<ChoicePackage> packages = standard_packages();
  for (const auto& p : packages) {
    if (p.label == label) return p;
  }
  throw DataIntegrityError("unknown package label: '" + label + "'");
}

ChoicePackage scale_costs(const ChoicePackage& package, const Rational& factor) {
  if (factor.num <= 0 || factor.den <= 0) {
    throw std::invalid_argument("scale_costs: factor must be positive");
  }
  ChoicePackage out = package;
  for (auto& set : out.sets) {
    for (auto& alt : set.alternatives) {
      alt.cost_cents = scale_cents(alt.cost_cents, factor);
    }
  }
  out.declared_ratio =
      std::round(package.declared_ratio * factor.value() * 10.0) / 10.0;
  out.label = "ratio-" + one_decimal(out.declared_ratio);
  return out;
}

double average_tradeoff_ratio(const ChoicePackage& package) {
  Cents total_cost_diff = 0;
  std::int64_t total_time_diff = 0;
  for (const auto& set : package.sets) {
    const auto& alts = set.alternatives;
    for (size_t i = 0; i < alts.size(); ++i) {
      for (size_t j = i + 1; j < alts.size(); ++j) {
        const int dt = alts[i].time_min - alts[j].time_min;
        const Cents dc = alts[i].cost_cents - alts[j].cost_cents;
        if (dt == 0) continue;
        // Keep only genuine trade-offs: the faster route costs strictly
        // more. Equal-cost or dominated pairs price time at nothing.
        if (!((dt < 0 && dc > 0) || (dt > 0 && dc < 0))) continue;
        total_cost_diff += dc < 0 ? -dc : dc;
        total_time_diff += dt < 0 ? -dt : dt;
      }
    }
  }
  if (total_time_diff == 0) {
    throw UndefinedRatioError("package '" + package.label +
                              "' has no cost/time trade-off pairs");
  }
  const double usd_per_min =
      static_cast<double>(total_cost_diff) / 100.0 / total_time_diff;
  return usd_per_min * 60.0;
}

std::vector<ScenarioCell> factorial_cells(const FactorGrid& grid) {
  static const std::vector<std::string> expected = {
      "package", "purpose", "income", "sex", "age", "education"};
  if (grid.factors.size() != expected.size()) {
    throw std::invalid_argument("factorial_cells: grid must list the six "
                                "context factors in order");
  }
  for (size_t i = 0; i < expected.size(); ++i) {
    if (grid.factors[i].first != expected[i]) {
      throw std::invalid_argument("factorial_cells: unknown or misplaced "
                                  "factor '" + grid.factors[i].first + "'");
    }
    if (grid.factors[i].second.empty()) {
      throw std::invalid_argument("factorial_cells: empty level list for '" +
                                  grid.factors[i].first + "'");
    }
  }

  std::vector<ScenarioCell> cells;
  for (const auto& pkg : grid.factors[0].second) {
    for (const auto& purpose : grid.factors[1].second) {
      for (const auto& income : grid.factors[2].second) {
        for (const auto& sex : grid.factors[3].second) {
          for (const auto& age : grid.factors[4].second) {
            for (const auto& edu : grid.factors[5].second) {
              ScenarioCell c;
              c.package_label = pkg;
              c.purpose = purpose_from_string(purpose);
              c.income = std::stoi(income);
              c.sex = sex_from_string(sex);
              c.age_band = age_band_from_string(age);
              c.education = education_from_string(edu);
              validate(c);
              cells.push_back(std::move(c));
            }
          }
        }
      }
    }
  }
  return cells;
}

nlohmann::json package_to_json(const ChoicePackage& package) {
  nlohmann::json sets = nlohmann::json::array();
  for (const auto& s : package.sets) {
    nlohmann::json alts = nlohmann::json::array();
    for (const auto& a : s.alternatives) {
      alts.push_back({{"id", a.id},
                      {"cost_cents", a.cost_cents},
                      {"time_min", a.time_min},
                      {"trucks", a.trucks}});
    }
    sets.push_back({{"index", s.index}, {"alternatives", std::move(alts)}});
  }
  return {{"label", package.label},
          {"declared_ratio", package.declared_ratio},
          {"sets", std::move(sets)}};
}

ChoicePackage package_from_json(const nlohmann::json& j) {
  ChoicePackage p;
  p.label = j.at("label").get<std::string>();
  p.declared_ratio = j.at("declared_ratio").get<double>();
  const auto& sets = j.at("sets");
  if (!sets.is_array() || sets.size() != 2) {
    throw std::invalid_argument("package JSON must carry exactly 2 sets");
  }
  for (size_t i = 0; i < 2; ++i) {
    ChoiceSet s;
    s.index = sets[i].at("index").get<int>();
    for (const auto& a : sets[i].at("alternatives")) {
      s.alternatives.push_back(Alternative{
          a.at("id").get<int>(), a.at("cost_cents").get<Cents>(),
          a.at("time_min").get<int>(), a.at("trucks").get<bool>()});
    }
    p.sets[i] = std::move(s);
  }
  validate(p);
  return p;
}

nlohmann::json grid_to_json(const FactorGrid& grid) {
  nlohmann::json factors = nlohmann::json::array();
  for (const auto& [name, levels] : grid.factors) {
    factors.push_back({{"name", name}, {"levels", levels}});
  }
  return {{"factors", std::move(factors)}};
}

FactorGrid grid_from_json(const nlohmann::json& j) {
  FactorGrid g;
  for (const auto& f : j.at("factors")) {
    g.factors.emplace_back(f.at("name").get<std::string>(),
                           f.at("levels").get<std::vector<std::string>>());
  }
  return g;
}

nlohmann::json cell_to_json(const ScenarioCell& cell) {
  return {{"package", cell.package_label},
          {"purpose", to_string(cell.purpose)},
          {"income", cell.income},
          {"sex", to_string(cell.sex)},
          {"age", to_string(cell.age_band)},
          {"education", to_string(cell.education)}};
}

ScenarioCell cell_from_json(const nlohmann::json& j) {
  ScenarioCell c;
  c.package_label = j.at("package").get<std::string>();
  c.purpose = purpose_from_string(j.at("purpose").get<std::string>());
  c.income = j.at("income").get<int>();
  c.sex = sex_from_string(j.at("sex").get<std::string>());
  c.age_band = age_band_from_string(j.at("age").get<std::string>());
  c.education = education_from_string(j.at("education").get<std::string>());
  validate(c);
  return c;
}

void validate(const ChoicePackage& package) {
  if (package.declared_ratio <= 0.0) {
    throw std::invalid_argument("package declared_ratio must be positive");
  }
  for (size_t i = 0; i < 2; ++i) {
    const auto& s = package.sets[i];
    if (s.index != static_cast<int>(i) + 1) {
      throw std::invalid_argument("package sets must carry indices 1 and 2");
    }
    if (s.alternatives.size() != kNumAlternatives) {
      throw std::invalid_argument("choice set must hold exactly 13 "
                                  "alternatives");
    }
    std::array<bool, kNumAlternatives + 1> seen{};
    for (const auto& a : s.alternatives) {
      if (a.id < 1 || a.id > kNumAlternatives || seen[a.id]) {
        throw std::invalid_argument("alternative ids must form a "
                                    "permutation of 1..13");
      }
      seen[a.id] = true;
      if (a.cost_cents < 0) {
        throw std::invalid_argument("alternative cost must be non-negative");
      }
      if (a.time_min <= 0) {
        throw std::invalid_argument("alternative time must be positive");
      }
    }
  }
}

void validate(const ScenarioCell& cell) {
  bool income_ok = false;
  for (int lvl : kIncomeLevels) income_ok |= (cell.income == lvl);
  if (!income_ok) {
    throw std::invalid_argument("income level " + std::to_string(cell.income) +
                                " is not one of {15, 25, 35, 50}");
  }
  const auto& packages = full_grid().factors[0].second;
  if (std::find(packages.begin(), packages.end(), cell.package_label) ==
      packages.end()) {
    throw std::invalid_argument("package label '" + cell.package_label +
                                "' is not a standard choice setting");
  }
}

}  // namespace votkit
