#include <doctest.h>

#include <set>

#include <nlohmann/json.hpp>

#include "votkit/design.hpp"
#include "votkit/errors.hpp"

using namespace votkit;

TEST_SUITE("design") {

TEST_CASE("builtin packages carry the transcribed survey values") {
  const auto packages = builtin_packages();
  REQUIRE(packages.size() == 2);
  const ChoicePackage& calfee = packages[0];
  const ChoicePackage& high = packages[1];

  CHECK(calfee.label == "calfee-original");
  CHECK(calfee.declared_ratio == 6.6);
  CHECK(high.label == "ratio-29.1");
  CHECK(high.declared_ratio == 29.1);

  const Alternative& c19 = calfee.set(1).by_id(9);
  CHECK(c19.cost_cents == 335);
  CHECK(c19.time_min == 10);
  CHECK(c19.trucks);

  const Alternative& h213 = high.set(2).by_id(13);
  CHECK(h213.cost_cents == 2700);
  CHECK(h213.time_min == 15);
  CHECK_FALSE(h213.trucks);

  for (const auto& p : packages) {
    CHECK(p.set(1).by_id(1).cost_cents == 0);
    CHECK(p.set(2).by_id(1).cost_cents == 0);
    CHECK_NOTHROW(validate(p));
  }
}

// Content checksum over the static tables; a failure here means the
// transcription itself changed.
TEST_CASE("builtin package checksums") {
  const auto packages = builtin_packages();
  auto sums = [](const ChoicePackage& p) {
    Cents cost = 0;
    int time = 0, trucks = 0;
    for (const auto& s : p.sets) {
      for (const auto& a : s.alternatives) {
        cost += a.cost_cents;
        time += a.time_min;
        trucks += a.trucks ? 1 : 0;
      }
    }
    return std::tuple{cost, time, trucks};
  };
  CHECK(sums(packages[0]) == std::tuple{Cents{4110}, 775, 18});
  CHECK(sums(packages[1]) == std::tuple{Cents{18500}, 775, 18});
}

TEST_CASE("set 2 times are 1.5x set 1 times for matching ids") {
  for (const auto& p : builtin_packages()) {
    for (const auto& a : p.set(1).alternatives) {
      CHECK(p.set(2).by_id(a.id).time_min * 2 == a.time_min * 3);
    }
  }
}

TEST_CASE("packages round-trip through JSON bit-exactly") {
  for (const auto& p : standard_packages()) {
    const ChoicePackage back = package_from_json(package_to_json(p));
    CHECK(back == p);
    // and the serialized form itself is stable
    CHECK(package_to_json(back).dump() == package_to_json(p).dump());
  }
}

TEST_CASE("scale_costs rescales costs and the declared ratio") {
  const ChoicePackage high = builtin_packages()[1];

  SUBCASE("by one third") {
    const ChoicePackage scaled = scale_costs(high, Rational{1, 3});
    CHECK(scaled.set(1).by_id(2).cost_cents == 50);
    CHECK(scaled.declared_ratio == 9.7);
    CHECK(scaled.label == "ratio-9.7");
  }
  SUBCASE("identity") {
    const ChoicePackage same = scale_costs(high, Rational{1, 1});
    CHECK(same.sets == high.sets);
    CHECK(same.declared_ratio == high.declared_ratio);
  }
  SUBCASE("by five thirds") {
    const ChoicePackage scaled = scale_costs(high, Rational{5, 3});
    CHECK(scaled.set(1).by_id(13).cost_cents == 3000);
    CHECK(scaled.declared_ratio == 48.5);
  }
  SUBCASE("times and trucks never change") {
    const ChoicePackage scaled = scale_costs(high, Rational{7, 2});
    for (const auto& s : scaled.sets) {
      for (const auto& a : s.alternatives) {
        CHECK(a.time_min == high.set(s.index).by_id(a.id).time_min);
        CHECK(a.trucks == high.set(s.index).by_id(a.id).trucks);
      }
    }
  }
  SUBCASE("rounding is to the nearest cent, ties away from zero") {
    ChoicePackage p = high;
    p.sets[0].alternatives[1].cost_cents = 1;  // 1 cent / 2 -> 0.5 -> 1
    const ChoicePackage scaled = scale_costs(p, Rational{1, 2});
    CHECK(scaled.sets[0].alternatives[1].cost_cents == 1);
  }
  SUBCASE("non-positive factors are rejected") {
    CHECK_THROWS_AS(scale_costs(high, Rational{0, 1}), std::invalid_argument);
    CHECK_THROWS_AS(scale_costs(high, Rational{-1, 3}), std::invalid_argument);
  }
}

TEST_CASE("Rational::parse accepts fractions, integers and decimals") {
  CHECK(Rational::parse("1/3").num == 1);
  CHECK(Rational::parse("1/3").den == 3);
  CHECK(Rational::parse("2").value() == 2.0);
  CHECK(Rational::parse("0.5").value() == doctest::Approx(0.5));
  CHECK_THROWS_AS(Rational::parse("-1/3"), std::invalid_argument);
  CHECK_THROWS_AS(Rational::parse("abc"), std::invalid_argument);
}

TEST_CASE("average trade-off ratio reproduces the published levels") {
  const auto packages = builtin_packages();
  // exact values of the aggregate scheme on the transcribed tables
  CHECK(average_tradeoff_ratio(packages[0]) ==
        doctest::Approx(45.0 / 7.0).epsilon(1e-12));
  CHECK(average_tradeoff_ratio(packages[1]) ==
        doctest::Approx(813.0 / 28.0).epsilon(1e-12));
  // and the published factor levels hold within their tolerances
  CHECK(std::abs(average_tradeoff_ratio(packages[0]) - 6.6) <= 0.3);
  CHECK(std::abs(average_tradeoff_ratio(packages[1]) - 29.1) <= 0.5);
}

TEST_CASE("trade-off ratio scales linearly with a uniform cost rescale") {
  for (const auto& p : builtin_packages()) {
    const double base = average_tradeoff_ratio(p);
    for (const auto& f : {Rational{2, 1}, Rational{1, 2}, Rational{5, 3}}) {
      const double scaled = average_tradeoff_ratio(scale_costs(p, f));
      // cent rounding perturbs each pair by at most half a cent
      CHECK(scaled == doctest::Approx(base * f.value()).epsilon(2e-3));
    }
    CHECK(average_tradeoff_ratio(scale_costs(p, Rational{2, 1})) ==
          doctest::Approx(2.0 * base).epsilon(1e-12));
  }
}

TEST_CASE("ratio undefined when no trade-off pair exists") {
  ChoicePackage p = builtin_packages()[0];
  for (auto& s : p.sets) {
    for (auto& a : s.alternatives) a.time_min = 30;
  }
  CHECK_THROWS_AS(average_tradeoff_ratio(p), UndefinedRatioError);
}

TEST_CASE("standard packages cover the six published settings") {
  const auto packages = standard_packages();
  REQUIRE(packages.size() == 6);
  const std::vector<std::string> expected = {
      "calfee-original", "ratio-9.7", "ratio-19.4",
      "ratio-29.1",      "ratio-38.8", "ratio-48.5"};
  for (size_t i = 0; i < expected.size(); ++i) {
    CHECK(packages[i].label == expected[i]);
    CHECK(&find_package(expected[i]) != nullptr);
  }
  CHECK_THROWS_AS(find_package("ratio-99"), DataIntegrityError);
}

TEST_CASE("factorial grid enumerates the full design") {
  const auto cells = factorial_cells(full_grid());
  CHECK(cells.size() == 768);  // 6*4*4*2*2*2

  std::set<std::string> keys;
  for (const auto& c : cells) {
    CHECK_NOTHROW(validate(c));
    keys.insert(c.key());
  }
  CHECK(keys.size() == cells.size());  // no duplicates
}

TEST_CASE("factorial grid ordering is lexicographic in the factor list") {
  const auto cells = factorial_cells(full_grid());
  CHECK(cells[0].package_label == "calfee-original");
  CHECK(cells[0].purpose == Purpose::personal);
  CHECK(cells[0].income == 15);
  CHECK(cells[0].sex == Sex::male);
  // last factor varies fastest
  CHECK(cells[0].education == Education::high_school);
  CHECK(cells[1].education == Education::bachelors_plus);
  CHECK(cells[1].age_band == cells[0].age_band);
  CHECK(cells[2].age_band == AgeBand::fifties);
}

TEST_CASE("restricting the grid to one package gives the per-setting count") {
  FactorGrid grid = full_grid();
  grid.factors[0].second = {"ratio-29.1"};
  CHECK(factorial_cells(grid).size() == 128);
}

TEST_CASE("one level per factor gives exactly one cell") {
  FactorGrid grid;
  grid.factors = {{"package", {"calfee-original"}}, {"purpose", {"business"}},
                  {"income", {"25"}},               {"sex", {"female"}},
                  {"age", {"20s"}},                 {"education", {"bachelors_plus"}}};
  CHECK(factorial_cells(grid).size() == 1);
}

TEST_CASE("bad grids are rejected") {
  FactorGrid grid = full_grid();
  SUBCASE("empty level list") {
    grid.factors[2].second.clear();
    CHECK_THROWS_AS(factorial_cells(grid), std::invalid_argument);
  }
  SUBCASE("unknown factor name") {
    grid.factors[1].first = "weather";
    CHECK_THROWS_AS(factorial_cells(grid), std::invalid_argument);
  }
  SUBCASE("unknown level value") {
    grid.factors[2].second = {"17"};
    CHECK_THROWS_AS(factorial_cells(grid), std::invalid_argument);
  }
}

TEST_CASE("grid JSON round-trips") {
  const FactorGrid& g = full_grid();
  CHECK(grid_from_json(grid_to_json(g)) == g);
}

TEST_CASE("cell JSON round-trips") {
  const auto cells = factorial_cells(full_grid());
  const ScenarioCell& c = cells[333];
  CHECK(cell_from_json(cell_to_json(c)) == c);
}

TEST_CASE("format_dollars renders two decimals") {
  CHECK(format_dollars(0) == "0.00");
  CHECK(format_dollars(35) == "0.35");
  CHECK(format_dollars(2700) == "27.00");
  CHECK(format_dollars(105) == "1.05");
}

}  // TEST_SUITE
