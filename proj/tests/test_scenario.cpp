#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <string>

#include "json.hpp"

#include "cfgain/scenario_io.hpp"

using namespace cfgain;
using nlohmann::ordered_json;

namespace {

ordered_json parsed_builtin(const std::string& name) {
    return ordered_json::parse(io::builtin_scenario_json(name));
}

prop::ScenarioSpec load(const ordered_json& j) { return io::load_scenario(j.dump()); }

} // namespace

TEST_CASE("built-in scenarios resolve to the benchmark definitions") {
    auto oned = io::builtin_scenario("oned");
    CHECK(oned.name == "oned");
    CHECK(oned.nx() == 1);
    CHECK(oned.nu() == 1);
    CHECK(oned.nw() == 1);
    CHECK(oned.horizon == 10);
    CHECK(oned.tubeHalfWidths.size() == 10);
    CHECK(oned.tubeHalfWidths[0][0] == 0.5);
    CHECK(oned.w1 == 1.0);
    CHECK(oned.w2 == 1.0);
    CHECK(oned.gainBox[0][0].lower == -100.0);
    CHECK(oned.gainBox[0][0].upper == 100.0);
    const auto* init = std::get_if<dist::Uniform>(&oned.initial[0].value());
    REQUIRE(init != nullptr);
    CHECK(init->lower == -0.5);
    CHECK(init->upper == 0.5);
    const auto* noise = std::get_if<dist::Gaussian>(&oned.noiseDists[0].value());
    REQUIRE(noise != nullptr);
    CHECK(noise->mean == 0.0);
    CHECK(noise->variance == 0.01);
    for (const auto& row : oned.nominalControls) CHECK(row[0] == 0.0);

    auto vehicle = io::builtin_scenario("vehicle");
    CHECK(vehicle.nx() == 2);
    CHECK(vehicle.nu() == 2);
    CHECK(vehicle.nw() == 2);
    CHECK(vehicle.tubeHalfWidths[3] == std::vector<double>{0.1, 0.1});
    CHECK(vehicle.states[0].name == "x");
    CHECK(vehicle.controls[1].name == "th");

    auto pendulum = io::builtin_scenario("pendulum");
    CHECK(pendulum.nx() == 2);
    CHECK(pendulum.nu() == 1);
    const auto* pw = std::get_if<dist::Gaussian>(&pendulum.noiseDists[0].value());
    REQUIRE(pw != nullptr);
    CHECK(pw->variance == 1.0);

    CHECK(io::builtin_names() == std::vector<std::string>{"oned", "vehicle", "pendulum"});
    CHECK_THROWS_AS(io::builtin_scenario_json("cartpole"), Error);
}

TEST_CASE("missing required fields are reported by name") {
    for (const std::string field :
         {"states", "controls", "noises", "dynamics", "horizon", "nominal_controls", "initial",
          "tube"}) {
        auto j = parsed_builtin("oned");
        j.erase(field);
        CHECK_THROWS_AS(load(j), MissingField);
        try {
            load(j);
        } catch (const MissingField& e) {
            CHECK(e.field == field);
        }
    }

    auto j = parsed_builtin("oned");
    j["dynamics"].erase("x");
    CHECK_THROWS_WITH_AS(load(j), "missing required field 'dynamics.x'", MissingField);

    j = parsed_builtin("oned");
    j["initial"].erase("x");
    CHECK_THROWS_WITH_AS(load(j), "missing required field 'initial.x'", MissingField);

    j = parsed_builtin("oned");
    j["noises"]["w"].erase("var");
    CHECK_THROWS_AS(load(j), MissingField);
}

TEST_CASE("expression problems carry the offending field and location") {
    auto j = parsed_builtin("vehicle");
    j["dynamics"]["x"] = "x + cos(x*y)";
    try {
        load(j);
        FAIL("expected NotInClass");
    } catch (const NotInClass& e) {
        CHECK(std::string(e.what()).find("dynamics for state 'x'") != std::string::npos);
    }

    j = parsed_builtin("oned");
    j["dynamics"]["x"] = "x + 0.1*q";
    try {
        load(j);
        FAIL("expected SyntaxError");
    } catch (const SyntaxError& e) {
        const std::string what = e.what();
        CHECK(what.find("dynamics for state 'x'") != std::string::npos);
        CHECK(what.find("'q'") != std::string::npos);
        CHECK(e.position == 8);
    }

    j = parsed_builtin("oned");
    j["dynamics"]["x"] = "x + (0.1";
    CHECK_THROWS_AS(load(j), SyntaxError);

    j = parsed_builtin("oned");
    j["dynamics"]["x"] = "x^17";
    CHECK_THROWS_AS(load(j), DegreeTooHigh);

    CHECK_THROWS_AS(io::load_scenario("{ not json"), SyntaxError);
}

TEST_CASE("dimension mismatches are rejected") {
    auto j = parsed_builtin("oned");
    j["nominal_controls"] = {{0.0}, {0.0}};
    CHECK_THROWS_AS(load(j), InconsistentDimensions);

    j = parsed_builtin("vehicle");
    j["nominal_controls"][4] = {1.0};
    CHECK_THROWS_AS(load(j), InconsistentDimensions);

    j = parsed_builtin("oned");
    j["dynamics"]["z"] = "0";
    CHECK_THROWS_AS(load(j), InconsistentDimensions);

    j = parsed_builtin("vehicle");
    j["nominal_states"] = {{0.0, 0.0}, {0.1, 0.1}};
    CHECK_THROWS_AS(load(j), InconsistentDimensions);

    j = parsed_builtin("vehicle");
    j["tube"] = {0.1, 0.1, 0.1};
    CHECK_THROWS_AS(load(j), InconsistentDimensions);
}

TEST_CASE("value validation") {
    auto j = parsed_builtin("oned");
    j["tube"] = 0.0;
    CHECK_THROWS_AS(load(j), Error);

    j = parsed_builtin("oned");
    j["horizon"] = -1;
    CHECK_THROWS_AS(load(j), Error);

    j = parsed_builtin("oned");
    j["gain_box"] = {{"lo", 3.0}, {"hi", 3.0}};
    CHECK_THROWS_AS(load(j), Error);

    j = parsed_builtin("oned");
    j["weights"] = {{"w1", -1.0}, {"w2", 1.0}};
    CHECK_THROWS_AS(load(j), Error);

    j = parsed_builtin("oned");
    j["initial"]["x"] = {{"type", "triangular"}, {"lo", 0.0}, {"hi", 1.0}};
    CHECK_THROWS_AS(load(j), Error);

    j = parsed_builtin("oned");
    j["initial"]["x"] = {{"type", "uniform"}, {"lo", 1.0}, {"hi", -1.0}};
    CHECK_THROWS_AS(load(j), Error);
}

TEST_CASE("tube spellings normalize to per-step per-state half-widths") {
    auto j = parsed_builtin("vehicle");
    j["tube"] = 0.25;
    auto s = load(j);
    CHECK(s.tubeHalfWidths.size() == 10);
    CHECK(s.tubeHalfWidths[7] == std::vector<double>{0.25, 0.25});

    j["tube"] = {0.2, 0.3};
    s = load(j);
    CHECK(s.tubeHalfWidths[0] == std::vector<double>{0.2, 0.3});
    CHECK(s.tubeHalfWidths[9] == std::vector<double>{0.2, 0.3});

    ordered_json perStep = ordered_json::array();
    for (int k = 0; k < 10; ++k) perStep.push_back({0.1 + 0.01 * k, 0.2});
    j["tube"] = perStep;
    s = load(j);
    CHECK(s.tubeHalfWidths[4][0] == doctest::Approx(0.14).epsilon(1e-15));

    j["tube"] = {{"shape", "box"}, {"half_widths", 0.5}};
    s = load(j);
    CHECK(s.tubeShape == prop::TubeShape::Box);
    CHECK(s.tubeHalfWidths[0][0] == 0.5);

    j["tube"] = {{"shape", "ellipsoid"}, {"half_widths", 0.5}};
    s = load(j);
    CHECK(s.tubeShape == prop::TubeShape::Ellipsoid);
    CHECK_THROWS_AS(prop::tube_surrogate(s, 0), UnsupportedTube);

    j["tube"] = {{"shape", "capsule"}, {"half_widths", 0.5}};
    CHECK_THROWS_AS(load(j), Error);
}

TEST_CASE("provided nominal states are kept, absent ones derived") {
    auto j = parsed_builtin("oned");
    ordered_json rows = ordered_json::array();
    for (int k = 0; k <= 10; ++k) rows.push_back({0.01 * k});
    j["nominal_states"] = rows;
    auto s = load(j);
    CHECK(s.nominalStates[3][0] == doctest::Approx(0.03).epsilon(1e-15));

    auto derived = io::builtin_scenario("oned");
    CHECK(derived.nominalStates.size() == 11);
    CHECK(derived.nominalStates[1][0] == doctest::Approx(0.1).epsilon(1e-15));
}

TEST_CASE("scenario files round trip through disk") {
    const std::string path = "scenario_roundtrip_test.json";
    {
        std::ofstream out(path);
        out << io::builtin_scenario_json("pendulum");
    }
    auto s = io::load_scenario_file(path);
    CHECK(s.name == "pendulum");
    CHECK(s.horizon == 10);
    std::remove(path.c_str());

    CHECK_THROWS_AS(io::load_scenario_file("does_not_exist_492.json"), Error);
}

TEST_CASE("degenerate horizon") {
    auto j = parsed_builtin("oned");
    j["horizon"] = 0;
    j["nominal_controls"] = ordered_json::array();
    j["tube"] = 0.5;
    auto s = load(j);
    CHECK(s.horizon == 0);
    CHECK(s.nominalStates.size() == 1);
    CHECK(s.nominalStates[0][0] == 0.0);
    CHECK(s.tubeHalfWidths.empty());
}
