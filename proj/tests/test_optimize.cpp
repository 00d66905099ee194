#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "cfgain/optimize.hpp"
#include "cfgain/scenario_io.hpp"

using namespace cfgain;
using prop::ScenarioSpec;

namespace {

// States driven purely by independent noises: covariance is diag(vars).
struct NoiseDriven {
    ScenarioSpec s;
    prop::FeedbackLaw law;
    prop::MomentMap map;
};

NoiseDriven noise_driven(const std::vector<double>& vars) {
    NoiseDriven nd;
    auto& s = nd.s;
    for (std::size_t i = 0; i < vars.size(); ++i)
        s.states.push_back(s.symbols.declare("x" + std::to_string(i), expr::VarKind::State));
    for (std::size_t i = 0; i < vars.size(); ++i) {
        s.noises.push_back(s.symbols.declare("n" + std::to_string(i), expr::VarKind::Noise));
        s.noiseDists.push_back(dist::DistributionSpec::gaussian(0.0, vars[i]));
    }
    for (std::size_t i = 0; i < vars.size(); ++i)
        s.dynamics.push_back(expr::parse("n" + std::to_string(i), s.symbols));
    s.horizon = 1;
    s.nominalControls = {{}};
    s.tubeHalfWidths = {std::vector<double>(vars.size(), 0.5)};
    for (std::size_t i = 0; i < vars.size(); ++i)
        s.initial.push_back(dist::DistributionSpec::point(0.0));
    prop::derive_nominal_states(s);
    nd.map = prop::build_moment_map(nd.s, nd.law, prop::close_loop(nd.s, nd.law, 0),
                                    prop::tube_surrogate(nd.s, 0));
    return nd;
}

// x+ = x + 0.1 u + w with u = g (x - 0): J(g) = w1 ((1+0.1g)^2/12 + 0.01).
struct ScalarProblem {
    ScenarioSpec s;
    prop::FeedbackLaw law;
    prop::MomentMap map;
};

ScalarProblem scalar_problem() {
    ScalarProblem p;
    auto& s = p.s;
    s.states.push_back(s.symbols.declare("x", expr::VarKind::State));
    s.controls.push_back(s.symbols.declare("u", expr::VarKind::Control));
    s.noises.push_back(s.symbols.declare("w", expr::VarKind::Noise));
    s.noiseDists.push_back(dist::DistributionSpec::gaussian(0.0, 0.01));
    s.dynamics.push_back(expr::parse("x + 0.1*u + w", s.symbols));
    s.horizon = 1;
    s.nominalControls = {{0.0}};
    s.tubeHalfWidths = {{0.5}};
    s.initial.push_back(dist::DistributionSpec::point(0.0));
    s.gainBox = {{{-100.0, 100.0}}};
    prop::derive_nominal_states(s);
    p.law = prop::make_linear_law(s);
    p.map = prop::build_moment_map(p.s, p.law, prop::close_loop(p.s, p.law, 0),
                                   prop::tube_surrogate(p.s, 0));
    return p;
}

} // namespace

TEST_CASE("objective combines trace and determinant") {
    auto fat = noise_driven({4.0, 4.0});
    CHECK(opt::objective(fat.map, {}, 1.0, 1.0) == doctest::Approx(24.0).epsilon(1e-12));

    auto thin = noise_driven({15.0, 1.0});
    CHECK(opt::objective(thin.map, {}, 0.0, 1.0) == doctest::Approx(15.0).epsilon(1e-12));
    // The trade-off that motivates mixing the two terms: the elongated
    // covariance has the larger trace but the smaller determinant.
    CHECK(opt::objective(thin.map, {}, 1.0, 0.0) > opt::objective(fat.map, {}, 1.0, 0.0));
    CHECK(opt::objective(thin.map, {}, 0.0, 1.0) < opt::objective(fat.map, {}, 0.0, 1.0));

    auto scalar = noise_driven({0.37});
    CHECK(opt::objective(scalar.map, {}, 1.0, 0.0) == doctest::Approx(0.37).epsilon(1e-12));

    auto four = noise_driven({2.0, 3.0, 0.5, 1.25});
    CHECK(opt::objective(four.map, {}, 0.0, 1.0) ==
          doctest::Approx(2.0 * 3.0 * 0.5 * 1.25).epsilon(1e-11));
    CHECK(opt::objective(four.map, {}, 1.0, 0.0) == doctest::Approx(6.75).epsilon(1e-11));
}

TEST_CASE("scalar problem recovers the analytic optimum") {
    auto p = scalar_problem();
    const auto box = prop::flatten_gain_box(p.s, p.law);
    const auto res = opt::optimize_gains(p.map, box, 1.0, 0.0, 4, 1);
    CHECK(res.converged);
    CHECK(res.theta(0) == doctest::Approx(-10.0).epsilon(1e-3));
    CHECK(res.objective == doctest::Approx(0.01).epsilon(1e-6));
    CHECK(res.records.size() == 4);
}

TEST_CASE("active bound is returned exactly") {
    auto p = scalar_problem();
    const std::vector<prop::GainBounds> box = {{-5.0, 5.0}};
    const auto res = opt::optimize_gains(p.map, box, 1.0, 0.0, 4, 1);
    CHECK(res.theta(0) == -5.0);
    CHECK(res.objective == doctest::Approx(0.25 / 12.0 + 0.01).epsilon(1e-9));
}

TEST_CASE("feasibility and descent hold on a vehicle step") {
    auto s = io::builtin_scenario("vehicle");
    auto law = prop::make_linear_law(s);
    const auto map =
        prop::build_moment_map(s, law, prop::close_loop(s, law, 0), prop::tube_surrogate(s, 0));
    const std::vector<prop::GainBounds> box(4, prop::GainBounds{-2.0, 1.0});
    const auto res = opt::optimize_gains(map, box, 1.0, 1.0, 3, 7);

    for (Eigen::Index i = 0; i < res.theta.size(); ++i) {
        CHECK(res.theta(i) >= -2.0);
        CHECK(res.theta(i) <= 1.0);
    }
    for (const auto& rec : res.records) {
        const double startJ = opt::objective(
            map, {rec.start.data(), static_cast<std::size_t>(rec.start.size())}, 1.0, 1.0);
        CHECK(res.objective <= rec.objective + 1e-12);
        CHECK(rec.objective <= startJ + 1e-12);
    }
}

TEST_CASE("optimization is bitwise deterministic") {
    auto p = scalar_problem();
    const auto box = prop::flatten_gain_box(p.s, p.law);
    const auto a = opt::optimize_gains(p.map, box, 1.0, 1.0, 8, 42);
    const auto b = opt::optimize_gains(p.map, box, 1.0, 1.0, 8, 42);
    CHECK(a.theta == b.theta);
    CHECK(a.objective == b.objective);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].start == b.records[i].start);
        CHECK(a.records[i].theta == b.records[i].theta);
        CHECK(a.records[i].objective == b.records[i].objective);
    }

    const auto c = opt::optimize_gains(p.map, box, 1.0, 1.0, 8, 43);
    CHECK(c.records[1].start != a.records[1].start);
}

TEST_CASE("solution is stationary or pinned with inward gradient") {
    auto s = io::builtin_scenario("oned");
    auto law = prop::make_linear_law(s);
    const auto map =
        prop::build_moment_map(s, law, prop::close_loop(s, law, 3), prop::tube_surrogate(s, 3));
    const auto box = prop::flatten_gain_box(s, law);
    const auto res = opt::optimize_gains(map, box, 1.0, 1.0, 4, 5);
    REQUIRE(res.converged);

    const double J = res.objective;
    for (Eigen::Index i = 0; i < res.theta.size(); ++i) {
        Eigen::VectorXd probe = res.theta;
        const double h = 1e-6 * (1.0 + std::abs(res.theta(i)));
        probe(i) = res.theta(i) + h;
        const double up =
            opt::objective(map, {probe.data(), static_cast<std::size_t>(probe.size())}, 1.0, 1.0);
        probe(i) = res.theta(i) - h;
        const double down =
            opt::objective(map, {probe.data(), static_cast<std::size_t>(probe.size())}, 1.0, 1.0);
        const double grad = (up - down) / (2.0 * h);
        const auto& b = box[static_cast<std::size_t>(i)];
        if (res.theta(i) == b.lower)
            CHECK(grad >= -1e-6);
        else if (res.theta(i) == b.upper)
            CHECK(grad <= 1e-6);
        else
            CHECK(std::abs(grad) <= 1e-6 * (1.0 + std::abs(J)));
    }
}

TEST_CASE("scaling both weights leaves the argmin in place") {
    auto s = io::builtin_scenario("vehicle");
    auto law = prop::make_linear_law(s);
    const auto map =
        prop::build_moment_map(s, law, prop::close_loop(s, law, 1), prop::tube_surrogate(s, 1));
    const auto box = prop::flatten_gain_box(s, law);
    const auto a = opt::optimize_gains(map, box, 1.0, 1.0, 3, 9);
    const auto b = opt::optimize_gains(map, box, 5.0, 5.0, 3, 9);
    CHECK((a.theta - b.theta).lpNorm<Eigen::Infinity>() < 1e-3);
    CHECK(b.objective == doctest::Approx(5.0 * a.objective).epsilon(1e-6));
}

TEST_CASE("flat objective resolves ties toward the smallest norm") {
    // The control never enters the dynamics, so J is constant in the gain.
    ScenarioSpec s;
    s.states.push_back(s.symbols.declare("x", expr::VarKind::State));
    s.controls.push_back(s.symbols.declare("u", expr::VarKind::Control));
    s.noises.push_back(s.symbols.declare("w", expr::VarKind::Noise));
    s.noiseDists.push_back(dist::DistributionSpec::gaussian(0.0, 1.0));
    s.dynamics.push_back(expr::parse("w", s.symbols));
    s.horizon = 1;
    s.nominalControls = {{0.0}};
    s.tubeHalfWidths = {{0.5}};
    s.initial.push_back(dist::DistributionSpec::point(0.0));
    s.gainBox = {{{-100.0, 100.0}}};
    prop::derive_nominal_states(s);
    auto law = prop::make_linear_law(s);
    const auto map =
        prop::build_moment_map(s, law, prop::close_loop(s, law, 0), prop::tube_surrogate(s, 0));

    const auto res = opt::optimize_gains(map, prop::flatten_gain_box(s, law), 1.0, 1.0, 6, 11);
    CHECK(res.theta(0) == 0.0);
    CHECK(res.converged);
    for (const auto& rec : res.records) {
        CHECK(rec.converged);
        CHECK(rec.iterations == 0);
    }
}

TEST_CASE("argument validation") {
    auto p = scalar_problem();
    const auto box = prop::flatten_gain_box(p.s, p.law);
    CHECK_THROWS_AS(opt::optimize_gains(p.map, box, 1.0, 0.0, 0, 1), Error);
    CHECK_THROWS_AS(opt::optimize_gains(p.map, {}, 1.0, 0.0, 2, 1), InconsistentDimensions);
}
