#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "cfgain/baselines.hpp"
#include "cfgain/errors.hpp"
#include "cfgain/mc.hpp"
#include "cfgain/rng.hpp"
#include "cfgain/scenario_io.hpp"

using namespace cfgain;

namespace {

// 1D system with all randomness removed; nonzero nominal control so the
// feedback path is exercised.
prop::ScenarioSpec deterministic_scenario() {
    return io::load_scenario(R"({
        "states": ["x"],
        "controls": ["u"],
        "noises": {"w": {"type": "point", "value": 0.0}},
        "dynamics": {"x": "x + 0.1*cos(x) + 0.1*u + 0.1*x^2*w"},
        "horizon": 10,
        "nominal_controls": [0.2, 0.2, 0.2, 0.2, 0.2, 0.2, 0.2, 0.2, 0.2, 0.2],
        "initial": {"x": {"type": "point", "value": 0.2}},
        "tube": 0.5
    })");
}

bool identical(const mc::ParticleEnsemble& a, const mc::ParticleEnsemble& b) {
    if (a.steps.size() != b.steps.size()) return false;
    for (std::size_t k = 0; k < a.steps.size(); ++k)
        if (!(a.steps[k].array() == b.steps[k].array()).all()) return false;
    return true;
}

} // namespace

TEST_CASE("deterministic scenario reproduces the nominal rollout exactly") {
    auto s = deterministic_scenario();
    auto schedule = base::plain_schedule(s);
    SUBCASE("plain gains") {}
    SUBCASE("feedback is inert when every particle sits on the nominal") {
        schedule.gains.assign(10, Eigen::MatrixXd::Constant(1, 1, -3.0));
    }
    auto ensemble = mc::simulate(s, schedule, 64, 99);
    REQUIRE(ensemble.steps.size() == 11);
    REQUIRE(ensemble.count == 64);
    for (std::size_t k = 0; k < ensemble.steps.size(); ++k)
        for (Eigen::Index i = 0; i < 64; ++i)
            CHECK(ensemble.steps[k](i, 0) == s.nominalStates[k][0]);

    auto emp = mc::empirical_moments(ensemble, 10);
    CHECK(emp.state.mean(0) == s.nominalStates[10][0]);
    CHECK(emp.covariance(0, 0) == 0.0);
    CHECK(emp.meanStdErr(0) == 0.0);
}

TEST_CASE("ensembles are reproducible and seed-sensitive") {
    auto s = io::builtin_scenario("oned");
    auto schedule = base::plain_schedule(s);
    auto a = mc::simulate(s, schedule, 9000, 11);
    auto b = mc::simulate(s, schedule, 9000, 11);
    CHECK(identical(a, b));
    auto c = mc::simulate(s, schedule, 9000, 12);
    CHECK_FALSE((a.steps[0].array() == c.steps[0].array()).all());
}

TEST_CASE("thread count does not change the ensemble") {
    auto s = io::builtin_scenario("vehicle");
    auto schedule = base::lqr_gain_schedule(s);
    auto serial = mc::simulate(s, schedule, 30000, 5, 1);
    auto parallel = mc::simulate(s, schedule, 30000, 5, 4);
    CHECK(identical(serial, parallel));
}

TEST_CASE("simulate validates its inputs") {
    auto s = io::builtin_scenario("oned");
    auto schedule = base::plain_schedule(s);
    CHECK_THROWS_AS(mc::simulate(s, schedule, 0, 1), Error);

    auto shortened = schedule;
    shortened.gains.pop_back();
    CHECK_THROWS_AS(mc::simulate(s, shortened, 10, 1), InconsistentDimensions);

    auto misshapen = schedule;
    misshapen.gains[3] = Eigen::MatrixXd::Zero(2, 2);
    CHECK_THROWS_AS(mc::simulate(s, misshapen, 10, 1), InconsistentDimensions);
}

TEST_CASE("two-particle moments by hand") {
    Eigen::MatrixXd states(2, 1);
    states << -1.0, 1.0;
    auto m = mc::empirical_moments(states);
    CHECK(m.state.mean(0) == 0.0);
    CHECK(m.covariance(0, 0) == 2.0);
    CHECK(m.state.second(0, 0) == 1.0);
    CHECK(m.meanStdErr(0) == 1.0);

    CHECK_THROWS_AS(mc::empirical_moments(Eigen::MatrixXd::Zero(1, 1)), DegenerateEnsemble);
    auto s = io::builtin_scenario("oned");
    auto ensemble = mc::simulate(s, base::plain_schedule(s), 16, 1);
    CHECK_THROWS_AS(mc::empirical_moments(ensemble, 11), Error);
    CHECK_THROWS_AS(mc::empirical_moments(ensemble, -1), Error);
}

TEST_CASE("constant ensemble has exactly zero spread") {
    Eigen::MatrixXd states(500, 2);
    states.col(0).setConstant(0.7);
    states.col(1).setConstant(-1.3);
    auto m = mc::empirical_moments(states);
    CHECK(m.state.mean(0) == 0.7);
    CHECK(m.state.mean(1) == -1.3);
    CHECK((m.covariance.array() == 0.0).all());
    CHECK((m.secondStdErr.array() == 0.0).all());
    CHECK((m.covStdErr.array() == 0.0).all());
    CHECK(m.state.second(0, 0) == 0.7 * 0.7);
    CHECK(m.state.second(0, 1) == 0.7 * -1.3);
}

TEST_CASE("moment estimates match known distributions") {
    const int n = 400000;
    RngStream rng(2024);
    Eigen::MatrixXd states(n, 2);
    for (int i = 0; i < n; ++i) {
        states(i, 0) = rng.uniform(-0.5, 0.5);
        states(i, 1) = 0.3 + 0.05 * rng.gaussian01();
    }
    auto m = mc::empirical_moments(states);

    const double uniformSd = 1.0 / std::sqrt(12.0);
    CHECK(std::abs(m.state.mean(0)) <= 4.0 * uniformSd / std::sqrt(double(n)));
    CHECK(std::abs(m.covariance(0, 0) - 1.0 / 12.0) <= 4.0 * m.covStdErr(0, 0));
    CHECK(m.meanStdErr(0) == doctest::Approx(uniformSd / std::sqrt(double(n))).epsilon(0.02));

    CHECK(std::abs(m.state.mean(1) - 0.3) <= 4.0 * m.meanStdErr(1));
    CHECK(std::abs(m.covariance(1, 1) - 0.0025) <= 4.0 * m.covStdErr(1, 1));
    CHECK(std::abs(m.covariance(0, 1)) <= 4.0 * m.covStdErr(0, 1));

    // Uniform(-0.5,0.5) has E[c^4] = 1/80, so Var of the variance estimator is
    // (E[c^4] - Var^2)/n.
    const double theory = std::sqrt((1.0 / 80.0 - 1.0 / 144.0) / double(n));
    CHECK(m.covStdErr(0, 0) == doctest::Approx(theory).epsilon(0.02));
}

TEST_CASE("one-step check accepts the analytic moments on the builtins") {
    RngStream rng(77);
    for (const auto& name : io::builtin_names()) {
        CAPTURE(name);
        auto s = io::builtin_scenario(name);
        auto law = prop::make_linear_law(s);
        std::vector<double> theta(static_cast<std::size_t>(law.parameterCount()));
        for (auto& t : theta) t = rng.uniform(-2.0, 2.0);
        const int k = s.horizon / 2;
        auto report = mc::one_step_check(s, law, theta, k, 150000, 31, 4.0, 2);
        const int nx = s.nx();
        CHECK(report.checks.size() == static_cast<std::size_t>(nx + nx * (nx + 1) / 2));
        for (const auto& check : report.checks) {
            CAPTURE(check.moment);
            CHECK(check.deviation <= 4.0);
        }
        CHECK(report.pass);
    }
}

TEST_CASE("one-step check matches the strong-feedback gain") {
    auto s = io::builtin_scenario("oned");
    auto law = prop::make_linear_law(s);
    const double theta[] = {-10.0};
    auto report = mc::one_step_check(s, law, theta, 0, 150000, 55);
    CHECK(report.pass);

    const double wrongLength[] = {1.0, 2.0};
    CHECK_THROWS_AS(mc::one_step_check(s, law, wrongLength, 0, 100, 55), InconsistentDimensions);
}

TEST_CASE("comparison flags a prediction shifted by ten standard errors") {
    const int n = 10000;
    RngStream rng(9);
    Eigen::MatrixXd states(n, 2);
    for (int i = 0; i < n; ++i) {
        states(i, 0) = rng.gaussian01();
        states(i, 1) = 0.5 * rng.gaussian01() + 0.2 * states(i, 0);
    }
    auto emp = mc::empirical_moments(states);
    const std::vector<std::string> names = {"x", "y"};

    auto agreeing = mc::compare_moments(names, emp.state, emp);
    CHECK(agreeing.pass);
    CHECK(agreeing.tolerance == 4.0);

    auto shiftedMean = emp.state;
    shiftedMean.mean(0) += 10.0 * emp.meanStdErr(0);
    auto meanReport = mc::compare_moments(names, shiftedMean, emp);
    CHECK_FALSE(meanReport.pass);
    CHECK_FALSE(meanReport.checks[0].pass);
    CHECK(meanReport.checks[0].deviation == doctest::Approx(10.0).epsilon(1e-6));
    CHECK(meanReport.checks[1].pass);

    auto shiftedSecond = emp.state;
    shiftedSecond.second(0, 1) += 10.0 * emp.secondStdErr(0, 1);
    shiftedSecond.second(1, 0) = shiftedSecond.second(0, 1);
    auto secondReport = mc::compare_moments(names, shiftedSecond, emp);
    CHECK_FALSE(secondReport.pass);
}

TEST_CASE("small-sample statistics agree with a larger reference run") {
    auto s = io::builtin_scenario("oned");
    auto schedule = base::plain_schedule(s);
    auto small = mc::simulate(s, schedule, 40000, 21);
    auto large = mc::simulate(s, schedule, 400000, 22);
    for (int k = 1; k <= s.horizon; ++k) {
        CAPTURE(k);
        auto ms = mc::empirical_moments(small, k);
        auto ml = mc::empirical_moments(large, k);
        const double sdSmall = std::sqrt(ms.covariance(0, 0));
        const double sdLarge = std::sqrt(ml.covariance(0, 0));
        const double se = ms.covStdErr(0, 0) / (2.0 * sdSmall);
        CHECK(std::abs(sdSmall - sdLarge) <= 4.0 * se);
    }
}

TEST_CASE("confidence ellipse from hand eigendecompositions") {
    const Eigen::Vector2d center(0.3, -0.4);

    Eigen::Matrix2d diag;
    diag << 4.0, 0.0, 0.0, 1.0;
    auto e = mc::confidence_ellipse(diag, center, 0.98);
    const double q = -2.0 * std::log(0.02);
    CHECK(q == doctest::Approx(7.8240).epsilon(1e-4));
    CHECK(e.semiMajor == doctest::Approx(2.0 * std::sqrt(q)).epsilon(1e-12));
    CHECK(e.semiMinor == doctest::Approx(std::sqrt(q)).epsilon(1e-12));
    CHECK(e.semiMajor == doctest::Approx(5.5943).epsilon(1e-4));
    CHECK(e.semiMinor == doctest::Approx(2.7971).epsilon(1e-4));
    CHECK(e.angle == 0.0);
    CHECK((e.center.array() == center.array()).all());
    CHECK(e.coverage == 0.98);

    auto circle = mc::confidence_ellipse(Eigen::Matrix2d::Identity(), center, 0.5);
    CHECK(circle.semiMajor == doctest::Approx(std::sqrt(-2.0 * std::log(0.5))).epsilon(1e-12));
    CHECK(circle.semiMajor == circle.semiMinor);
    CHECK(circle.angle == 0.0);

    Eigen::Matrix2d tilted;
    tilted << 2.0, 1.0, 1.0, 2.0;
    auto t = mc::confidence_ellipse(tilted, center, 0.98);
    CHECK(t.angle == doctest::Approx(std::atan(1.0)).epsilon(1e-12));
    CHECK(t.semiMajor == doctest::Approx(std::sqrt(3.0 * q)).epsilon(1e-12));
    CHECK(t.semiMinor == doctest::Approx(std::sqrt(1.0 * q)).epsilon(1e-12));
}

TEST_CASE("confidence ellipse validates its inputs") {
    const Eigen::Vector2d center(0.0, 0.0);
    Eigen::Matrix2d indefinite;
    indefinite << 1.0, 2.0, 2.0, 1.0;
    CHECK_THROWS_AS(mc::confidence_ellipse(indefinite, center, 0.9), NotPSD);

    Eigen::Matrix2d asymmetric;
    asymmetric << 1.0, 0.5, 0.1, 1.0;
    CHECK_THROWS_AS(mc::confidence_ellipse(asymmetric, center, 0.9), NotPSD);

    CHECK_THROWS_AS(mc::confidence_ellipse(Eigen::Matrix2d::Identity(), center, 0.0), Error);
    CHECK_THROWS_AS(mc::confidence_ellipse(Eigen::Matrix2d::Identity(), center, 1.0), Error);
    CHECK_THROWS_AS(mc::confidence_ellipse(Eigen::Matrix2d::Identity(), center, -0.3), Error);
}

TEST_CASE("confidence ellipse round-trips the quadratic form") {
    RngStream rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::Matrix2d a;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) a(i, j) = rng.uniform(-2.0, 2.0);
        const Eigen::Matrix2d c = a * a.transpose() + 1e-3 * Eigen::Matrix2d::Identity();
        const double p = rng.uniform(0.5, 0.99);
        auto e = mc::confidence_ellipse(c, Eigen::Vector2d::Zero(), p);

        const double q = -2.0 * std::log1p(-p);
        Eigen::Matrix2d rot;
        rot << std::cos(e.angle), -std::sin(e.angle), std::sin(e.angle), std::cos(e.angle);
        Eigen::Matrix2d axes = Eigen::Matrix2d::Zero();
        axes(0, 0) = e.semiMajor * e.semiMajor / q;
        axes(1, 1) = e.semiMinor * e.semiMinor / q;
        const Eigen::Matrix2d rebuilt = rot * axes * rot.transpose();
        CHECK((rebuilt - c).norm() <= 1e-9 * c.norm());
    }
}

TEST_CASE("metric table reports eigenvalues, trace, and determinant") {
    Eigen::MatrixXd diag = Eigen::MatrixXd::Zero(2, 2);
    diag(0, 0) = 4.0;
    diag(1, 1) = 1.0;
    Eigen::MatrixXd tilted(2, 2);
    tilted << 2.0, 1.0, 1.0, 2.0;
    auto rows = mc::metric_table({diag, tilted, Eigen::MatrixXd::Zero(2, 2)});
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].lambdaMax == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(rows[0].lambdaMin == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rows[0].trace == 5.0);
    CHECK(rows[0].det == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(rows[1].lambdaMax == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(rows[1].lambdaMin == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rows[2].lambdaMax == 0.0);
    CHECK(rows[2].lambdaMin == 0.0);
    CHECK(rows[2].trace == 0.0);
    CHECK(rows[2].det == 0.0);
}

TEST_CASE("plain vehicle covariance trace grows every step") {
    auto s = io::builtin_scenario("vehicle");
    auto ensemble = mc::simulate(s, base::plain_schedule(s), 200000, 8);
    std::vector<Eigen::MatrixXd> covs;
    for (int k = 0; k <= s.horizon; ++k) covs.push_back(mc::empirical_moments(ensemble, k).covariance);
    auto rows = mc::metric_table(covs);
    for (std::size_t k = 0; k + 1 < rows.size(); ++k) {
        CAPTURE(k);
        CHECK(rows[k + 1].trace > rows[k].trace);
    }
}
