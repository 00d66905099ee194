#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cfgain/propagate.hpp"

namespace cfgain::mc {

// Particle states for every step of a closed-loop rollout. steps[k] holds one
// particle per row, so steps.front() is the sampled initial condition and
// steps.back() the terminal batch.
struct ParticleEnsemble {
    std::size_t count = 0;
    std::uint64_t seed = 0;
    std::vector<Eigen::MatrixXd> steps; // [horizon + 1] count x nx

    int stateCount() const { return steps.empty() ? 0 : static_cast<int>(steps.front().cols()); }
};

// Rolls the exact nonlinear dynamics forward under the schedule. Initial
// states and per-step noises are drawn fresh per particle; the result is
// deterministic in (scenario, schedule, count, seed) and independent of the
// thread count.
ParticleEnsemble simulate(const prop::ScenarioSpec& s, const prop::GainSchedule& schedule,
                          std::size_t count, std::uint64_t seed, int threads = 1);

struct EmpiricalMoments {
    prop::MomentState state;       // sample mean and raw second moment E[x x^T]
    Eigen::MatrixXd covariance;    // denominator count - 1
    Eigen::VectorXd meanStdErr;
    Eigen::MatrixXd secondStdErr;  // standard error of each E[x_i x_j] estimate
    Eigen::MatrixXd covStdErr;
    std::size_t count = 0;
};

EmpiricalMoments empirical_moments(const Eigen::MatrixXd& states);
EmpiricalMoments empirical_moments(const ParticleEnsemble& ensemble, int k);

// One moment component of a predicted-vs-sampled comparison.
struct MomentCheck {
    std::string moment;
    double analytic = 0.0;
    double empirical = 0.0;
    double stdErr = 0.0;
    double deviation = 0.0; // |analytic - empirical| in standard errors
    bool pass = false;
};

struct OneStepReport {
    bool pass = false;
    double tolerance = 4.0; // allowed deviation in standard errors
    std::vector<MomentCheck> checks;
};

// Componentwise |predicted - sampled| <= tolerance standard errors.
OneStepReport compare_moments(const std::vector<std::string>& stateNames,
                              const prop::MomentState& predicted, const EmpiricalMoments& sampled,
                              double tolerance = 4.0);

// Samples the step-k surrogate, pushes the particles through the closed loop
// once, and compares every first and second moment against eval_moments.
OneStepReport one_step_check(const prop::ScenarioSpec& s, const prop::FeedbackLaw& law,
                             std::span<const double> theta, int k, std::size_t count,
                             std::uint64_t seed, double tolerance = 4.0, int threads = 1);

struct EllipseParams {
    Eigen::Vector2d center;
    double semiMajor = 0.0;
    double semiMinor = 0.0;
    double angle = 0.0; // major-axis angle in [-pi/2, pi/2)
    double coverage = 0.0;
};

// Level set (x - c)^T C^{-1} (x - c) = -2 ln(1 - p) of a planar Gaussian.
// Isotropic covariances get angle 0.
EllipseParams confidence_ellipse(const Eigen::Matrix2d& c, const Eigen::Vector2d& center, double p);

struct MetricRow {
    double lambdaMax = 0.0;
    double lambdaMin = 0.0;
    double trace = 0.0;
    double det = 0.0;
};

std::vector<MetricRow> metric_table(const std::vector<Eigen::MatrixXd>& covariances);

} // namespace cfgain::mc
