#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cfgain/mc.hpp"
#include "cfgain/propagate.hpp"

namespace cfgain::run {

inline constexpr const char* kToolName = "cfgain";
inline constexpr const char* kToolVersion = "0.1.0";

struct RunConfig {
    std::string scenario = "oned"; // built-in name or path to a scenario file
    std::string method = "plain";  // baseline schedule: plain | lqr
    std::size_t particles = 1000000;
    std::uint64_t seed = 1;
    int starts = 8;
    int threads = 1;
    std::string outDir = "out";
    std::string format = "json"; // report emission: json | csv
};

struct StepSynthesis {
    Eigen::MatrixXd gain;
    double objective = 0.0;
    bool converged = false;
    int iterations = 0;
};

struct SynthesisOutcome {
    prop::FeedbackLaw law;
    prop::GainSchedule schedule;
    std::vector<StepSynthesis> steps;
};

// Per-step gain synthesis: tube surrogate, closed loop, moment map, box-
// constrained minimization of w1*tr(C) + w2*det(C). Declares the law's gain
// parameters in the scenario's symbol table.
SynthesisOutcome synthesize_gains(prop::ScenarioSpec& s, int starts, std::uint64_t seed);

struct RunArtifacts {
    nlohmann::ordered_json report;
    std::vector<Eigen::MatrixXd> particleSample; // [horizon + 1], at most 10^4 rows
};

RunArtifacts run_synthesize(const RunConfig& cfg);
RunArtifacts run_baseline(const RunConfig& cfg);

struct ValidationSummary {
    bool pass = false;
    std::vector<std::string> lines;
    std::vector<std::string> warnings;
};

ValidationSummary run_validate(const RunConfig& cfg);

// Invariant suites used by `validate`: closed-form moments against quadrature,
// and the Euler expansion identity on random expressions.
bool moment_quadrature_suite(std::string& detail);
bool euler_identity_suite(std::string& detail);

// report.json, metrics.csv, and particles.csv under cfg.outDir.
void write_artifacts(const RunArtifacts& artifacts, const std::string& outDir);

std::string metrics_csv(const nlohmann::ordered_json& report);
std::string particles_csv(const std::vector<std::string>& stateNames,
                          const std::vector<Eigen::MatrixXd>& sample);

} // namespace cfgain::run
