#include "cfgain/runner.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <utility>

#include "cfgain/baselines.hpp"
#include "cfgain/dist.hpp"
#include "cfgain/errors.hpp"
#include "cfgain/optimize.hpp"
#include "cfgain/rng.hpp"
#include "cfgain/scenario_io.hpp"

namespace cfgain::run {
namespace {

using nlohmann::ordered_json;

constexpr std::size_t kParticleDumpCap = 10000;
constexpr double kEllipseCoverage = 0.98;

struct LoadedScenario {
    prop::ScenarioSpec spec;
    ordered_json source;
};

LoadedScenario load(const std::string& ref) {
    for (const auto& name : io::builtin_names())
        if (ref == name)
            return {io::builtin_scenario(ref), ordered_json::parse(io::builtin_scenario_json(ref))};
    std::ifstream in(ref);
    if (!in) throw Error("cannot open scenario file '" + ref + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return {io::load_scenario(text.str()), ordered_json::parse(text.str())};
}

ordered_json to_json(const Eigen::VectorXd& v) {
    ordered_json arr = ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

ordered_json to_json(const Eigen::MatrixXd& m) {
    ordered_json rows = ordered_json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        ordered_json row = ordered_json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

ordered_json config_echo(const RunConfig& cfg, const std::string& command) {
    ordered_json j;
    j["command"] = command;
    j["scenario"] = cfg.scenario;
    if (command == "baseline") j["method"] = cfg.method;
    j["particles"] = cfg.particles;
    j["seed"] = cfg.seed;
    j["starts"] = cfg.starts;
    return j;
}

ordered_json report_skeleton(const RunConfig& cfg, const std::string& command,
                             const LoadedScenario& loaded) {
    ordered_json j;
    j["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
    j["config"] = config_echo(cfg, command);
    j["scenario"] = loaded.source;
    return j;
}

std::vector<double> flatten_gain(const Eigen::MatrixXd& gain) {
    std::vector<double> theta;
    theta.reserve(static_cast<std::size_t>(gain.size()));
    for (Eigen::Index i = 0; i < gain.rows(); ++i)
        for (Eigen::Index j = 0; j < gain.cols(); ++j) theta.push_back(gain(i, j));
    return theta;
}

// Predicted one-step moments at the schedule's gains, per step.
ordered_json analytic_section(prop::ScenarioSpec& s, const prop::FeedbackLaw& law,
                              const prop::GainSchedule& schedule) {
    ordered_json arr = ordered_json::array();
    for (int k = 0; k < s.horizon; ++k) {
        const auto surrogate = prop::tube_surrogate(s, k);
        const auto closed = prop::close_loop(s, law, k);
        const auto map = prop::build_moment_map(s, law, closed, surrogate);
        const auto theta = flatten_gain(schedule.gains[static_cast<std::size_t>(k)]);
        const auto state = prop::eval_moments(map, theta);
        ordered_json entry;
        entry["step"] = k + 1;
        entry["mean"] = to_json(state.mean);
        entry["second"] = to_json(state.second);
        entry["covariance"] = to_json(state.covariance());
        entry["max_imag_residue"] = state.maxImagResidue;
        arr.push_back(std::move(entry));
    }
    return arr;
}

RunArtifacts assemble(const RunConfig& cfg, const std::string& command, LoadedScenario& loaded,
                      const prop::FeedbackLaw& law, const prop::GainSchedule& schedule,
                      const std::vector<StepSynthesis>* steps) {
    auto& s = loaded.spec;
    RunArtifacts artifacts;
    auto& j = artifacts.report;
    j = report_skeleton(cfg, command, loaded);

    ordered_json gains = ordered_json::array();
    for (const auto& g : schedule.gains) gains.push_back(to_json(g));
    j["gains"] = std::move(gains);

    if (steps) {
        ordered_json solver = ordered_json::array();
        for (std::size_t k = 0; k < steps->size(); ++k) {
            const auto& step = (*steps)[k];
            ordered_json entry;
            entry["step"] = k;
            entry["objective"] = step.objective;
            entry["converged"] = step.converged;
            entry["iterations"] = step.iterations;
            solver.push_back(std::move(entry));
        }
        j["solver"] = std::move(solver);
    }

    j["analytic"] = analytic_section(s, law, schedule);

    const auto ensemble = mc::simulate(s, schedule, cfg.particles, cfg.seed, cfg.threads);
    ordered_json empirical = ordered_json::array();
    std::vector<Eigen::MatrixXd> covariances;
    covariances.reserve(ensemble.steps.size());
    for (std::size_t k = 0; k < ensemble.steps.size(); ++k) {
        const auto m = mc::empirical_moments(ensemble, static_cast<int>(k));
        ordered_json entry;
        entry["step"] = k;
        entry["mean"] = to_json(m.state.mean);
        entry["covariance"] = to_json(m.covariance);
        entry["mean_stderr"] = to_json(m.meanStdErr);
        entry["cov_stderr"] = to_json(m.covStdErr);
        empirical.push_back(std::move(entry));
        covariances.push_back(m.covariance);
    }
    j["empirical"] = std::move(empirical);

    const auto metrics = mc::metric_table(covariances);
    ordered_json metricRows = ordered_json::array();
    for (std::size_t k = 0; k < metrics.size(); ++k) {
        ordered_json entry;
        entry["step"] = k;
        entry["lambda_max"] = metrics[k].lambdaMax;
        entry["lambda_min"] = metrics[k].lambdaMin;
        entry["trace"] = metrics[k].trace;
        entry["det"] = metrics[k].det;
        metricRows.push_back(std::move(entry));
    }
    j["metrics"] = std::move(metricRows);

    if (s.nx() == 2) {
        ordered_json ellipses = ordered_json::array();
        for (std::size_t k = 0; k < covariances.size(); ++k) {
            const auto m = mc::empirical_moments(ensemble, static_cast<int>(k));
            const auto e = mc::confidence_ellipse(covariances[k], m.state.mean, kEllipseCoverage);
            ordered_json entry;
            entry["step"] = k;
            entry["center"] = to_json(Eigen::VectorXd(e.center));
            entry["semi_major"] = e.semiMajor;
            entry["semi_minor"] = e.semiMinor;
            entry["angle"] = e.angle;
            entry["coverage"] = e.coverage;
            ellipses.push_back(std::move(entry));
        }
        j["ellipses"] = std::move(ellipses);
    }

    j["incomplete"] = false;

    const auto rows = static_cast<Eigen::Index>(std::min(ensemble.count, kParticleDumpCap));
    artifacts.particleSample.reserve(ensemble.steps.size());
    for (const auto& step : ensemble.steps) artifacts.particleSample.push_back(step.topRows(rows));
    return artifacts;
}

RunArtifacts incomplete_report(const RunConfig& cfg, const std::string& command,
                               const LoadedScenario& loaded, const std::string& error) {
    RunArtifacts artifacts;
    artifacts.report = report_skeleton(cfg, command, loaded);
    artifacts.report["incomplete"] = true;
    artifacts.report["error"] = error;
    return artifacts;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

SynthesisOutcome synthesize_gains(prop::ScenarioSpec& s, int starts, std::uint64_t seed) {
    SynthesisOutcome outcome;
    outcome.law = prop::make_linear_law(s);
    const auto box = prop::flatten_gain_box(s, outcome.law);
    outcome.schedule.gains.reserve(static_cast<std::size_t>(s.horizon));
    outcome.steps.reserve(static_cast<std::size_t>(s.horizon));

    for (int k = 0; k < s.horizon; ++k) {
        const auto surrogate = prop::tube_surrogate(s, k);
        const auto closed = prop::close_loop(s, outcome.law, k);
        const auto map = prop::build_moment_map(s, outcome.law, closed, surrogate);

        StepSynthesis step;
        if (outcome.law.parameterCount() == 0) {
            step.gain = Eigen::MatrixXd::Zero(s.nu(), s.nx());
            step.objective = opt::objective(map, {}, s.w1, s.w2);
            step.converged = true;
        } else {
            const auto res =
                opt::optimize_gains(map, box, s.w1, s.w2, starts, RngStream::mix(seed) + static_cast<std::uint64_t>(k));
            step.gain = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                       Eigen::RowMajor>>(res.theta.data(), s.nu(),
                                                                         s.nx());
            step.objective = res.objective;
            step.converged = res.converged;
            step.iterations = res.records[static_cast<std::size_t>(res.bestStart)].iterations;
        }
        outcome.schedule.gains.push_back(step.gain);
        outcome.steps.push_back(std::move(step));
    }
    return outcome;
}

RunArtifacts run_synthesize(const RunConfig& cfg) {
    auto loaded = load(cfg.scenario);
    SynthesisOutcome outcome;
    try {
        outcome = synthesize_gains(loaded.spec, cfg.starts, cfg.seed);
    } catch (const Error& e) {
        return incomplete_report(cfg, "synthesize", loaded, e.what());
    }
    return assemble(cfg, "synthesize", loaded, outcome.law, outcome.schedule, &outcome.steps);
}

RunArtifacts run_baseline(const RunConfig& cfg) {
    auto loaded = load(cfg.scenario);
    if (cfg.method != "plain" && cfg.method != "lqr")
        throw Error("unknown baseline method '" + cfg.method + "'");
    prop::GainSchedule schedule;
    try {
        schedule = cfg.method == "lqr" ? base::lqr_gain_schedule(loaded.spec)
                                       : base::plain_schedule(loaded.spec);
    } catch (const Error& e) {
        return incomplete_report(cfg, "baseline", loaded, e.what());
    }
    const auto law = prop::make_linear_law(loaded.spec);
    return assemble(cfg, "baseline", loaded, law, schedule, nullptr);
}

ValidationSummary run_validate(const RunConfig& cfg) {
    auto loaded = load(cfg.scenario);
    auto& s = loaded.spec;
    ValidationSummary summary;
    summary.pass = true;

    if (cfg.particles < 2) throw Error("validation needs at least two particles");
    if (cfg.particles < 1000)
        summary.warnings.push_back(
            "only " + std::to_string(cfg.particles) +
            " particles; standard errors are wide and the 4-SE intervals have little power");

    const auto outcome = synthesize_gains(s, cfg.starts, cfg.seed);
    for (int k = 0; k < s.horizon; ++k) {
        const auto theta = flatten_gain(outcome.schedule.gains[static_cast<std::size_t>(k)]);
        const auto report =
            mc::one_step_check(s, outcome.law, theta, k, cfg.particles,
                               RngStream::mix(cfg.seed) + 50000 + static_cast<std::uint64_t>(k),
                               4.0, cfg.threads);
        double worst = 0.0;
        for (const auto& check : report.checks) worst = std::max(worst, check.deviation);
        std::string line = "step " + std::to_string(k) + ": " + (report.pass ? "pass" : "FAIL") +
                           " (max deviation " + format_double(worst) + " SE)";
        if (!report.pass)
            for (const auto& check : report.checks)
                if (!check.pass)
                    line += "\n  " + check.moment + ": analytic " + format_double(check.analytic) +
                            " vs empirical " + format_double(check.empirical) + " (" +
                            format_double(check.deviation) + " SE)";
        summary.lines.push_back(std::move(line));
        summary.pass = summary.pass && report.pass;
    }

    std::string detail;
    const bool momentsOk = moment_quadrature_suite(detail);
    summary.lines.push_back(std::string("moment closed forms vs quadrature: ") +
                            (momentsOk ? "pass" : "FAIL") + " (" + detail + ")");
    summary.pass = summary.pass && momentsOk;

    const bool eulerOk = euler_identity_suite(detail);
    summary.lines.push_back(std::string("Euler expansion identity: ") +
                            (eulerOk ? "pass" : "FAIL") + " (" + detail + ")");
    summary.pass = summary.pass && eulerOk;
    return summary;
}

bool moment_quadrature_suite(std::string& detail) {
    const double pi4 = 0.7853981633974483;
    const std::vector<dist::DistributionSpec> dists = {
        dist::DistributionSpec::uniform(-0.5, 0.5), dist::DistributionSpec::uniform(-pi4, pi4),
        dist::DistributionSpec::gaussian(0.0, 0.01), dist::DistributionSpec::gaussian(1.0, 1.0)};
    const double freqs[] = {0.0, 1e-5, -1e-5, 0.1, -0.1, 1.0, -1.0, 10.0, -10.0};
    double worst = 0.0;
    int cases = 0;
    for (const auto& d : dists)
        for (int alpha = 0; alpha <= 8; ++alpha)
            for (const double b : freqs) {
                const dist::MomentQuery q{alpha, b};
                worst = std::max(worst,
                                 std::abs(dist::moment_exp(d, q) - dist::moment_exp_quadrature(d, q)));
                ++cases;
            }
    detail = "max |closed form - quadrature| = " + format_double(worst) + " over " +
             std::to_string(cases) + " cases";
    return worst <= 1e-9;
}

bool euler_identity_suite(std::string& detail) {
    RngStream rng(421);
    double worstRel = 0.0;
    for (int trial = 0; trial < 500; ++trial) {
        expr::SymbolTable table;
        const auto x = table.declare("x", expr::VarKind::State);
        const auto y = table.declare("y", expr::VarKind::State);
        const auto w = table.declare("w", expr::VarKind::Noise);
        const auto g = table.declare("g", expr::VarKind::Parameter);

        std::vector<expr::MixedTerm> terms;
        const int termCount = 1 + static_cast<int>(rng.uniform01() * 3.0);
        for (int t = 0; t < termCount; ++t) {
            expr::MixedTerm term;
            term.coeff = expr::ParamPolynomial::constant(rng.uniform(-2.0, 2.0));
            if (rng.uniform01() < 0.4) {
                auto linear = expr::ParamPolynomial::parameter(g.id);
                linear *= expr::Complex(rng.uniform(-1.0, 1.0));
                term.coeff += linear;
            }
            if (rng.uniform01() < 0.7) term.varPowers[x.id] = 1 + static_cast<int>(rng.uniform01() * 2.0);
            if (rng.uniform01() < 0.4) term.varPowers[y.id] = 1 + static_cast<int>(rng.uniform01() * 2.0);
            const int trigCount = static_cast<int>(rng.uniform01() * 3.0);
            for (int f = 0; f < trigCount; ++f) {
                expr::TrigFactor factor;
                factor.kind = rng.uniform01() < 0.5 ? expr::TrigKind::Cos : expr::TrigKind::Sin;
                factor.power = 1 + static_cast<int>(rng.uniform01() * 2.0);
                factor.arg.offset.constant = rng.uniform(-1.0, 1.0);
                for (const auto& v : {x, y, w})
                    if (rng.uniform01() < 0.6) {
                        expr::ParamAffine coeff;
                        coeff.constant = rng.uniform(-1.5, 1.5);
                        if (rng.uniform01() < 0.3) coeff.coeffs[g.id] = rng.uniform(-0.5, 0.5);
                        factor.arg.coeffs[v.id] = coeff;
                    }
                if (factor.arg.coeffs.empty()) factor.arg.coeffs[x.id] = expr::ParamAffine{1.0, {}};
                term.factors.push_back(std::move(factor));
            }
            terms.push_back(std::move(term));
        }
        const auto e = expr::MixedTrigExpr::from_terms(std::move(terms));
        const auto expanded = expr::euler_expand(e);

        double values[4];
        values[static_cast<std::size_t>(x.id)] = rng.uniform(-2.0, 2.0);
        values[static_cast<std::size_t>(y.id)] = rng.uniform(-2.0, 2.0);
        values[static_cast<std::size_t>(w.id)] = rng.uniform(-2.0, 2.0);
        values[static_cast<std::size_t>(g.id)] = rng.uniform(-1.5, 1.5);

        const double direct = e.eval(values);
        expr::Complex sum = 0.0;
        for (const auto& term : expanded) sum += term.eval(values);
        const double scale = std::max(1.0, std::abs(direct));
        worstRel = std::max(worstRel, std::abs(direct - sum.real()) / scale);
        worstRel = std::max(worstRel, std::abs(sum.imag()) / scale);
    }
    detail = "max relative residual = " + format_double(worstRel) + " over 500 expressions";
    return worstRel <= 1e-12;
}

void write_artifacts(const RunArtifacts& artifacts, const std::string& outDir) {
    namespace fs = std::filesystem;
    fs::create_directories(outDir);
    {
        std::ofstream out(fs::path(outDir) / "report.json", std::ios::binary);
        if (!out) throw Error("cannot write report to '" + outDir + "'");
        out << artifacts.report.dump(2) << '\n';
    }
    if (artifacts.report.contains("metrics")) {
        std::ofstream out(fs::path(outDir) / "metrics.csv", std::ios::binary);
        out << metrics_csv(artifacts.report);
    }
    if (!artifacts.particleSample.empty()) {
        std::vector<std::string> names;
        for (const auto& name : artifacts.report["scenario"]["states"])
            names.push_back(name.get<std::string>());
        std::ofstream out(fs::path(outDir) / "particles.csv", std::ios::binary);
        out << particles_csv(names, artifacts.particleSample);
    }
}

std::string metrics_csv(const nlohmann::ordered_json& report) {
    std::string csv = "step,lambda_max,lambda_min,trace,det\n";
    for (const auto& row : report.at("metrics")) {
        csv += std::to_string(row.at("step").get<int>());
        for (const char* key : {"lambda_max", "lambda_min", "trace", "det"})
            csv += "," + format_double(row.at(key).get<double>());
        csv += '\n';
    }
    return csv;
}

std::string particles_csv(const std::vector<std::string>& stateNames,
                          const std::vector<Eigen::MatrixXd>& sample) {
    std::string csv = "step,particle";
    for (const auto& name : stateNames) csv += "," + name;
    csv += '\n';
    for (std::size_t k = 0; k < sample.size(); ++k)
        for (Eigen::Index i = 0; i < sample[k].rows(); ++i) {
            csv += std::to_string(k) + "," + std::to_string(i);
            for (Eigen::Index j = 0; j < sample[k].cols(); ++j)
                csv += "," + format_double(sample[k](i, j));
            csv += '\n';
        }
    return csv;
}

} // namespace cfgain::run
