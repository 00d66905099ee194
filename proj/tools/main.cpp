#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cfgain/errors.hpp"
#include "cfgain/runner.hpp"
#include "cfgain/scenario_io.hpp"

namespace {

using cfgain::run::RunConfig;

// 0 success, 1 validation failure, 2 configuration error, 3 numerical error.
constexpr int kOk = 0;
constexpr int kValidationFailure = 1;
constexpr int kConfigError = 2;
constexpr int kNumericalError = 3;

int write_and_report(const cfgain::run::RunArtifacts& artifacts, const RunConfig& cfg) {
    cfgain::run::write_artifacts(artifacts, cfg.outDir);
    if (artifacts.report.value("incomplete", false)) {
        std::cerr << "error: " << artifacts.report.value("error", "synthesis incomplete") << "\n";
        std::cerr << "partial report written to " << cfg.outDir << "/report.json\n";
        return kNumericalError;
    }
    if (artifacts.report.contains("solver"))
        for (const auto& step : artifacts.report["solver"])
            std::cout << "step " << step["step"] << ": objective "
                      << step["objective"].get<double>()
                      << (step["converged"].get<bool>() ? "" : " (not converged)") << "\n";
    std::cout << "report written to " << cfg.outDir << "/report.json\n";
    return kOk;
}

int run_report(const RunConfig& cfg) {
    const auto path = std::filesystem::path(cfg.outDir) / "report.json";
    std::ifstream in(path);
    if (!in) {
        std::cerr << "error: no report found at '" << path.string()
                  << "'; run synthesize or baseline first\n";
        return kConfigError;
    }
    std::ostringstream text;
    text << in.rdbuf();
    const auto report = nlohmann::ordered_json::parse(text.str());
    if (cfg.format == "csv")
        std::cout << cfgain::run::metrics_csv(report);
    else
        std::cout << report.dump(2) << "\n";
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Per-step state-feedback gain synthesis by exact moment propagation"};
    app.require_subcommand(1);

    RunConfig cfg;
    auto addCommon = [&](CLI::App* cmd) {
        cmd->add_option("--scenario", cfg.scenario,
                        "built-in scenario (oned, vehicle, pendulum) or path to a scenario JSON file");
        cmd->add_option("--seed", cfg.seed, "root random seed");
        cmd->add_option("--particles", cfg.particles, "Monte Carlo particle count")
            ->check(CLI::PositiveNumber);
        cmd->add_option("--starts", cfg.starts, "optimizer multi-start count")
            ->check(CLI::PositiveNumber);
        cmd->add_option("--threads", cfg.threads, "worker thread cap (results do not depend on it)")
            ->check(CLI::PositiveNumber);
        cmd->add_option("--out", cfg.outDir, "output directory");
    };

    auto* synthesize = app.add_subcommand("synthesize", "synthesize per-step feedback gains");
    addCommon(synthesize);
    auto* baseline = app.add_subcommand("baseline", "run a baseline gain schedule");
    addCommon(baseline);
    baseline->add_option("--method", cfg.method, "baseline schedule")
        ->required()
        ->check(CLI::IsMember({"plain", "lqr"}));
    auto* validate = app.add_subcommand("validate", "check analytic moments against sampling");
    addCommon(validate);
    auto* report = app.add_subcommand("report", "print an existing report");
    addCommon(report);
    report->add_option("--format", cfg.format, "output format")
        ->check(CLI::IsMember({"json", "csv"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    if (!report->parsed()) {
        bool builtin = false;
        for (const auto& name : cfgain::io::builtin_names()) builtin = builtin || cfg.scenario == name;
        if (!builtin && !std::filesystem::exists(cfg.scenario)) {
            std::cerr << "error: scenario '" << cfg.scenario
                      << "' is neither a built-in name nor an existing file\n";
            return kConfigError;
        }
    }
    if (validate->parsed() && cfg.particles < 2) {
        std::cerr << "error: validation needs at least two particles\n";
        return kConfigError;
    }

    try {
        if (synthesize->parsed()) return write_and_report(cfgain::run::run_synthesize(cfg), cfg);
        if (baseline->parsed()) return write_and_report(cfgain::run::run_baseline(cfg), cfg);
        if (report->parsed()) return run_report(cfg);
        if (validate->parsed()) {
            const auto summary = cfgain::run::run_validate(cfg);
            for (const auto& warning : summary.warnings) std::cerr << "warning: " << warning << "\n";
            for (const auto& line : summary.lines) std::cout << line << "\n";
            std::cout << (summary.pass ? "validation passed" : "validation FAILED") << "\n";
            return summary.pass ? kOk : kValidationFailure;
        }
    } catch (const cfgain::SyntaxError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const cfgain::UnknownSymbol& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const cfgain::NotInClass& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const cfgain::DegreeTooHigh& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const cfgain::MissingField& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const cfgain::InconsistentDimensions& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const cfgain::UnsupportedTube& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const cfgain::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNumericalError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNumericalError;
    }
    return kOk;
}
