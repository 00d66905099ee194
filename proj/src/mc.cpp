#include "cfgain/mc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>
#include <utility>

#include "cfgain/dist.hpp"
#include "cfgain/errors.hpp"
#include "cfgain/rng.hpp"

namespace cfgain::mc {
namespace {

// Particles are drawn in fixed-size chunks, each from its own sub-stream, so
// results do not depend on how chunks are distributed over threads.
constexpr std::size_t kChunkSize = 4096;

template <typename Body>
void run_chunked(std::size_t count, int threads, const Body& body) {
    const std::size_t chunks = (count + kChunkSize - 1) / kChunkSize;
    auto runChunk = [&](std::size_t c) {
        const std::size_t begin = c * kChunkSize;
        body(c, begin, std::min(begin + kChunkSize, count));
    };
    const std::size_t workers =
        std::min<std::size_t>(threads < 1 ? 1 : static_cast<std::size_t>(threads), chunks);
    if (workers <= 1) {
        for (std::size_t c = 0; c < chunks; ++c) runChunk(c);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failureLock;
    auto drain = [&] {
        try {
            for (std::size_t c = next.fetch_add(1); c < chunks; c = next.fetch_add(1)) runChunk(c);
        } catch (...) {
            const std::lock_guard<std::mutex> guard(failureLock);
            if (!failure) failure = std::current_exception();
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(drain);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

std::vector<expr::CompiledExpr> compile_all(const std::vector<expr::MixedTrigExpr>& exprs) {
    std::vector<expr::CompiledExpr> compiled;
    compiled.reserve(exprs.size());
    for (const auto& e : exprs) compiled.emplace_back(e);
    return compiled;
}

} // namespace

ParticleEnsemble simulate(const prop::ScenarioSpec& s, const prop::GainSchedule& schedule,
                          std::size_t count, std::uint64_t seed, int threads) {
    if (count < 1) throw Error("simulate: need at least one particle");
    const auto horizon = static_cast<std::size_t>(s.horizon);
    if (s.nominalStates.size() != horizon + 1)
        throw InconsistentDimensions("simulate: nominal states not derived");
    if (schedule.gains.size() != horizon)
        throw InconsistentDimensions("simulate: schedule length does not match the horizon");
    for (const auto& g : schedule.gains)
        if (g.rows() != s.nu() || g.cols() != s.nx())
            throw InconsistentDimensions("simulate: gain matrix has the wrong shape");
    if (!schedule.extras.empty() && schedule.extraCoeffs.size() != horizon)
        throw InconsistentDimensions("simulate: extra-term coefficients do not cover the horizon");

    const auto nx = static_cast<std::size_t>(s.nx());
    const auto compiled = compile_all(s.dynamics);

    ParticleEnsemble ensemble;
    ensemble.count = count;
    ensemble.seed = seed;
    ensemble.steps.assign(horizon + 1,
                          Eigen::MatrixXd(static_cast<Eigen::Index>(count), s.nx()));

    run_chunked(count, threads, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        RngStream rng = RngStream::substream(seed, chunk);
        std::vector<double> values(s.symbols.size(), 0.0);
        std::vector<double> x(nx), next(nx);
        std::vector<double> u(static_cast<std::size_t>(s.nu()));
        std::vector<double> w(static_cast<std::size_t>(s.nw()));
        for (std::size_t i = begin; i < end; ++i) {
            const auto row = static_cast<Eigen::Index>(i);
            for (std::size_t j = 0; j < nx; ++j) {
                x[j] = dist::sample_one(s.initial[j], rng);
                ensemble.steps[0](row, static_cast<Eigen::Index>(j)) = x[j];
            }
            for (std::size_t k = 0; k < horizon; ++k) {
                for (std::size_t j = 0; j < w.size(); ++j)
                    w[j] = dist::sample_one(s.noiseDists[j], rng);
                prop::control_input(s, schedule, static_cast<int>(k), x, u);
                s.assign(values, x, u, w);
                for (std::size_t j = 0; j < nx; ++j) next[j] = compiled[j].eval(values);
                x.swap(next);
                for (std::size_t j = 0; j < nx; ++j)
                    ensemble.steps[k + 1](row, static_cast<Eigen::Index>(j)) = x[j];
            }
        }
    });
    return ensemble;
}

EmpiricalMoments empirical_moments(const Eigen::MatrixXd& states) {
    const Eigen::Index n = states.rows();
    const Eigen::Index nx = states.cols();
    if (n < 2) throw DegenerateEnsemble("empirical moments require at least two particles");

    EmpiricalMoments m;
    m.count = static_cast<std::size_t>(n);
    m.state.mean.resize(nx);
    m.state.second.resize(nx, nx);
    m.covariance.resize(nx, nx);
    m.meanStdErr.resize(nx);
    m.secondStdErr.resize(nx, nx);
    m.covStdErr.resize(nx, nx);

    // Shifting by the first particle keeps the accumulations centered, so a
    // constant ensemble yields exact zeros.
    const Eigen::VectorXd shift = states.row(0).transpose();
    for (Eigen::Index j = 0; j < nx; ++j) {
        double sum = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) sum += states(i, j) - shift(j);
        m.state.mean(j) = shift(j) + sum / static_cast<double>(n);
    }

    const double dn = static_cast<double>(n);
    for (Eigen::Index a = 0; a < nx; ++a) {
        for (Eigen::Index b = a; b < nx; ++b) {
            double crossSum = 0.0;
            for (Eigen::Index i = 0; i < n; ++i)
                crossSum += (states(i, a) - m.state.mean(a)) * (states(i, b) - m.state.mean(b));
            const double cov = crossSum / static_cast<double>(n - 1);
            const double centralMean = crossSum / dn;
            const double second = centralMean + m.state.mean(a) * m.state.mean(b);

            double rawVarSum = 0.0;
            double centralVarSum = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double raw = states(i, a) * states(i, b) - second;
                const double central =
                    (states(i, a) - m.state.mean(a)) * (states(i, b) - m.state.mean(b)) - centralMean;
                rawVarSum += raw * raw;
                centralVarSum += central * central;
            }
            m.covariance(a, b) = m.covariance(b, a) = cov;
            m.state.second(a, b) = m.state.second(b, a) = second;
            m.secondStdErr(a, b) = m.secondStdErr(b, a) = std::sqrt(rawVarSum) / dn;
            m.covStdErr(a, b) = m.covStdErr(b, a) = std::sqrt(centralVarSum) / dn;
        }
    }
    for (Eigen::Index j = 0; j < nx; ++j)
        m.meanStdErr(j) = std::sqrt(m.covariance(j, j) / dn);
    return m;
}

EmpiricalMoments empirical_moments(const ParticleEnsemble& ensemble, int k) {
    if (k < 0 || static_cast<std::size_t>(k) >= ensemble.steps.size())
        throw Error("empirical_moments: step index out of range");
    return empirical_moments(ensemble.steps[static_cast<std::size_t>(k)]);
}

OneStepReport one_step_check(const prop::ScenarioSpec& s, const prop::FeedbackLaw& law,
                             std::span<const double> theta, int k, std::size_t count,
                             std::uint64_t seed, double tolerance, int threads) {
    const auto surrogate = prop::tube_surrogate(s, k);
    const auto closed = prop::close_loop(s, law, k);
    const auto map = prop::build_moment_map(s, law, closed, surrogate);
    const auto analytic = prop::eval_moments(map, theta);

    const auto ids = law.parameterIds();
    if (theta.size() != ids.size())
        throw InconsistentDimensions("one_step_check: parameter vector has the wrong length");
    std::vector<double> bindValues(s.symbols.size(), 0.0);
    for (std::size_t p = 0; p < ids.size(); ++p)
        bindValues[static_cast<std::size_t>(ids[p])] = theta[p];
    std::vector<expr::MixedTrigExpr> numeric;
    numeric.reserve(closed.size());
    for (const auto& e : closed) numeric.push_back(expr::bind_parameters(e, bindValues));
    const auto compiled = compile_all(numeric);

    const auto nx = static_cast<std::size_t>(s.nx());
    Eigen::MatrixXd pushed(static_cast<Eigen::Index>(count), s.nx());
    run_chunked(count, threads, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        RngStream rng = RngStream::substream(seed, chunk);
        std::vector<double> values(s.symbols.size(), 0.0);
        std::vector<double> x(nx);
        std::vector<double> u(static_cast<std::size_t>(s.nu()), 0.0);
        std::vector<double> w(static_cast<std::size_t>(s.nw()));
        for (std::size_t i = begin; i < end; ++i) {
            for (std::size_t j = 0; j < nx; ++j) x[j] = dist::sample_one(surrogate[j], rng);
            for (std::size_t j = 0; j < w.size(); ++j)
                w[j] = dist::sample_one(s.noiseDists[j], rng);
            s.assign(values, x, u, w);
            for (std::size_t j = 0; j < nx; ++j)
                pushed(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    compiled[j].eval(values);
        }
    });

    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(s.nx()));
    for (const auto& v : s.states) names.push_back(v.name);
    return compare_moments(names, analytic, empirical_moments(pushed), tolerance);
}

OneStepReport compare_moments(const std::vector<std::string>& stateNames,
                              const prop::MomentState& predicted, const EmpiricalMoments& sampled,
                              double tolerance) {
    const int nx = static_cast<int>(stateNames.size());
    if (predicted.mean.size() != nx || sampled.state.mean.size() != nx)
        throw InconsistentDimensions("compare_moments: state dimensions disagree");

    OneStepReport report;
    report.tolerance = tolerance;
    report.pass = true;
    auto add = [&](std::string label, double analytic, double empirical, double se) {
        MomentCheck check;
        check.moment = std::move(label);
        check.analytic = analytic;
        check.empirical = empirical;
        check.stdErr = se;
        const double gap = std::abs(analytic - empirical);
        const double floor = 1e-12 * (1.0 + std::abs(analytic));
        check.deviation = se > 0.0 ? gap / se
                          : gap <= floor ? 0.0
                                         : std::numeric_limits<double>::infinity();
        check.pass = gap <= tolerance * se + floor;
        report.pass = report.pass && check.pass;
        report.checks.push_back(std::move(check));
    };
    for (int i = 0; i < nx; ++i)
        add("E[" + stateNames[static_cast<std::size_t>(i)] + "]", predicted.mean(i),
            sampled.state.mean(i), sampled.meanStdErr(i));
    for (int i = 0; i < nx; ++i)
        for (int j = i; j < nx; ++j) {
            const auto& a = stateNames[static_cast<std::size_t>(i)];
            const auto& b = stateNames[static_cast<std::size_t>(j)];
            add(i == j ? "E[" + a + "^2]" : "E[" + a + "*" + b + "]", predicted.second(i, j),
                sampled.state.second(i, j), sampled.secondStdErr(i, j));
        }
    return report;
}

EllipseParams confidence_ellipse(const Eigen::Matrix2d& c, const Eigen::Vector2d& center,
                                 double p) {
    if (!(p > 0.0 && p < 1.0))
        throw Error("confidence_ellipse: coverage must lie strictly between 0 and 1");
    const double scale = std::max({1.0, std::abs(c(0, 0)), std::abs(c(1, 1))});
    if (std::abs(c(0, 1) - c(1, 0)) > 1e-9 * scale)
        throw NotPSD("confidence_ellipse: covariance is not symmetric");

    const Eigen::Matrix2d sym = 0.5 * (c + c.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(sym);
    const double lo = es.eigenvalues()(0);
    const double hi = es.eigenvalues()(1);
    if (lo < -1e-10 * std::max(1.0, hi))
        throw NotPSD("confidence_ellipse: covariance has a negative eigenvalue");

    const double q = -2.0 * std::log1p(-p);
    EllipseParams ellipse;
    ellipse.center = center;
    ellipse.coverage = p;
    ellipse.semiMajor = std::sqrt(std::max(hi, 0.0) * q);
    ellipse.semiMinor = std::sqrt(std::max(lo, 0.0) * q);
    if (hi - lo <= 1e-12 * std::max(1.0, std::abs(hi))) {
        ellipse.angle = 0.0;
        return ellipse;
    }
    const Eigen::Vector2d major = es.eigenvectors().col(1);
    double angle = std::atan2(major(1), major(0));
    constexpr double halfPi = 1.5707963267948966;
    if (angle >= halfPi) angle -= 2.0 * halfPi;
    if (angle < -halfPi) angle += 2.0 * halfPi;
    ellipse.angle = angle;
    return ellipse;
}

std::vector<MetricRow> metric_table(const std::vector<Eigen::MatrixXd>& covariances) {
    std::vector<MetricRow> rows;
    rows.reserve(covariances.size());
    for (const auto& c : covariances) {
        const Eigen::MatrixXd sym = 0.5 * (c + c.transpose());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
        MetricRow row;
        row.lambdaMax = es.eigenvalues()(c.rows() - 1);
        row.lambdaMin = es.eigenvalues()(0);
        row.trace = sym.trace();
        row.det = es.eigenvalues().prod();
        rows.push_back(row);
    }
    return rows;
}

} // namespace cfgain::mc
