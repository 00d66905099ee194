#include "cfgain/propagate.hpp"

#include <cmath>
#include <set>
#include <utility>

namespace cfgain::prop {

namespace {

expr::MixedTrigExpr deviation(const ScenarioSpec& s, int stateIndex, int k) {
    auto x = expr::MixedTrigExpr::variable(s.states[static_cast<std::size_t>(stateIndex)]);
    return x - expr::MixedTrigExpr::constant(
                   s.nominalStates[static_cast<std::size_t>(k)][static_cast<std::size_t>(stateIndex)]);
}

} // namespace

void ScenarioSpec::assign(std::span<double> values, std::span<const double> stateVals,
                          std::span<const double> controlVals,
                          std::span<const double> noiseVals) const {
    for (std::size_t i = 0; i < states.size(); ++i)
        values[static_cast<std::size_t>(states[i].id)] = stateVals[i];
    for (std::size_t i = 0; i < controls.size(); ++i)
        values[static_cast<std::size_t>(controls[i].id)] = controlVals[i];
    for (std::size_t i = 0; i < noises.size(); ++i)
        values[static_cast<std::size_t>(noises[i].id)] = noiseVals[i];
}

std::vector<double> ScenarioSpec::noise_means() const {
    std::vector<double> means;
    means.reserve(noiseDists.size());
    for (const auto& d : noiseDists) means.push_back(d.mean());
    return means;
}

void derive_nominal_states(ScenarioSpec& s) {
    if (!s.nominalStates.empty()) return;
    std::vector<double> current;
    current.reserve(s.initial.size());
    for (const auto& d : s.initial) current.push_back(d.mean());

    const auto wbar = s.noise_means();
    std::vector<double> values(static_cast<std::size_t>(s.symbols.size()), 0.0);
    s.nominalStates.push_back(current);
    for (int k = 0; k < s.horizon; ++k) {
        s.assign(values, current, s.nominalControls[static_cast<std::size_t>(k)], wbar);
        std::vector<double> next(current.size());
        for (std::size_t i = 0; i < s.dynamics.size(); ++i) next[i] = s.dynamics[i].eval(values);
        current = std::move(next);
        s.nominalStates.push_back(current);
    }
}

int FeedbackLaw::parameterCount() const {
    int n = static_cast<int>(extras.size());
    for (const auto& row : gains) n += static_cast<int>(row.size());
    return n;
}

std::vector<int> FeedbackLaw::parameterIds() const {
    std::vector<int> ids;
    ids.reserve(static_cast<std::size_t>(parameterCount()));
    for (const auto& row : gains)
        for (const auto& g : row) ids.push_back(g.id);
    for (const auto& e : extras) ids.push_back(e.parameter.id);
    return ids;
}

FeedbackLaw make_linear_law(ScenarioSpec& s) {
    FeedbackLaw law;
    law.gains.resize(static_cast<std::size_t>(s.nu()));
    for (int i = 0; i < s.nu(); ++i) {
        for (int j = 0; j < s.nx(); ++j) {
            const std::string name =
                "g" + std::to_string(i + 1) + "_" + std::to_string(j + 1);
            law.gains[static_cast<std::size_t>(i)].push_back(
                s.symbols.declare(name, expr::VarKind::Parameter));
        }
    }
    return law;
}

void add_extra_term(ScenarioSpec& s, FeedbackLaw& law, int control,
                    const std::map<int, int>& statePowers, const std::string& paramName) {
    if (control < 0 || control >= s.nu()) throw Error("extra term: control index out of range");
    int total = 0;
    for (const auto& [j, p] : statePowers) {
        if (j < 0 || j >= s.nx()) throw Error("extra term: state index out of range");
        if (p <= 0) throw Error("extra term: powers must be positive");
        total += p;
    }
    if (total < 2) throw Error("extra term: total degree must be at least 2");
    ExtraFeedbackTerm term;
    term.control = control;
    term.statePowers = statePowers;
    term.parameter = s.symbols.declare(paramName, expr::VarKind::Parameter);
    law.extras.push_back(std::move(term));
}

std::vector<GainBounds> flatten_gain_box(const ScenarioSpec& s, const FeedbackLaw& law) {
    std::vector<GainBounds> box;
    box.reserve(static_cast<std::size_t>(law.parameterCount()));
    for (std::size_t i = 0; i < law.gains.size(); ++i)
        for (std::size_t j = 0; j < law.gains[i].size(); ++j) box.push_back(s.gainBox[i][j]);
    box.resize(static_cast<std::size_t>(law.parameterCount()));
    return box;
}

void control_input(const ScenarioSpec& s, const GainSchedule& schedule, int k,
                   std::span<const double> x, std::span<double> out) {
    const auto ku = static_cast<std::size_t>(k);
    const auto& xs = s.nominalStates[ku];
    for (int i = 0; i < s.nu(); ++i) {
        double v = s.nominalControls[ku][static_cast<std::size_t>(i)];
        for (int j = 0; j < s.nx(); ++j)
            v += schedule.gains[ku](i, j) * (x[static_cast<std::size_t>(j)] - xs[static_cast<std::size_t>(j)]);
        out[static_cast<std::size_t>(i)] = v;
    }
    for (std::size_t e = 0; e < schedule.extras.size(); ++e) {
        const auto& term = schedule.extras[e];
        double prod = schedule.extraCoeffs[ku][e];
        for (const auto& [j, p] : term.statePowers) {
            const double dx = x[static_cast<std::size_t>(j)] - xs[static_cast<std::size_t>(j)];
            for (int q = 0; q < p; ++q) prod *= dx;
        }
        out[static_cast<std::size_t>(term.control)] += prod;
    }
}

Eigen::VectorXd control_input(const ScenarioSpec& s, const GainSchedule& schedule, int k,
                              std::span<const double> x) {
    Eigen::VectorXd u(s.nu());
    control_input(s, schedule, k, x, std::span<double>(u.data(), static_cast<std::size_t>(u.size())));
    return u;
}

std::vector<expr::MixedTrigExpr> close_loop(const ScenarioSpec& s, const FeedbackLaw& law, int k) {
    if (k < 0 || static_cast<std::size_t>(k) >= s.nominalControls.size())
        throw Error("close_loop: step index out of range");
    if (s.nominalStates.size() != static_cast<std::size_t>(s.horizon) + 1)
        throw InconsistentDimensions("close_loop: nominal states not derived");

    std::vector<expr::MixedTrigExpr> replacements;
    replacements.reserve(static_cast<std::size_t>(s.nu()));
    for (int i = 0; i < s.nu(); ++i) {
        auto repl = expr::MixedTrigExpr::constant(
            s.nominalControls[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)]);
        for (int j = 0; j < s.nx(); ++j) {
            auto g = expr::MixedTrigExpr::variable(law.gains[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
            repl += g * deviation(s, j, k);
        }
        for (const auto& e : law.extras) {
            if (e.control != i) continue;
            auto term = expr::MixedTrigExpr::variable(e.parameter);
            for (const auto& [j, p] : e.statePowers) term = term * deviation(s, j, k).pow(p);
            repl += term;
        }
        replacements.push_back(std::move(repl));
    }

    std::vector<expr::MixedTrigExpr> closed;
    closed.reserve(s.dynamics.size());
    for (const auto& f : s.dynamics) {
        auto g = f;
        for (int i = 0; i < s.nu(); ++i)
            g = expr::substitute(g, s.controls[static_cast<std::size_t>(i)].id,
                                 replacements[static_cast<std::size_t>(i)]);
        closed.push_back(std::move(g));
    }
    return closed;
}

std::vector<dist::DistributionSpec> tube_surrogate(const ScenarioSpec& s, int k) {
    if (s.tubeShape != TubeShape::Box)
        throw UnsupportedTube("only axis-aligned box tubes are supported");
    if (k < 0 || static_cast<std::size_t>(k) >= s.tubeHalfWidths.size())
        throw Error("tube_surrogate: step index out of range");

    std::vector<dist::DistributionSpec> out;
    out.reserve(static_cast<std::size_t>(s.nx()));
    for (int j = 0; j < s.nx(); ++j) {
        const double center = s.nominalStates[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
        const double eps = s.tubeHalfWidths[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
        if (eps < 0.0) throw Error("tube_surrogate: negative half-width");
        if (eps == 0.0)
            out.push_back(dist::DistributionSpec::point(center));
        else
            out.push_back(dist::DistributionSpec::uniform(center - eps, center + eps));
    }
    return out;
}

const MomentMap::Target& MomentMap::second(int i, int j) const {
    if (i > j) std::swap(i, j);
    const int idx = i * nx_ - i * (i - 1) / 2 + (j - i);
    return second_[static_cast<std::size_t>(idx)];
}

namespace {

bool polynomial_constant(const expr::ParamPolynomial& p, Complex& value) {
    if (p.is_zero()) {
        value = Complex{0.0, 0.0};
        return true;
    }
    if (p.terms().size() == 1 && p.terms().begin()->first.empty()) {
        value = p.terms().begin()->second;
        return true;
    }
    return false;
}

MomentMap::Target build_target(const expr::MixedTrigExpr& e,
                               const std::map<int, const dist::DistributionSpec*>& byId,
                               const expr::SymbolTable& symbols) {
    MomentMap::Target target;
    for (const auto& raw : expr::euler_expand(e)) {
        MomentMap::Term term;
        term.poly = raw.poly;
        term.phase = raw.phase;
        if (term.phase.constant != 0.0) {
            term.poly *= std::exp(Complex{0.0, term.phase.constant});
            term.phase.constant = 0.0;
        }

        std::set<int> ids;
        for (const auto& [id, p] : raw.varPowers) ids.insert(id);
        for (const auto& [id, f] : raw.freq) ids.insert(id);
        for (int id : ids) {
            const auto it = byId.find(id);
            if (it == byId.end())
                throw Error("moment map: no distribution for variable '" + symbols.at(id).name + "'");
            const auto pw = raw.varPowers.find(id);
            const int alpha = pw == raw.varPowers.end() ? 0 : pw->second;
            const auto fq = raw.freq.find(id);
            expr::ParamAffine freq;
            if (fq != raw.freq.end()) freq = fq->second;
            if (freq.is_constant())
                term.poly *= dist::moment_exp(*it->second, {alpha, freq.constant});
            else
                term.factors.push_back({*it->second, alpha, std::move(freq)});
        }
        if (term.poly.is_zero()) continue;

        Complex constValue;
        if (term.factors.empty() && term.phase.is_zero() &&
            polynomial_constant(term.poly, constValue)) {
            target.constant += constValue;
        } else {
            target.terms.push_back(std::move(term));
        }
    }
    return target;
}

} // namespace

MomentMap build_moment_map(const ScenarioSpec& s, const FeedbackLaw& law,
                           const std::vector<expr::MixedTrigExpr>& closedLoop,
                           const std::vector<dist::DistributionSpec>& stateSurrogate) {
    if (closedLoop.size() != static_cast<std::size_t>(s.nx()) ||
        stateSurrogate.size() != static_cast<std::size_t>(s.nx()))
        throw InconsistentDimensions("moment map: state count mismatch");

    std::map<int, const dist::DistributionSpec*> byId;
    for (int j = 0; j < s.nx(); ++j)
        byId[s.states[static_cast<std::size_t>(j)].id] = &stateSurrogate[static_cast<std::size_t>(j)];
    for (int j = 0; j < s.nw(); ++j)
        byId[s.noises[static_cast<std::size_t>(j)].id] = &s.noiseDists[static_cast<std::size_t>(j)];

    MomentMap map;
    map.nx_ = s.nx();
    map.totalVars_ = s.symbols.size();
    map.paramIds_ = law.parameterIds();
    map.first_.reserve(closedLoop.size());
    for (const auto& f : closedLoop) map.first_.push_back(build_target(f, byId, s.symbols));
    for (int i = 0; i < s.nx(); ++i)
        for (int j = i; j < s.nx(); ++j)
            map.second_.push_back(build_target(
                closedLoop[static_cast<std::size_t>(i)] * closedLoop[static_cast<std::size_t>(j)],
                byId, s.symbols));
    return map;
}

namespace {

Complex eval_target(const MomentMap::Target& target, std::span<const double> values) {
    Complex acc = target.constant;
    for (const auto& term : target.terms) {
        Complex cur = term.poly.eval(values);
        if (cur == Complex{0.0, 0.0}) continue;
        const double ph = term.phase.eval(values);
        if (ph != 0.0) cur *= std::exp(Complex{0.0, ph});
        for (const auto& f : term.factors)
            cur *= dist::moment_exp(f.d, {f.alpha, f.freq.eval(values)});
        acc += cur;
    }
    return acc;
}

} // namespace

MomentState eval_moments(const MomentMap& map, std::span<const double> theta) {
    if (theta.size() != map.parameterIds().size())
        throw InconsistentDimensions("eval_moments: parameter count mismatch");

    std::vector<double> values(static_cast<std::size_t>(map.totalVars_), 0.0);
    for (std::size_t i = 0; i < theta.size(); ++i)
        values[static_cast<std::size_t>(map.parameterIds()[i])] = theta[i];

    const int n = map.stateCount();
    MomentState state;
    state.mean.resize(n);
    state.second.resize(n, n);
    for (int i = 0; i < n; ++i) {
        const Complex v = eval_target(map.first(i), values);
        state.mean(i) = v.real();
        state.maxImagResidue = std::max(state.maxImagResidue, std::abs(v.imag()));
    }
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
            const Complex v = eval_target(map.second(i, j), values);
            state.second(i, j) = v.real();
            state.second(j, i) = v.real();
            state.maxImagResidue = std::max(state.maxImagResidue, std::abs(v.imag()));
        }
    }
    return state;
}

} // namespace cfgain::prop
