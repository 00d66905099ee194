#include "cfgain/scenario_io.hpp"

#include <fstream>
#include <sstream>
#include <utility>

#include "json.hpp"

namespace cfgain::io {

namespace {

using json = nlohmann::ordered_json;

const json& require(const json& j, const std::string& field) {
    if (!j.is_object() || !j.contains(field)) throw MissingField(field);
    return j.at(field);
}

double number(const json& j, const std::string& ctx) {
    if (!j.is_number()) throw Error("field '" + ctx + "' must be a number");
    return j.get<double>();
}

dist::DistributionSpec parse_distribution(const json& j, const std::string& ctx) {
    if (!j.is_object()) throw Error("field '" + ctx + "' must be a distribution object");
    if (!j.contains("type")) throw MissingField(ctx + ".type");
    const std::string type = j.at("type").get<std::string>();
    if (type == "gaussian")
        return dist::DistributionSpec::gaussian(number(require(j, "mean"), ctx + ".mean"),
                                                number(require(j, "var"), ctx + ".var"));
    if (type == "uniform")
        return dist::DistributionSpec::uniform(number(require(j, "lo"), ctx + ".lo"),
                                               number(require(j, "hi"), ctx + ".hi"));
    if (type == "point")
        return dist::DistributionSpec::point(number(require(j, "value"), ctx + ".value"));
    throw Error("field '" + ctx + "': unknown distribution type '" + type + "'");
}

std::string strip_offset_suffix(const std::string& what, std::size_t position) {
    const std::string suffix = " (at offset " + std::to_string(position) + ")";
    if (what.size() >= suffix.size() &&
        what.compare(what.size() - suffix.size(), suffix.size(), suffix) == 0)
        return what.substr(0, what.size() - suffix.size());
    return what;
}

expr::MixedTrigExpr parse_dynamics_entry(const std::string& text, const expr::SymbolTable& symbols,
                                         const std::string& state) {
    const std::string ctx = "dynamics for state '" + state + "': ";
    try {
        return expr::parse(text, symbols);
    } catch (const UnknownSymbol& e) {
        throw SyntaxError(ctx + "unknown symbol '" + e.name + "'", e.position);
    } catch (const SyntaxError& e) {
        throw SyntaxError(ctx + strip_offset_suffix(e.what(), e.position), e.position);
    } catch (const NotInClass& e) {
        throw NotInClass(ctx + e.what());
    } catch (const DegreeTooHigh& e) {
        throw DegreeTooHigh(ctx + e.what());
    }
}

std::vector<std::vector<double>> parse_matrix(const json& j, std::size_t rows, std::size_t cols,
                                              const std::string& ctx) {
    if (!j.is_array() || j.size() != rows)
        throw InconsistentDimensions("field '" + ctx + "' must have " + std::to_string(rows) +
                                     " rows, got " + (j.is_array() ? std::to_string(j.size()) : "non-array"));
    std::vector<std::vector<double>> out;
    out.reserve(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const json& row = j.at(r);
        std::vector<double> vals;
        if (row.is_number() && cols == 1) {
            vals.push_back(row.get<double>());
        } else {
            if (!row.is_array() || row.size() != cols)
                throw InconsistentDimensions("field '" + ctx + "' row " + std::to_string(r) +
                                             " must have " + std::to_string(cols) + " entries");
            for (std::size_t c = 0; c < cols; ++c)
                vals.push_back(number(row.at(c), ctx));
        }
        out.push_back(std::move(vals));
    }
    return out;
}

std::vector<std::vector<double>> parse_half_widths(const json& j, std::size_t horizon,
                                                   std::size_t nx) {
    std::vector<std::vector<double>> out;
    if (j.is_number()) {
        out.assign(horizon, std::vector<double>(nx, j.get<double>()));
    } else if (j.is_array() && (j.empty() || j.at(0).is_number())) {
        if (j.size() != nx)
            throw InconsistentDimensions("field 'tube' must list one half-width per state");
        std::vector<double> row;
        for (const auto& v : j) row.push_back(number(v, "tube"));
        out.assign(horizon, row);
    } else {
        out = parse_matrix(j, horizon, nx, "tube");
    }
    for (const auto& row : out)
        for (double eps : row)
            if (!(eps > 0.0)) throw Error("field 'tube': half-widths must be positive");
    return out;
}

prop::ScenarioSpec build_scenario(const json& j) {
    prop::ScenarioSpec s;
    if (j.contains("name")) s.name = j.at("name").get<std::string>();

    const json& states = require(j, "states");
    if (!states.is_array() || states.empty())
        throw Error("field 'states' must be a non-empty array of names");
    for (const auto& name : states)
        s.states.push_back(s.symbols.declare(name.get<std::string>(), expr::VarKind::State));

    const json& controls = require(j, "controls");
    if (!controls.is_array()) throw Error("field 'controls' must be an array of names");
    for (const auto& name : controls)
        s.controls.push_back(s.symbols.declare(name.get<std::string>(), expr::VarKind::Control));

    const json& noises = require(j, "noises");
    if (!noises.is_object()) throw Error("field 'noises' must be an object");
    for (const auto& [name, lit] : noises.items()) {
        s.noises.push_back(s.symbols.declare(name, expr::VarKind::Noise));
        s.noiseDists.push_back(parse_distribution(lit, "noises." + name));
    }

    const json& dynamics = require(j, "dynamics");
    if (!dynamics.is_object()) throw Error("field 'dynamics' must be an object");
    for (const auto& [name, text] : dynamics.items()) {
        const auto* v = s.symbols.find(name);
        if (v == nullptr || v->kind != expr::VarKind::State)
            throw InconsistentDimensions("dynamics entry for unknown state '" + name + "'");
    }
    for (const auto& st : s.states) {
        if (!dynamics.contains(st.name)) throw MissingField("dynamics." + st.name);
        s.dynamics.push_back(
            parse_dynamics_entry(dynamics.at(st.name).get<std::string>(), s.symbols, st.name));
    }

    const json& horizon = require(j, "horizon");
    if (!horizon.is_number_integer() || horizon.get<int>() < 0)
        throw Error("field 'horizon' must be a nonnegative integer");
    s.horizon = horizon.get<int>();

    const auto T = static_cast<std::size_t>(s.horizon);
    const auto nx = static_cast<std::size_t>(s.nx());
    const auto nu = static_cast<std::size_t>(s.nu());
    s.nominalControls = parse_matrix(require(j, "nominal_controls"), T, nu, "nominal_controls");

    const json& initial = require(j, "initial");
    for (const auto& st : s.states) {
        if (!initial.is_object() || !initial.contains(st.name))
            throw MissingField("initial." + st.name);
        s.initial.push_back(parse_distribution(initial.at(st.name), "initial." + st.name));
    }

    const json* tube = &require(j, "tube");
    if (tube->is_object()) {
        const std::string shape = tube->value("shape", std::string{"box"});
        if (shape == "box")
            s.tubeShape = prop::TubeShape::Box;
        else if (shape == "ellipsoid")
            s.tubeShape = prop::TubeShape::Ellipsoid;
        else
            throw Error("field 'tube.shape': unknown shape '" + shape + "'");
        tube = &require(*tube, "half_widths");
    }
    s.tubeHalfWidths = parse_half_widths(*tube, T, nx);

    if (j.contains("weights")) {
        const json& w = j.at("weights");
        s.w1 = number(require(w, "w1"), "weights.w1");
        s.w2 = number(require(w, "w2"), "weights.w2");
        if (s.w1 < 0.0 || s.w2 < 0.0) throw Error("field 'weights': weights must be nonnegative");
    }

    s.gainBox.assign(nu, std::vector<prop::GainBounds>(nx));
    if (j.contains("gain_box")) {
        const json& box = j.at("gain_box");
        const json& lo = require(box, "lo");
        const json& hi = require(box, "hi");
        std::vector<std::vector<double>> lower, upper;
        if (lo.is_number())
            lower.assign(nu, std::vector<double>(nx, lo.get<double>()));
        else
            lower = parse_matrix(lo, nu, nx, "gain_box.lo");
        if (hi.is_number())
            upper.assign(nu, std::vector<double>(nx, hi.get<double>()));
        else
            upper = parse_matrix(hi, nu, nx, "gain_box.hi");
        for (std::size_t i = 0; i < nu; ++i) {
            for (std::size_t jx = 0; jx < nx; ++jx) {
                if (!(lower[i][jx] < upper[i][jx]))
                    throw Error("field 'gain_box': lower bound must be below upper bound");
                s.gainBox[i][jx] = {lower[i][jx], upper[i][jx]};
            }
        }
    }

    if (j.contains("nominal_states"))
        s.nominalStates = parse_matrix(j.at("nominal_states"), T + 1, nx, "nominal_states");
    prop::derive_nominal_states(s);
    return s;
}

// ---------------------------------------------------------------------------
// Bundled scenarios
// ---------------------------------------------------------------------------

// 1D system x+ = x + cos(x) dt + u dt + a x^2 w with dt = 0.1, a = 0.1.
// Nominal controls are identically zero.
const char* const kOnedJson = R"json({
  "name": "oned",
  "states": ["x"],
  "controls": ["u"],
  "noises": {"w": {"type": "gaussian", "mean": 0.0, "var": 0.01}},
  "dynamics": {"x": "x + 0.1*cos(x) + 0.1*u + 0.1*x^2*w"},
  "horizon": 10,
  "nominal_controls": [[0.0], [0.0], [0.0], [0.0], [0.0], [0.0], [0.0], [0.0], [0.0], [0.0]],
  "initial": {"x": {"type": "uniform", "lo": -0.5, "hi": 0.5}},
  "tube": 0.5,
  "weights": {"w1": 1.0, "w2": 1.0},
  "gain_box": {"lo": -100.0, "hi": 100.0}
})json";

// Planar vehicle with speed/heading controls and additive actuation noise.
// The nominal inputs hold a constant speed and heading that reach the goal
// (0.7624, 0.2488) in 10 steps; they are not part of the benchmark
// definition, so they are stored explicitly for reproducibility.
const char* const kVehicleJson = R"json({
  "name": "vehicle",
  "states": ["x", "y"],
  "controls": ["v", "th"],
  "noises": {
    "wv": {"type": "gaussian", "mean": 0.0, "var": 0.01},
    "wth": {"type": "gaussian", "mean": 0.0, "var": 0.01}
  },
  "dynamics": {
    "x": "x + 0.1*(v + wv)*cos(th + wth)",
    "y": "y + 0.1*(v + wv)*sin(th + wth)"
  },
  "horizon": 10,
  "nominal_controls": [
    [0.801969575482761, 0.3154414898422808],
    [0.801969575482761, 0.3154414898422808],
    [0.801969575482761, 0.3154414898422808],
    [0.801969575482761, 0.3154414898422808],
    [0.801969575482761, 0.3154414898422808],
    [0.801969575482761, 0.3154414898422808],
    [0.801969575482761, 0.3154414898422808],
    [0.801969575482761, 0.3154414898422808],
    [0.801969575482761, 0.3154414898422808],
    [0.801969575482761, 0.3154414898422808]
  ],
  "initial": {
    "x": {"type": "uniform", "lo": -0.1, "hi": 0.1},
    "y": {"type": "uniform", "lo": -0.1, "hi": 0.1}
  },
  "tube": 0.1,
  "weights": {"w1": 1.0, "w2": 1.0},
  "gain_box": {"lo": -100.0, "hi": 100.0}
})json";

// Pendulum swing-up from the hanging position (-pi, 0) to upright (0, 0)
// with multiplicative control noise. The torque sequence below reaches the
// target under the deterministic dynamics; stored explicitly for
// reproducibility.
const char* const kPendulumJson = R"json({
  "name": "pendulum",
  "states": ["x", "y"],
  "controls": ["u"],
  "noises": {"w": {"type": "gaussian", "mean": 0.0, "var": 1.0}},
  "dynamics": {
    "x": "x + 0.1*y",
    "y": "y + 0.4*sin(x) + 0.1*u + 0.04*u*w"
  },
  "horizon": 10,
  "nominal_controls": [
    [16.952719592553475],
    [14.242401371289658],
    [11.094657082657601],
    [7.6748241275343565],
    [4.1514595653225665],
    [0.6231717697015192],
    [-2.9382523253674706],
    [-6.679327857319281],
    [-10.809849049778864],
    [-15.554399419806701]
  ],
  "initial": {
    "x": {"type": "uniform", "lo": -3.241592653589793, "hi": -3.041592653589793},
    "y": {"type": "uniform", "lo": -0.1, "hi": 0.1}
  },
  "tube": 0.1,
  "weights": {"w1": 1.0, "w2": 1.0},
  "gain_box": {"lo": -100.0, "hi": 100.0}
})json";

} // namespace

prop::ScenarioSpec load_scenario(const std::string& jsonText) {
    json j;
    try {
        j = json::parse(jsonText);
    } catch (const json::parse_error& e) {
        throw SyntaxError(std::string{"scenario JSON: "} + e.what(), e.byte);
    }
    try {
        return build_scenario(j);
    } catch (const json::exception& e) {
        throw Error(std::string{"scenario JSON: "} + e.what());
    }
}

prop::ScenarioSpec load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open scenario file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return load_scenario(buf.str());
}

std::vector<std::string> builtin_names() { return {"oned", "vehicle", "pendulum"}; }

std::string builtin_scenario_json(const std::string& name) {
    if (name == "oned") return kOnedJson;
    if (name == "vehicle") return kVehicleJson;
    if (name == "pendulum") return kPendulumJson;
    throw Error("unknown built-in scenario '" + name + "' (available: oned, vehicle, pendulum)");
}

prop::ScenarioSpec builtin_scenario(const std::string& name) {
    return load_scenario(builtin_scenario_json(name));
}

} // namespace cfgain::io
