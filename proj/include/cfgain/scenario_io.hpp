#pragma once

#include <string>
#include <vector>

#include "cfgain/propagate.hpp"

// Scenario files are JSON. Required fields: states, controls, noises,
// dynamics, horizon, nominal_controls, initial, tube. Optional:
// nominal_states (derived by deterministic rollout when absent),
// weights {w1, w2} (default 1, 1), gain_box (default [-100, 100]), name.
//
// Distribution literals: {"type": "gaussian", "mean": m, "var": v},
// {"type": "uniform", "lo": a, "hi": b}, {"type": "point", "value": c}.
//
// The tube accepts a scalar (every state, every step), an array of nx
// half-widths (constant over steps), a full [horizon][nx] array, or an
// object {"shape": "box" | "ellipsoid", "half_widths": ...}.

namespace cfgain::io {

prop::ScenarioSpec load_scenario(const std::string& jsonText);
prop::ScenarioSpec load_scenario_file(const std::string& path);

// Bundled benchmark scenarios.
std::vector<std::string> builtin_names();
std::string builtin_scenario_json(const std::string& name);
prop::ScenarioSpec builtin_scenario(const std::string& name);

} // namespace cfgain::io
