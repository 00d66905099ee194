#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cfgain/dist.hpp"
#include "cfgain/expr.hpp"

// Closed-loop construction and exact propagation of first and second
// moments through one time step. The state entering step k is modeled by
// the tube surrogate (independent uniforms over the tube box); noises
// keep their declared distributions. The resulting moment map evaluates
// mean and second moments as deterministic functions of the gains.

namespace cfgain::prop {

using expr::Complex;

struct GainBounds {
    double lower = -100.0;
    double upper = 100.0;
};

enum class TubeShape { Box, Ellipsoid };

struct ScenarioSpec {
    std::string name;
    expr::SymbolTable symbols;
    std::vector<expr::Variable> states;
    std::vector<expr::Variable> controls;
    std::vector<expr::Variable> noises;
    std::vector<dist::DistributionSpec> noiseDists; // one per noise
    std::vector<expr::MixedTrigExpr> dynamics;      // one per state
    int horizon = 0;
    std::vector<std::vector<double>> nominalControls; // [horizon][nu]
    std::vector<std::vector<double>> nominalStates;   // [horizon+1][nx]
    TubeShape tubeShape = TubeShape::Box;
    std::vector<std::vector<double>> tubeHalfWidths; // [horizon][nx]
    std::vector<dist::DistributionSpec> initial;     // one per state
    double w1 = 1.0;
    double w2 = 1.0;
    std::vector<std::vector<GainBounds>> gainBox; // [nu][nx]

    int nx() const { return static_cast<int>(states.size()); }
    int nu() const { return static_cast<int>(controls.size()); }
    int nw() const { return static_cast<int>(noises.size()); }

    // Writes the given numeric assignment into a values buffer indexed by
    // global variable id (parameters untouched).
    void assign(std::span<double> values, std::span<const double> stateVals,
                std::span<const double> controlVals, std::span<const double> noiseVals) const;

    std::vector<double> noise_means() const;
};

// Fills nominalStates by deterministic rollout when absent: x*(0) is the
// mean of the initial distribution, then x*(k+1) = f(x*(k), u*(k), E[w]).
void derive_nominal_states(ScenarioSpec& s);

// One extra feedback monomial q * prod_j (x_j - x_j*)^{p_j}, total degree
// >= 2, attached to one control and carrying its own parameter.
struct ExtraFeedbackTerm {
    int control = 0;
    std::map<int, int> statePowers; // state index -> power
    expr::Variable parameter;
};

struct FeedbackLaw {
    std::vector<std::vector<expr::Variable>> gains; // [nu][nx] parameters
    std::vector<ExtraFeedbackTerm> extras;

    int parameterCount() const;
    // Flattened parameter order: gain matrix row-major, then extras.
    std::vector<int> parameterIds() const;
};

// Declares gain parameters g_<i>_<j> in the scenario's symbol table.
FeedbackLaw make_linear_law(ScenarioSpec& s);

// Declares one more parameter and appends the extra term to the law.
void add_extra_term(ScenarioSpec& s, FeedbackLaw& law, int control,
                    const std::map<int, int>& statePowers, const std::string& paramName);

// Box bounds flattened into the law's parameter order; extra-term
// parameters get the default bounds.
std::vector<GainBounds> flatten_gain_box(const ScenarioSpec& s, const FeedbackLaw& law);

// Numeric gain schedule over the horizon (the law with numbers filled in).
struct GainSchedule {
    std::vector<Eigen::MatrixXd> gains;              // [horizon] nu x nx
    std::vector<ExtraFeedbackTerm> extras;           // shapes shared across steps
    std::vector<std::vector<double>> extraCoeffs;    // [horizon][extras.size()]
};

// u(k) = u*(k) + G(k)(x - x*(k)) + extra terms evaluated at x - x*(k).
Eigen::VectorXd control_input(const ScenarioSpec& s, const GainSchedule& schedule, int k,
                              std::span<const double> x);
void control_input(const ScenarioSpec& s, const GainSchedule& schedule, int k,
                   std::span<const double> x, std::span<double> out);

// Substitutes u_i(k) = sum_j g_ij (x_j - x_j*(k)) + extras + u_i*(k) into
// every dynamics expression. The result references states, noises, and
// gain parameters only.
std::vector<expr::MixedTrigExpr> close_loop(const ScenarioSpec& s, const FeedbackLaw& law, int k);

// Independent Uniform(x_i*(k) - eps_i(k), x_i*(k) + eps_i(k)) per state.
std::vector<dist::DistributionSpec> tube_surrogate(const ScenarioSpec& s, int k);

struct MomentState {
    Eigen::VectorXd mean;
    Eigen::MatrixXd second; // E[x x^T]
    double maxImagResidue = 0.0;

    Eigen::MatrixXd covariance() const { return second - mean * mean.transpose(); }
};

// Expectations of every next-state moment of order 1 and 2 as functions
// of the gain parameters. Factors whose frequency does not involve the
// gains are folded into the coefficient at build time, so evaluation
// only queries the moment oracle where the gains actually enter.
class MomentMap {
public:
    struct Factor {
        dist::DistributionSpec d;
        int alpha;
        expr::ParamAffine freq;
    };
    struct Term {
        expr::ParamPolynomial poly;
        expr::ParamAffine phase;
        std::vector<Factor> factors;
    };
    struct Target {
        Complex constant{0.0, 0.0};
        std::vector<Term> terms;
    };

    int stateCount() const { return nx_; }
    const std::vector<int>& parameterIds() const { return paramIds_; }
    const Target& first(int i) const { return first_[static_cast<std::size_t>(i)]; }
    const Target& second(int i, int j) const;

private:
    friend MomentMap build_moment_map(const ScenarioSpec&, const FeedbackLaw&,
                                      const std::vector<expr::MixedTrigExpr>&,
                                      const std::vector<dist::DistributionSpec>&);
    friend MomentState eval_moments(const MomentMap&, std::span<const double>);

    int nx_ = 0;
    int totalVars_ = 0;
    std::vector<int> paramIds_;
    std::vector<Target> first_;
    std::vector<Target> second_; // packed upper triangle, row-major
};

MomentMap build_moment_map(const ScenarioSpec& s, const FeedbackLaw& law,
                           const std::vector<expr::MixedTrigExpr>& closedLoop,
                           const std::vector<dist::DistributionSpec>& stateSurrogate);

// theta follows the map's parameterIds order.
MomentState eval_moments(const MomentMap& map, std::span<const double> theta);

} // namespace cfgain::prop
