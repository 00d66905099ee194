#pragma once

#include <complex>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cfgain/errors.hpp"

// Symbolic layer for mixed trigonometric polynomials: finite sums of
//
//   coeff(theta) * prod_j x_j^{a_j} * prod_m trig^{p_m}(affine arg)
//
// where x_j are random-position variables (states, controls, noises),
// theta are scalar parameters (feedback gains), every trig argument is
// affine in the random variables, and each argument coefficient is affine
// in theta. The layer supports parsing, ring arithmetic, substitution,
// and exact Euler expansion into complex-exponential canonical terms.

namespace cfgain::expr {

using Complex = std::complex<double>;

enum class VarKind { State, Control, Noise, Parameter };

// Variables that may carry powers or sit inside trig arguments. Parameters
// (gains) only ever appear in coefficients.
constexpr bool random_position(VarKind k) { return k != VarKind::Parameter; }

struct Variable {
    std::string name;
    VarKind kind;
    int index; // position among variables of the same kind
    int id;    // global id in declaration order; the key used in expressions
};

class SymbolTable {
public:
    Variable declare(const std::string& name, VarKind kind);
    const Variable* find(std::string_view name) const;
    const Variable& at(int id) const { return vars_.at(static_cast<std::size_t>(id)); }
    int size() const { return static_cast<int>(vars_.size()); }
    int count(VarKind kind) const;
    const std::vector<Variable>& all() const { return vars_; }

private:
    std::vector<Variable> vars_;
};

// ---------------------------------------------------------------------------
// Coefficient algebra over the parameters
// ---------------------------------------------------------------------------

// constant + sum_i coeffs[i] * theta_i, keyed by parameter variable id.
struct ParamAffine {
    double constant = 0.0;
    std::map<int, double> coeffs;

    bool is_zero() const { return constant == 0.0 && coeffs.empty(); }
    bool is_constant() const { return coeffs.empty(); }
    double eval(std::span<const double> values) const;

    ParamAffine& operator+=(const ParamAffine& other);
    ParamAffine& operator*=(double s);
    friend ParamAffine operator+(ParamAffine a, const ParamAffine& b) { return a += b; }
    friend ParamAffine operator*(ParamAffine a, double s) { return a *= s; }
};

// Product of two affine forms; throws NotInClass when both have a linear
// part (the result would be quadratic in the parameters).
ParamAffine affine_mul(const ParamAffine& a, const ParamAffine& b);

int compare(const ParamAffine& a, const ParamAffine& b);

// Complex polynomial in the parameters. Monomials are kept merged and
// zero coefficients dropped, so the representation is canonical.
class ParamPolynomial {
public:
    using Monomial = std::map<int, int>; // parameter id -> power

    ParamPolynomial() = default;
    static ParamPolynomial constant(Complex c);
    static ParamPolynomial parameter(int paramId);
    static ParamPolynomial from_affine(const ParamAffine& a);

    bool is_zero() const { return terms_.empty(); }
    int degree() const;
    Complex eval(std::span<const double> values) const;

    // Affine view when total degree <= 1 and all coefficients are real.
    std::optional<ParamAffine> as_real_affine() const;

    ParamPolynomial& operator+=(const ParamPolynomial& other);
    ParamPolynomial& operator*=(Complex s);
    friend ParamPolynomial operator+(ParamPolynomial a, const ParamPolynomial& b) { return a += b; }
    friend ParamPolynomial operator*(ParamPolynomial a, Complex s) { return a *= s; }
    friend ParamPolynomial operator*(const ParamPolynomial& a, const ParamPolynomial& b);

    const std::map<Monomial, Complex>& terms() const { return terms_; }

private:
    void insert(const Monomial& m, Complex c);
    std::map<Monomial, Complex> terms_;
};

// ---------------------------------------------------------------------------
// Trig arguments and terms
// ---------------------------------------------------------------------------

// sum_j coeffs[j](theta) * x_j + offset(theta), affine in the random
// variables by construction.
struct TrigArgument {
    std::map<int, ParamAffine> coeffs; // random var id -> coefficient
    ParamAffine offset;

    double eval(std::span<const double> values) const;
    void prune(); // drop identically-zero coefficients
    bool empty() const { return coeffs.empty() && offset.is_zero(); }
    bool has_random_part() const { return !coeffs.empty(); }
};

int compare(const TrigArgument& a, const TrigArgument& b);

enum class TrigKind { Cos, Sin };

struct TrigFactor {
    TrigKind kind;
    TrigArgument arg;
    int power = 1;
};

struct MixedTerm {
    ParamPolynomial coeff;
    std::map<int, int> varPowers;    // random var id -> power
    std::vector<TrigFactor> factors; // sorted by (argument, kind)

    double eval(std::span<const double> values) const;
};

// ---------------------------------------------------------------------------
// Mixed trigonometric polynomial expressions
// ---------------------------------------------------------------------------

inline constexpr int kMaxTrigPower = 8;
inline constexpr int kMaxPolyDegree = 16;

class MixedTrigExpr {
public:
    MixedTrigExpr() = default; // zero

    static MixedTrigExpr constant(double c);
    static MixedTrigExpr variable(const Variable& v);
    // cos(arg) or sin(arg) as a single-factor expression
    static MixedTrigExpr trig(TrigKind kind, const TrigArgument& arg);

    const std::vector<MixedTerm>& terms() const { return terms_; }
    std::size_t term_count() const { return terms_.size(); }
    bool is_zero() const { return terms_.empty(); }

    double eval(std::span<const double> values) const;

    MixedTrigExpr& operator+=(const MixedTrigExpr& other);
    MixedTrigExpr& operator-=(const MixedTrigExpr& other);
    friend MixedTrigExpr operator+(MixedTrigExpr a, const MixedTrigExpr& b) { return a += b; }
    friend MixedTrigExpr operator-(MixedTrigExpr a, const MixedTrigExpr& b) { return a -= b; }
    friend MixedTrigExpr operator*(const MixedTrigExpr& a, const MixedTrigExpr& b);
    MixedTrigExpr scaled(double s) const;
    MixedTrigExpr pow(int n) const;

    // Canonicalize a raw term list: merge identical (varPowers, factors)
    // keys, drop zero coefficients, fold constant trig arguments.
    static MixedTrigExpr from_terms(std::vector<MixedTerm> terms);

private:
    std::vector<MixedTerm> terms_;
};

// Replace every occurrence of `var` by `replacement`. Occurrences inside a
// trig argument require the replacement to be affine in random variables
// with parameter-affine coefficients; otherwise NotInClass is thrown.
MixedTrigExpr substitute(const MixedTrigExpr& e, int varId, const MixedTrigExpr& replacement);

// Fold parameters into numeric coefficients. `values` is indexed by variable
// id; only parameter positions are read. The result can be compiled.
MixedTrigExpr bind_parameters(const MixedTrigExpr& e, std::span<const double> values);

// Interpret an expression as an affine trig argument; throws NotInClass
// when it has trig factors, variable powers >= 2, cross products, or
// coefficients that are not real-affine in the parameters.
TrigArgument to_trig_argument(const MixedTrigExpr& e);

// ---------------------------------------------------------------------------
// Euler expansion
// ---------------------------------------------------------------------------

// poly(theta) * e^{i phase(theta)} * prod_j x_j^{alpha_j} * e^{i sum_j freq_j(theta) x_j}
struct ExpCanonicalTerm {
    ParamPolynomial poly;
    ParamAffine phase;
    std::map<int, int> varPowers;
    std::map<int, ParamAffine> freq;

    Complex eval(std::span<const double> values) const;
};

// Exact rewrite of every sin/cos factor through the Euler identities.
// Returns the raw product expansion: a source term with trig powers
// (p_1, ..., p_m) contributes exactly prod (p_i + 1) output terms.
std::vector<ExpCanonicalTerm> euler_expand(const MixedTrigExpr& e);

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

// Grammar:
//   expr   := ("+"|"-")? term (("+"|"-") term)*
//   term   := factor ("*" factor)*
//   factor := base ("^" NAT)?
//   base   := NUMBER | IDENT | "sin" "(" expr ")" | "cos" "(" expr ")" | "(" expr ")"
// Whitespace is insignificant. A single leading sign is also accepted.
MixedTrigExpr parse(std::string_view text, const SymbolTable& symbols);

// ---------------------------------------------------------------------------
// Compiled numeric form for tight simulation loops
// ---------------------------------------------------------------------------

// Flattened evaluator for expressions whose coefficients and trig
// arguments are parameter-free (dynamics before gain substitution).
class CompiledExpr {
public:
    explicit CompiledExpr(const MixedTrigExpr& e);
    double eval(std::span<const double> values) const;

private:
    struct Trig {
        bool sine;
        int power;
        double offset;
        std::vector<std::pair<int, double>> coeffs; // var id -> weight
    };
    struct Term {
        double coeff;
        std::vector<std::pair<int, int>> powers; // var id -> power
        std::vector<Trig> trigs;
    };
    std::vector<Term> terms_;
};

} // namespace cfgain::expr
