#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cfgain {

// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Expression text violates the grammar.
struct SyntaxError : Error {
    SyntaxError(const std::string& what, std::size_t position)
        : Error(what + " (at offset " + std::to_string(position) + ")"), position(position) {}
    std::size_t position;
};

// Identifier not found in the symbol table.
struct UnknownSymbol : Error {
    UnknownSymbol(const std::string& name, std::size_t position)
        : Error("unknown symbol '" + name + "' (at offset " + std::to_string(position) + ")"),
          name(name), position(position) {}
    std::string name;
    std::size_t position;
};

// Expression leaves the mixed-trigonometric-polynomial class
// (non-affine trig argument, gain products inside trig arguments, ...).
struct NotInClass : Error {
    explicit NotInClass(const std::string& what) : Error(what) {}
};

// Polynomial degree or trig power beyond the supported caps.
struct DegreeTooHigh : Error {
    explicit DegreeTooHigh(const std::string& what) : Error(what) {}
};

// Adaptive quadrature failed to meet its error target.
struct ConvergenceFailure : Error {
    explicit ConvergenceFailure(const std::string& what) : Error(what) {}
};

// Tube geometry other than an axis-aligned box.
struct UnsupportedTube : Error {
    explicit UnsupportedTube(const std::string& what) : Error(what) {}
};

// Matrix expected to be positive semidefinite is not.
struct NotPSD : Error {
    explicit NotPSD(const std::string& what) : Error(what) {}
};

// R + B'PB numerically singular in the Riccati recursion.
struct SingularInnovation : Error {
    SingularInnovation(const std::string& what, int step)
        : Error(what + " (step " + std::to_string(step) + ")"), step(step) {}
    int step;
};

// Scenario file lacks a required field.
struct MissingField : Error {
    explicit MissingField(const std::string& field)
        : Error("missing required field '" + field + "'"), field(field) {}
    std::string field;
};

// Scenario arrays disagree on dimensions.
struct InconsistentDimensions : Error {
    explicit InconsistentDimensions(const std::string& what) : Error(what) {}
};

// Fewer than two particles where sample statistics are required.
struct DegenerateEnsemble : Error {
    explicit DegenerateEnsemble(const std::string& what) : Error(what) {}
};

} // namespace cfgain
