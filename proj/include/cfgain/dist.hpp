#pragma once

#include <complex>
#include <cstddef>
#include <variant>
#include <vector>

#include "cfgain/errors.hpp"
#include "cfgain/rng.hpp"

// Distribution descriptors and the moment oracle E[x^alpha e^{ibx}] used
// to evaluate expectations of Euler-expanded expressions in closed form.

namespace cfgain::dist {

using Complex = std::complex<double>;

struct Gaussian {
    double mean;
    double variance; // > 0
};

struct Uniform {
    double lower;
    double upper; // lower < upper
};

struct PointMass {
    double value;
};

class DistributionSpec {
public:
    using Variant = std::variant<Gaussian, Uniform, PointMass>;

    static DistributionSpec gaussian(double mean, double variance);
    static DistributionSpec uniform(double lower, double upper);
    static DistributionSpec point(double value);

    const Variant& value() const { return v_; }
    double mean() const;
    double variance() const;

private:
    explicit DistributionSpec(Variant v) : v_(std::move(v)) {}
    Variant v_;
};

struct MomentQuery {
    int alpha = 0; // 0 <= alpha <= 16
    double b = 0.0;
};

inline constexpr int kMaxMomentOrder = 16;

// Characteristic function E[e^{itx}].
Complex cf(const DistributionSpec& d, double t);

// E[x^alpha e^{ibx}] in closed form. Uniform uses the integration-by-parts
// recursion away from b = 0 and a 12-term series in b near it; the
// recursion runs at a working precision chosen from an a-priori bound on
// its error amplification, which grows like prod_k max(k/|b|, 1).
Complex moment_exp(const DistributionSpec& d, MomentQuery q);

// Independent oracle: adaptive quadrature of x^alpha e^{ibx} against the
// density, absolute error target 1e-10. Gaussian integrated over
// mean +- 12 sigma. PointMass needs no integral.
Complex moment_exp_quadrature(const DistributionSpec& d, MomentQuery q);

double sample_one(const DistributionSpec& d, RngStream& rng);
std::vector<double> sample(const DistributionSpec& d, RngStream& rng, std::size_t n);

namespace detail {
// The two Uniform branches, exposed to let tests probe the switch.
Complex uniform_series(double lower, double upper, int alpha, double b);
Complex uniform_recursion(double lower, double upper, int alpha, double b);
inline constexpr double kUniformSeriesSwitch = 1e-3; // on |b| * max(|l|, |u|)
} // namespace detail

} // namespace cfgain::dist
