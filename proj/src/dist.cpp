#include "cfgain/dist.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/multiprecision/cpp_complex.hpp>

namespace cfgain::dist {

DistributionSpec DistributionSpec::gaussian(double mean, double variance) {
    if (!(variance > 0.0)) throw Error("gaussian variance must be positive");
    return DistributionSpec(Gaussian{mean, variance});
}

DistributionSpec DistributionSpec::uniform(double lower, double upper) {
    if (!(lower < upper)) throw Error("uniform bounds must satisfy lower < upper");
    return DistributionSpec(Uniform{lower, upper});
}

DistributionSpec DistributionSpec::point(double value) {
    return DistributionSpec(PointMass{value});
}

double DistributionSpec::mean() const {
    return std::visit(
        [](const auto& d) -> double {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, Gaussian>) return d.mean;
            else if constexpr (std::is_same_v<T, Uniform>) return 0.5 * (d.lower + d.upper);
            else return d.value;
        },
        v_);
}

double DistributionSpec::variance() const {
    return std::visit(
        [](const auto& d) -> double {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, Gaussian>) return d.variance;
            else if constexpr (std::is_same_v<T, Uniform>) {
                const double w = d.upper - d.lower;
                return w * w / 12.0;
            } else {
                return 0.0;
            }
        },
        v_);
}

Complex cf(const DistributionSpec& d, double t) {
    return std::visit(
        [t](const auto& d) -> Complex {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, Gaussian>) {
                return std::exp(Complex(-0.5 * d.variance * t * t, d.mean * t));
            } else if constexpr (std::is_same_v<T, Uniform>) {
                if (t == 0.0) return 1.0;
                const Complex it(0.0, t);
                return (std::exp(it * d.upper) - std::exp(it * d.lower)) /
                       (it * (d.upper - d.lower));
            } else {
                return std::exp(Complex(0.0, t * d.value));
            }
        },
        d.value());
}

namespace {

void check_order(int alpha) {
    if (alpha < 0) throw Error("moment order must be nonnegative");
    if (alpha > kMaxMomentOrder)
        throw DegreeTooHigh("moment order exceeds " + std::to_string(kMaxMomentOrder));
}

// Plain raw moment of Uniform(l, u): (u^{n+1} - l^{n+1}) / ((n+1)(u-l)).
long double uniform_raw_moment(long double l, long double u, int n) {
    long double up = u, lp = l;
    for (int i = 0; i < n; ++i) {
        up *= u;
        lp *= l;
    }
    return (up - lp) / ((n + 1) * (u - l));
}

template <typename C>
C uniform_recursion_impl(double lower, double upper, int alpha, double b) {
    using R = typename C::value_type;
    const R l(lower), u(upper), bb(b);
    const C ib(R(0), bb);
    const R width = u - l;
    const C eiu = exp(C(R(0), bb * u));
    const C eil = exp(C(R(0), bb * l));
    C I = (eiu - eil) / (ib * width);
    R up = u, lp = l;
    for (int k = 1; k <= alpha; ++k) {
        const C T = (up * eiu - lp * eil) / (ib * width);
        I = T - (R(k) / ib) * I;
        up *= u;
        lp *= l;
    }
    return I;
}

template <typename MC>
Complex uniform_recursion_mp(double lower, double upper, int alpha, double b) {
    const MC r = uniform_recursion_impl<MC>(lower, upper, alpha, b);
    return Complex(static_cast<double>(r.real()), static_cast<double>(r.imag()));
}

} // namespace

namespace detail {

Complex uniform_series(double lower, double upper, int alpha, double b) {
    // E[x^a e^{ibx}] = sum_k (ib)^k / k! * M_{a+k}, truncated at 12 terms.
    std::complex<long double> sum = 0.0L;
    std::complex<long double> coeff = 1.0L; // (ib)^k / k!
    const std::complex<long double> ib(0.0L, static_cast<long double>(b));
    for (int k = 0; k < 12; ++k) {
        sum += coeff * uniform_raw_moment(lower, upper, alpha + k);
        coeff *= ib / static_cast<long double>(k + 1);
    }
    return Complex(static_cast<double>(sum.real()), static_cast<double>(sum.imag()));
}

Complex uniform_recursion(double lower, double upper, int alpha, double b) {
    // Each recursion step multiplies the accumulated rounding error by
    // about max(k/|b|, 1); pick a working precision so the bound lands
    // well below 1e-12 after scaling by the magnitude of the support.
    const double m = std::max(std::abs(lower), std::abs(upper));
    double amplification = std::max(1.0, 1.0 / (std::abs(b) * (upper - lower)));
    for (int k = 1; k <= alpha; ++k)
        amplification *= std::max(static_cast<double>(k) / std::abs(b), 1.0);
    const double scale = std::pow(std::max(1.0, m), alpha + 1);
    const double needed = 1e-13 / std::min(1e300, amplification * scale);

    using boost::multiprecision::cpp_complex;
    if (std::numeric_limits<long double>::epsilon() < needed)
        return uniform_recursion_mp<std::complex<long double>>(lower, upper, alpha, b);
    if (1e-34 < needed) return uniform_recursion_mp<cpp_complex<34>>(lower, upper, alpha, b);
    if (1e-50 < needed) return uniform_recursion_mp<cpp_complex<50>>(lower, upper, alpha, b);
    return uniform_recursion_mp<cpp_complex<100>>(lower, upper, alpha, b);
}

} // namespace detail

Complex moment_exp(const DistributionSpec& d, MomentQuery q) {
    check_order(q.alpha);
    return std::visit(
        [&q](const auto& d) -> Complex {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, Gaussian>) {
                // E[x^a e^{ibx}] = Phi(b) * m_a with the recursion on the
                // complexified mean mu + i b sigma^2.
                const std::complex<long double> mu(d.mean, q.b * d.variance);
                const long double var = d.variance;
                std::complex<long double> prev = 1.0L;
                std::complex<long double> cur = mu;
                if (q.alpha == 0) cur = 1.0L;
                for (int a = 2; a <= q.alpha; ++a) {
                    std::complex<long double> next = mu * cur + (a - 1) * var * prev;
                    prev = cur;
                    cur = next;
                }
                const std::complex<long double> phi =
                    std::exp(std::complex<long double>(-0.5L * var * q.b * q.b, d.mean * q.b));
                const std::complex<long double> r = phi * cur;
                return Complex(static_cast<double>(r.real()), static_cast<double>(r.imag()));
            } else if constexpr (std::is_same_v<T, Uniform>) {
                if (q.b == 0.0)
                    return static_cast<double>(
                        uniform_raw_moment(d.lower, d.upper, q.alpha));
                const double m = std::max(std::abs(d.lower), std::abs(d.upper));
                if (std::abs(q.b) * m < detail::kUniformSeriesSwitch)
                    return detail::uniform_series(d.lower, d.upper, q.alpha, q.b);
                return detail::uniform_recursion(d.lower, d.upper, q.alpha, q.b);
            } else {
                double p = 1.0;
                for (int i = 0; i < q.alpha; ++i) p *= d.value;
                return p * std::exp(Complex(0.0, q.b * d.value));
            }
        },
        d.value());
}

namespace {

Complex integrate_against_density(double lo, double hi, int alpha, double b,
                                  const std::function<double(double)>& density) {
    using boost::math::quadrature::gauss_kronrod;
    auto part = [&](bool imag) {
        auto f = [&](double x) {
            double p = density(x);
            for (int i = 0; i < alpha; ++i) p *= x;
            return p * (imag ? std::sin(b * x) : std::cos(b * x));
        };
        double error = 0.0;
        double value = gauss_kronrod<double, 61>::integrate(f, lo, hi, 15, 1e-12, &error);
        if (error > 1e-10)
            throw ConvergenceFailure("quadrature error estimate " + std::to_string(error) +
                                     " exceeds 1e-10");
        return value;
    };
    return Complex(part(false), part(true));
}

} // namespace

Complex moment_exp_quadrature(const DistributionSpec& d, MomentQuery q) {
    check_order(q.alpha);
    return std::visit(
        [&q](const auto& d) -> Complex {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, Gaussian>) {
                const double sigma = std::sqrt(d.variance);
                const double inv = 1.0 / (sigma * std::sqrt(2.0 * M_PI));
                auto density = [&](double x) {
                    const double z = (x - d.mean) / sigma;
                    return inv * std::exp(-0.5 * z * z);
                };
                return integrate_against_density(d.mean - 12.0 * sigma, d.mean + 12.0 * sigma,
                                                 q.alpha, q.b, density);
            } else if constexpr (std::is_same_v<T, Uniform>) {
                const double inv = 1.0 / (d.upper - d.lower);
                return integrate_against_density(d.lower, d.upper, q.alpha, q.b,
                                                 [inv](double) { return inv; });
            } else {
                double p = 1.0;
                for (int i = 0; i < q.alpha; ++i) p *= d.value;
                return p * std::exp(Complex(0.0, q.b * d.value));
            }
        },
        d.value());
}

double sample_one(const DistributionSpec& d, RngStream& rng) {
    return std::visit(
        [&rng](const auto& d) -> double {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, Gaussian>) {
                return d.mean + std::sqrt(d.variance) * rng.gaussian01();
            } else if constexpr (std::is_same_v<T, Uniform>) {
                return rng.uniform(d.lower, d.upper);
            } else {
                return d.value;
            }
        },
        d.value());
}

std::vector<double> sample(const DistributionSpec& d, RngStream& rng, std::size_t n) {
    std::vector<double> out(n);
    for (auto& x : out) x = sample_one(d, rng);
    return out;
}

} // namespace cfgain::dist
