#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace ptrials {

/// A value in [0, 1].
class Probability {
public:
    constexpr Probability() = default;
    explicit Probability(double value) : value_(value) {
        if (!(value >= 0.0 && value <= 1.0)) {
            throw std::invalid_argument("probability out of [0,1]: " + std::to_string(value));
        }
    }

    constexpr double value() const { return value_; }
    constexpr operator double() const { return value_; }

private:
    double value_ = 0.0;
};

/// A correlation coefficient in [-1, 1].
class Correlation {
public:
    constexpr Correlation() = default;
    explicit Correlation(double value) : value_(value) {
        if (!(value >= -1.0 && value <= 1.0)) {
            throw std::invalid_argument("correlation out of [-1,1]: " + std::to_string(value));
        }
    }

    constexpr double value() const { return value_; }
    constexpr operator double() const { return value_; }

private:
    double value_ = 0.0;
};

namespace detail {

inline double clamp_unit(double p) { return std::clamp(p, 0.0, 1.0); }

inline void require_finite(double x, const char* what) {
    if (!std::isfinite(x)) {
        throw std::invalid_argument(std::string(what) + " must be finite");
    }
}

// 20-point Gauss-Legendre rule on [-1, 1], positive half (symmetric).
inline constexpr std::array<double, 10> kGaussLegendre20Nodes = {
    0.0765265211334973337546404, 0.2277858511416450780804962, 0.3737060887154195606725482,
    0.5108670019508270980043641, 0.6360536807265150254528367, 0.7463319064601507926143051,
    0.8391169718222188233945291, 0.9122344282513259058677524, 0.9639719272779137912676661,
    0.9931285991850949247861224,
};
inline constexpr std::array<double, 10> kGaussLegendre20Weights = {
    0.1527533871307258506980843, 0.1491729864726037467878287, 0.1420961093183820513292983,
    0.1316886384491766268984945, 0.1181945319615184173123774, 0.1019301198172404350367501,
    0.0832767415767047487247581, 0.0626720483341090635695065, 0.0406014298003869413310400,
    0.0176140071391521183118620,
};

/// Composite 20-point Gauss-Legendre over [a, b] split into `panels` equal pieces.
template <class F>
double gauss_legendre(F&& f, double a, double b, int panels = 1) {
    const double width = (b - a) / panels;
    double total = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double lo = a + p * width;
        const double mid = lo + 0.5 * width;
        const double half = 0.5 * width;
        double sum = 0.0;
        for (std::size_t i = 0; i < kGaussLegendre20Nodes.size(); ++i) {
            const double dx = half * kGaussLegendre20Nodes[i];
            sum += kGaussLegendre20Weights[i] * (f(mid - dx) + f(mid + dx));
        }
        total += sum * half;
    }
    return total;
}

}  // namespace detail

/// Standard normal CDF.
inline double std_normal_cdf(double x) {
    if (std::isnan(x)) throw std::invalid_argument("std_normal_cdf: NaN input");
    if (std::isinf(x)) throw std::invalid_argument("std_normal_cdf: infinite input");
    return detail::clamp_unit(0.5 * std::erfc(-x / std::numbers::sqrt2));
}

/// Upper tail 1 - Phi(x), computed without cancellation.
inline double std_normal_sf(double x) {
    if (!std::isfinite(x)) throw std::invalid_argument("std_normal_sf: non-finite input");
    return detail::clamp_unit(0.5 * std::erfc(x / std::numbers::sqrt2));
}

inline double std_normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

/// Inverse of the standard normal CDF.
///
/// Acklam's rational approximation (relative error ~1e-9) followed by one
/// Halley step against erfc, which brings the result to near machine precision.
inline double std_normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw std::invalid_argument("std_normal_quantile: p must lie in (0,1), got " + std::to_string(p));
    }
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    // Halley refinement on Phi(x) - p, evaluated through the smaller tail.
    const double e = (x < 0.0) ? 0.5 * std::erfc(-x / std::numbers::sqrt2) - p
                               : (1.0 - p) - 0.5 * std::erfc(x / std::numbers::sqrt2);
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    x = x - u / (1.0 + 0.5 * x * u);
    return x;
}

/// Upper critical value z such that P{Z > z} = alpha.
inline double upper_critical_value(double alpha) { return -std_normal_quantile(alpha); }

/// P{X > h, Y > k} for a standard bivariate normal pair with correlation rho.
///
/// Uses the single-integral form over the correlation parameter,
///   L(h,k,rho) = sf(h) sf(k) + 1/(2 pi) * int_0^{asin rho} exp(-(h^2 + k^2 - 2hk sin t) / (2 cos^2 t)) dt,
/// evaluated with composite 20-point Gauss-Legendre. rho = +-1 are closed form.
inline double bvn_upper_orthant(double h, double k, double rho) {
    detail::require_finite(h, "bvn_upper_orthant: h");
    detail::require_finite(k, "bvn_upper_orthant: k");
    if (!(rho >= -1.0 && rho <= 1.0)) {
        throw std::invalid_argument("bvn_upper_orthant: |rho| must be <= 1, got " + std::to_string(rho));
    }
    if (rho == 1.0) return std_normal_sf(std::max(h, k));
    if (rho == -1.0) return detail::clamp_unit(std_normal_sf(h) - std_normal_cdf(k));

    const double independent = std_normal_sf(h) * std_normal_sf(k);
    if (rho == 0.0) return detail::clamp_unit(independent);

    const double hh = h * h + k * k;
    const double hk = h * k;
    const auto integrand = [hh, hk](double t) {
        const double s = std::sin(t);
        const double c2 = 1.0 - s * s;
        if (c2 <= 0.0) return 0.0;
        return std::exp(-(hh - 2.0 * hk * s) / (2.0 * c2));
    };
    const double upper = std::asin(rho);
    // Near |rho| = 1 the integrand develops a boundary layer when h != k.
    const int panels = std::abs(rho) < 0.9 ? 2 : 8;
    const double correction = detail::gauss_legendre(integrand, 0.0, upper, panels) / (2.0 * std::numbers::pi);
    return detail::clamp_unit(independent + correction);
}

}  // namespace ptrials
