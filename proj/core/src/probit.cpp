#include "therm/probit.hpp"

#include <cmath>
#include <numbers>

namespace therm {

namespace {

constexpr double kAsymptoticCutoff = -8.0;
constexpr double kHalfLog2Pi = 0.91893853320467274178;
constexpr double kInvSqrt2 = 0.70710678118654752440;

// 1 - 1/z^2 + 3/z^4 - 15/z^6 + ...; terms keep shrinking well past the
// cutoff since z^2 >= 64 there.
double mills_series(double z) noexcept
{
    const double inv_z2 = 1.0 / (z * z);
    double term = 1.0;
    double sum = 1.0;
    for (int k = 1; k <= 24; ++k) {
        term *= -static_cast<double>(2 * k - 1) * inv_z2;
        sum += term;
        if (std::abs(term) < 1e-17 * std::abs(sum)) {
            break;
        }
    }
    return sum;
}

} // namespace

double normal_pdf(double z) noexcept
{
    return std::exp(-0.5 * z * z - kHalfLog2Pi);
}

double normal_cdf(double z) noexcept
{
    return 0.5 * std::erfc(-z * kInvSqrt2);
}

double log_normal_cdf(double z) noexcept
{
    if (z >= kAsymptoticCutoff) {
        if (z > 5.0) {
            // Phi(z) ~ 1; log1p keeps the tail digits.
            return std::log1p(-0.5 * std::erfc(z * kInvSqrt2));
        }
        return std::log(normal_cdf(z));
    }
    return -0.5 * z * z - std::log(-z) - kHalfLog2Pi + std::log(mills_series(z));
}

double d_log_normal_cdf(double z) noexcept
{
    if (z >= kAsymptoticCutoff) {
        return normal_pdf(z) / normal_cdf(z);
    }
    // Phi(z) ~ phi(z) S(z) / -z, so phi / Phi = -z / S(z).
    return -z / mills_series(z);
}

} // namespace therm
