#pragma once

namespace therm {

/// Standard normal density.
double normal_pdf(double z) noexcept;

/// Standard normal CDF.
double normal_cdf(double z) noexcept;

/// log Phi(z), accurate for arbitrarily negative z. Below z = -8 an
/// asymptotic series is used, since Phi underflows long before the
/// saturated probits (nu ~ 1e6) stop producing meaningful arguments.
double log_normal_cdf(double z) noexcept;

/// d/dz log Phi(z) = phi(z) / Phi(z).
double d_log_normal_cdf(double z) noexcept;

} // namespace therm
