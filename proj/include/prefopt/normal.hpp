#pragma once

// Standard normal helpers that stay finite far into the lower tail.

namespace prefopt::normal {

inline constexpr double kSqrt2 = 1.41421356237309504880;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double pdf(double z);
double cdf(double z);

/// log Phi(z), accurate for z down to about -1e150.
double log_cdf(double z);

/// phi(z) / Phi(z), the derivative of log Phi(z).
double inverse_mills(double z);

}  // namespace prefopt::normal
