#include "prefopt/normal.hpp"

#include <cmath>

namespace prefopt::normal {

namespace {

// Below this, Phi(z) is evaluated through the asymptotic Mills-ratio series.
constexpr double kTailCut = -30.0;

// Phi(-x) ~ phi(x) / x * series(x) for large x.
double tail_series(double x) {
  const double inv2 = 1.0 / (x * x);
  return 1.0 - inv2 * (1.0 - 3.0 * inv2 * (1.0 - 5.0 * inv2 * (1.0 - 7.0 * inv2)));
}

}  // namespace

double pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

double cdf(double z) { return 0.5 * std::erfc(-z / kSqrt2); }

double log_cdf(double z) {
  if (z > 0.0) return std::log1p(-0.5 * std::erfc(z / kSqrt2));
  if (z >= kTailCut) return std::log(0.5 * std::erfc(-z / kSqrt2));
  const double x = -z;
  return -0.5 * x * x + std::log(kInvSqrt2Pi) - std::log(x) + std::log(tail_series(x));
}

double inverse_mills(double z) {
  if (z >= kTailCut) return pdf(z) / cdf(z);
  const double x = -z;
  return x / tail_series(x);
}

}  // namespace prefopt::normal
