#pragma once

namespace dmloc {

/// Exponentially scaled modified Bessel function exp(-x) * I0(x), x >= 0.
/// Accurate to about 1e-15 relative.
double bessel_i0e(double x);

/// Fast polynomial approximation of exp(-x) * I0(x), |relative error| < 5e-7.
/// Used on the filter hot path where the exact version is too slow.
double bessel_i0e_fast(double x);

/// First-order Marcum Q function Q1(a, b) for 0 <= a, b <= 50.
/// Absolute error below 1e-9. Throws std::invalid_argument out of range.
double marcum_q1(double a, double b);

}  // namespace dmloc
