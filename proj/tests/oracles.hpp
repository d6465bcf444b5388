#pragma once

// Reference computations used only by tests. They follow the textbook
// formulas with different numerical routes than the library code.

#include <vector>

#include "dmloc/measurement.hpp"
#include "dmloc/spa.hpp"

namespace oracle {

/// Q1(a, b) by adaptive Gauss-Kronrod integration of the Rician density
/// x exp(-(x^2 + a^2)/2) I0(a x), over [0, b] or [b, inf).
double marcum_q1_quadrature(double a, double b);

/// Q1(a, b) as the complementary CDF of a noncentral chi-square with two
/// degrees of freedom and noncentrality a^2, evaluated at b^2.
double marcum_q1_ncx2(double a, double b);

/// Detection probability min(Q1(sqrt2 u, sqrt2 u_th), 0.999) via the ncx2 route.
double detection_prob(double u, double u_th);

/// PDA pseudo-likelihood ratio in the linear domain from plain densities.
double pda_likelihood(dmloc::Point2 p, double u, const dmloc::MeasurementSet &meas,
                      const dmloc::AnchorGeometry &anchor, const dmloc::NoiseModel &noise,
                      const dmloc::ClutterParams &clutter);

struct GridPosterior {
  double mean_x = 0.0;
  double mean_y = 0.0;
};

/// Dense-grid Bayes posterior mean for a Gaussian prior N(mu, s^2 I) times
/// (r Lambda(x, u0) + 1 - r), on an n x n grid spanning mu +- half_width.
GridPosterior grid_posterior(dmloc::Point2 mu, double s, double u0, double r,
                             const dmloc::MeasurementSet &meas, const dmloc::AnchorGeometry &anchor,
                             const dmloc::NoiseModel &noise, const dmloc::ClutterParams &clutter,
                             int n, double half_width);

}  // namespace oracle
