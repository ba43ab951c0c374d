#pragma once

// Independent reference computations used to freeze expected values. Nothing
// here goes through finite differences, kernels or the eigensolver.

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>

namespace oracle {

/// Plain composite Simpson rule on [a, b] with `panels` (even) subintervals.
inline double simpson(const std::function<double(double)>& f, double a, double b, int panels = 20000) {
  const double h = (b - a) / panels;
  double s = f(a) + f(b);
  for (int i = 1; i < panels; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

inline double gaussian_pdf(double x, double variance) {
  return std::exp(-x * x / (2.0 * variance)) / std::sqrt(2.0 * std::numbers::pi * variance);
}

/// Real normalized wave function whose density is N(0, s2), with its analytic derivatives.
struct RealGaussianState {
  double s2;
  double psi(double x) const { return std::pow(2.0 * std::numbers::pi * s2, -0.25) * std::exp(-x * x / (4.0 * s2)); }
  double d2psi(double x) const { return psi(x) * (x * x / (4.0 * s2 * s2) - 1.0 / (2.0 * s2)); }
};

/// Mean and deviation of H = -hbar^2/(2m) d2/dx2 + m w^2 x^2 / 2 in a real
/// Gaussian state of position variance s2, by quadrature of analytic H psi.
struct EnergyMoments {
  double mean;
  double deviation;
};

inline EnergyMoments oscillator_energy_moments(double s2, double hbar = 1.0, double m = 1.0, double w = 1.0) {
  const RealGaussianState g{s2};
  auto h_psi = [&](double x) { return -hbar * hbar / (2.0 * m) * g.d2psi(x) + 0.5 * m * w * w * x * x * g.psi(x); };
  const double half = 30.0 * std::sqrt(s2);
  const double mean = simpson([&](double x) { return g.psi(x) * h_psi(x); }, -half, half);
  const double second = simpson([&](double x) { return h_psi(x) * h_psi(x); }, -half, half);
  return {mean, std::sqrt(std::max(0.0, second - mean * mean))};
}

}  // namespace oracle
