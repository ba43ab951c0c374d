#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qmeas/error.hpp"
#include "qmeas/grid.hpp"

namespace qmeas {

/// hbar, mass and oscillator angular frequency. Natural units set all three to 1.
struct PhysicalUnits {
  double hbar = 1.0;
  double mass = 1.0;
  double omega = 1.0;

  static PhysicalUnits natural() { return {}; }

  /// SI action quantum with caller-supplied mass [kg] and angular frequency [rad/s].
  static PhysicalUnits si(double mass_kg, double omega_rad_s) {
    return PhysicalUnits{1.054571817e-34, mass_kg, omega_rad_s}.validated();
  }

  PhysicalUnits validated() const {
    if (!(hbar > 0.0 && mass > 0.0 && omega > 0.0) ||
        !(std::isfinite(hbar) && std::isfinite(mass) && std::isfinite(omega))) {
      throw Error(ErrorCode::invalid_argument, "hbar, mass and omega must be finite and positive");
    }
    return *this;
  }

  /// Position spread of the oscillator ground state, sqrt(hbar / (2 m omega)).
  double oscillator_sigma() const { return std::sqrt(hbar / (2.0 * mass * omega)); }

  friend bool operator==(const PhysicalUnits&, const PhysicalUnits&) = default;
};

/// A normalized complex state on a grid.
class WaveFunction {
 public:
  static constexpr double norm_tolerance = 1e-10;

  /// Wraps an already-normalized function; throws not_normalized otherwise.
  WaveFunction(ComplexFunction psi, PhysicalUnits units) : psi_(std::move(psi)), units_(units.validated()) {
    const double n2 = norm_squared(psi_);
    if (!(std::abs(n2 - 1.0) <= norm_tolerance)) {
      throw Error(ErrorCode::not_normalized,
                  "wave function norm^2 = " + std::to_string(n2) + ", expected 1");
    }
  }

  /// Normalizes an arbitrary nonzero function and wraps it.
  static WaveFunction from_unnormalized(ComplexFunction psi, PhysicalUnits units = {}) {
    return WaveFunction(normalize(std::move(psi)), units);
  }
  static WaveFunction from_unnormalized(const RealFunction& psi, PhysicalUnits units = {}) {
    return from_unnormalized(to_complex(psi), units);
  }

  const ComplexFunction& psi() const noexcept { return psi_; }
  const Grid& grid() const noexcept { return psi_.grid(); }
  const PhysicalUnits& units() const noexcept { return units_; }

  WaveFunction with_global_phase(double theta) const {
    auto p = psi_;
    p *= std::polar(1.0, theta);
    return WaveFunction(std::move(p), units_);
  }

 private:
  ComplexFunction psi_;
  PhysicalUnits units_;
};

/// A linear operator on grid functions, applied matrix-free.
class Observable {
 public:
  using Map = std::function<ComplexFunction(const ComplexFunction&)>;

  Observable(std::string name, Map apply, PhysicalUnits units)
      : name_(std::move(name)), apply_(std::move(apply)), units_(units) {}

  const std::string& name() const noexcept { return name_; }
  const PhysicalUnits& units() const noexcept { return units_; }

  ComplexFunction operator()(const ComplexFunction& f) const { return apply_(f); }

 private:
  std::string name_;
  Map apply_;
  PhysicalUnits units_;
};

inline Observable position_operator(PhysicalUnits units = {}) {
  return Observable(
      "position",
      [](const ComplexFunction& f) {
        ComplexFunction out(f.grid());
        for (std::size_t i = 0; i < f.size(); ++i) out[i] = f.grid().x(i) * f[i];
        return out;
      },
      units);
}

/// p = -i hbar d/dx
inline Observable momentum_operator(PhysicalUnits units = {}) {
  return Observable(
      "momentum",
      [hbar = units.hbar](const ComplexFunction& f) {
        auto d = derivative(f, 1);
        d *= complex(0.0, -hbar);
        return d;
      },
      units);
}

/// H = -hbar^2/(2m) d^2/dx^2 + V(x), with V tabulated on the operand's grid.
inline Observable hamiltonian_operator(PhysicalUnits units, RealFunction potential) {
  return Observable(
      "hamiltonian",
      [units, v = std::move(potential)](const ComplexFunction& f) {
        f.require_same_grid(v);
        auto out = derivative(f, 2);
        const double kinetic = -units.hbar * units.hbar / (2.0 * units.mass);
        for (std::size_t i = 0; i < f.size(); ++i) out[i] = kinetic * out[i] + v[i] * f[i];
        return out;
      },
      units);
}

inline RealFunction harmonic_potential(const Grid& grid, PhysicalUnits units = {}) {
  const double k = 0.5 * units.mass * units.omega * units.omega;
  return RealFunction::sample(grid, [k](double x) { return k * x * x; });
}

inline Observable harmonic_hamiltonian(const Grid& grid, PhysicalUnits units = {}) {
  return hamiltonian_operator(units, harmonic_potential(grid, units));
}

/// Mean, deviation and (optionally) third and fourth central moments.
struct DescriptorSet {
  double mean = 0.0;
  double deviation = 0.0;
  std::optional<double> third_moment;
  std::optional<double> fourth_moment;
};

/// rho = |psi|^2
inline RealFunction density(const WaveFunction& state) {
  const auto& psi = state.psi();
  RealFunction rho(psi.grid());
  for (std::size_t i = 0; i < psi.size(); ++i) rho[i] = std::norm(psi[i]);
  return rho;
}

/// j = (hbar/m) Im(conj(psi) dpsi/dx)
inline RealFunction current(const WaveFunction& state) {
  const auto& psi = state.psi();
  const auto dpsi = derivative(psi, 1);
  const double scale = state.units().hbar / state.units().mass;
  RealFunction j(psi.grid());
  for (std::size_t i = 0; i < psi.size(); ++i) j[i] = scale * (std::conj(psi[i]) * dpsi[i]).imag();
  return j;
}

namespace detail {

// Largest tolerated |Im (psi, A psi)| relative to ||A psi|| (Cauchy-Schwarz bound).
inline constexpr double imaginary_mean_threshold = 1e-8;

inline double checked_mean(const ComplexFunction& psi, const ComplexFunction& a_psi, const std::string& name) {
  const complex m = inner_product(psi, a_psi);
  const double scale = std::max(1.0, norm(a_psi));
  if (std::abs(m.imag()) > imaginary_mean_threshold * scale) {
    throw Error(ErrorCode::non_symmetric_operator,
                "mean of '" + name + "' has imaginary part " + std::to_string(m.imag()));
  }
  return m.real();
}

// (A - <A>) f
inline ComplexFunction shifted_apply(const Observable& a, const ComplexFunction& f, double mean) {
  auto out = a(f);
  for (std::size_t i = 0; i < f.size(); ++i) out[i] -= mean * f[i];
  return out;
}

}  // namespace detail

/// <A> = (psi, A psi). Throws non_symmetric_operator when the imaginary part is not negligible.
inline double in_mean(const WaveFunction& state, const Observable& a) {
  return detail::checked_mean(state.psi(), a(state.psi()), a.name());
}

/// sigma(A) = ||(A - <A>) psi||
inline double in_deviation(const WaveFunction& state, const Observable& a) {
  const double mean = in_mean(state, a);
  return norm(detail::shifted_apply(a, state.psi(), mean));
}

/// Re (psi, (A - <A>)^order psi) for order in {2, 3, 4}.
inline double central_moment(const WaveFunction& state, const Observable& a, int order) {
  if (order < 2 || order > 4) throw Error(ErrorCode::invalid_argument, "central moment order must be 2, 3 or 4");
  const double mean = in_mean(state, a);
  // Split the power symmetrically: (d^k psi, d^(order-k) psi) with k = order/2.
  const int left = order / 2;
  ComplexFunction lhs = state.psi();
  for (int i = 0; i < left; ++i) lhs = detail::shifted_apply(a, lhs, mean);
  ComplexFunction rhs = lhs;
  for (int i = left; i < order - left; ++i) rhs = detail::shifted_apply(a, rhs, mean);
  return inner_product(lhs, rhs).real();
}

/// Mean and deviation of A in `state`; with_higher adds the third and fourth central moments.
inline DescriptorSet describe(const WaveFunction& state, const Observable& a, bool with_higher = false) {
  DescriptorSet d;
  d.mean = in_mean(state, a);
  d.deviation = norm(detail::shifted_apply(a, state.psi(), d.mean));
  if (with_higher) {
    d.third_moment = central_moment(state, a, 3);
    d.fourth_moment = central_moment(state, a, 4);
  }
  return d;
}

}  // namespace qmeas
