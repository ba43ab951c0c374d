#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qmeas/error.hpp"
#include "qmeas/grid.hpp"
#include "qmeas/quantum_state.hpp"

namespace qmeas {

/// Potential energy V(x): either the harmonic well or a table on the solver grid.
class PotentialSpec {
 public:
  enum class Kind { harmonic, table };

  static PotentialSpec harmonic(PhysicalUnits units = {}) { return PotentialSpec(Kind::harmonic, units, std::nullopt); }

  static PotentialSpec table(RealFunction values, PhysicalUnits units = {}) {
    for (double v : values.values()) {
      if (!std::isfinite(v)) throw Error(ErrorCode::invalid_argument, "potential table must be finite");
    }
    return PotentialSpec(Kind::table, units, std::move(values));
  }

  Kind kind() const noexcept { return kind_; }
  const PhysicalUnits& units() const noexcept { return units_; }

  RealFunction on(const Grid& grid) const {
    if (kind_ == Kind::harmonic) return harmonic_potential(grid, units_);
    table_->require_same_grid(grid);
    return *table_;
  }

 private:
  PotentialSpec(Kind kind, PhysicalUnits units, std::optional<RealFunction> table)
      : kind_(kind), units_(units.validated()), table_(std::move(table)) {}

  Kind kind_;
  PhysicalUnits units_;
  std::optional<RealFunction> table_;
};

/// Lowest bound states of H, ascending in energy.
struct EigenSolution {
  std::vector<double> energies;
  std::vector<WaveFunction> states;
  RealFunction potential;
  PhysicalUnits units;

  Observable hamiltonian() const { return hamiltonian_operator(units, potential); }
  const Grid& grid() const noexcept { return potential.grid(); }
};

/**
 * Real symmetric tridiagonal matrix: diagonal d[0..m) and off-diagonal e[0..m-1).
 * Eigenvalues by Sturm-sequence bisection, eigenvectors by inverse iteration.
 */
class SymmetricTridiagonal {
 public:
  SymmetricTridiagonal(std::vector<double> diag, std::vector<double> off)
      : d_(std::move(diag)), e_(std::move(off)) {
    if (d_.empty() || e_.size() + 1 != d_.size()) {
      throw Error(ErrorCode::invalid_argument, "tridiagonal needs m diagonal and m-1 off-diagonal entries");
    }
  }

  std::size_t size() const noexcept { return d_.size(); }
  std::span<const double> diagonal() const noexcept { return d_; }
  std::span<const double> off_diagonal() const noexcept { return e_; }

  /// Number of eigenvalues strictly below `lambda`.
  std::size_t count_below(double lambda) const {
    std::size_t count = 0;
    double q = d_[0] - lambda;
    const double tiny = std::numeric_limits<double>::min();
    if (q < 0.0) ++count;
    for (std::size_t i = 1; i < d_.size(); ++i) {
      if (q == 0.0) q = tiny;
      q = d_[i] - lambda - e_[i - 1] * e_[i - 1] / q;
      if (q < 0.0) ++count;
    }
    return count;
  }

  /// k-th smallest eigenvalue (0-based) by bisection on the Gershgorin interval.
  double eigenvalue(std::size_t k) const {
    double lo = std::numeric_limits<double>::max();
    double hi = std::numeric_limits<double>::lowest();
    for (std::size_t i = 0; i < d_.size(); ++i) {
      const double r = (i > 0 ? std::abs(e_[i - 1]) : 0.0) + (i < e_.size() ? std::abs(e_[i]) : 0.0);
      lo = std::min(lo, d_[i] - r);
      hi = std::max(hi, d_[i] + r);
    }
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      if (count_below(mid) > k) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    return 0.5 * (lo + hi);
  }

  /// y = T x
  std::vector<double> multiply(std::span<const double> x) const {
    const std::size_t m = d_.size();
    std::vector<double> y(m);
    for (std::size_t i = 0; i < m; ++i) {
      double s = d_[i] * x[i];
      if (i > 0) s += e_[i - 1] * x[i - 1];
      if (i + 1 < m) s += e_[i] * x[i + 1];
      y[i] = s;
    }
    return y;
  }

  /// Solves (T - shift I) x = b by Gaussian elimination with partial pivoting.
  std::vector<double> solve_shifted(double shift, std::vector<double> b) const {
    const std::size_t m = d_.size();
    // Row i holds a[i] (diag), c[i] (super), f[i] (second super, from pivoting); sub is eliminated.
    std::vector<double> a(m), c(m, 0.0), f(m, 0.0), sub(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      a[i] = d_[i] - shift;
      if (i + 1 < m) {
        c[i] = e_[i];
        sub[i + 1] = e_[i];
      }
    }
    const double eps = std::numeric_limits<double>::epsilon();
    double scale = 0.0;
    for (std::size_t i = 0; i < m; ++i) scale = std::max(scale, std::abs(d_[i] - shift) + (i < e_.size() ? std::abs(e_[i]) : 0.0));
    const double pivot_floor = std::max(eps * scale, std::numeric_limits<double>::min());

    for (std::size_t i = 0; i + 1 < m; ++i) {
      const double below = sub[i + 1];
      if (std::abs(below) > std::abs(a[i])) {
        // Swap rows i and i+1.
        const double a1 = below, c1 = a[i + 1], f1 = i + 2 < m ? c[i + 1] : 0.0;
        const double a0 = a[i], c0 = c[i], f0 = f[i];
        a[i] = a1;
        c[i] = c1;
        f[i] = f1;
        std::swap(b[i], b[i + 1]);
        const double l = a0 / a1;
        a[i + 1] = c0 - l * c1;
        c[i + 1] = f0 - l * f1;
        b[i + 1] -= l * b[i];
      } else {
        if (a[i] == 0.0) a[i] = pivot_floor;
        const double l = below / a[i];
        a[i + 1] -= l * c[i];
        c[i + 1] -= l * f[i];
        b[i + 1] -= l * b[i];
      }
    }
    if (std::abs(a[m - 1]) < pivot_floor) a[m - 1] = std::copysign(pivot_floor, a[m - 1] == 0.0 ? 1.0 : a[m - 1]);
    std::vector<double> x(m);
    for (std::size_t ii = m; ii-- > 0;) {
      double s = b[ii];
      if (ii + 1 < m) s -= c[ii] * x[ii + 1];
      if (ii + 2 < m) s -= f[ii] * x[ii + 2];
      if (std::abs(a[ii]) < pivot_floor) a[ii] = std::copysign(pivot_floor, a[ii] == 0.0 ? 1.0 : a[ii]);
      x[ii] = s / a[ii];
    }
    return x;
  }

  /// Unit (Euclidean) eigenvector for `lambda`, orthogonalized against `previous`.
  std::vector<double> eigenvector(double lambda, const std::vector<std::vector<double>>& previous) const {
    const std::size_t m = d_.size();
    std::vector<double> x(m);
    // Deterministic, non-symmetric start so no eigenvector is missed by parity.
    for (std::size_t i = 0; i < m; ++i) x[i] = 1.0 + 0.5 * std::sin(0.37 * static_cast<double>(i) + 0.1);
    auto unit = [](std::vector<double>& v) {
      double s = 0.0;
      for (double t : v) s += t * t;
      s = std::sqrt(s);
      for (double& t : v) t /= s;
    };
    auto orthogonalize = [&](std::vector<double>& v) {
      for (const auto& p : previous) {
        double dot = 0.0;
        for (std::size_t i = 0; i < m; ++i) dot += p[i] * v[i];
        for (std::size_t i = 0; i < m; ++i) v[i] -= dot * p[i];
      }
    };
    unit(x);
    for (int it = 0; it < 4; ++it) {
      x = solve_shifted(lambda, std::move(x));
      orthogonalize(x);
      unit(x);
    }
    orthogonalize(x);
    unit(x);
    return x;
  }

 private:
  std::vector<double> d_;
  std::vector<double> e_;
};

/// Largest |psi| allowed next to the Dirichlet walls for a bound state to count as resolved.
inline constexpr double boundary_decay_threshold = 1e-6;

/// Three-point discretization of H on the interior points (Dirichlet walls at both ends).
inline SymmetricTridiagonal discretize_hamiltonian(const RealFunction& potential, PhysicalUnits units) {
  const std::size_t n = potential.size();
  const double h = potential.grid().spacing();
  const double t = units.hbar * units.hbar / (2.0 * units.mass * h * h);
  std::vector<double> d(n - 2), e(n - 3, -t);
  for (std::size_t i = 1; i + 1 < n; ++i) d[i - 1] = 2.0 * t + potential[i];
  return SymmetricTridiagonal(std::move(d), std::move(e));
}

/**
 * Lowest k eigenpairs of the stationary Schrodinger operator on `grid`.
 *
 * States are normalized, and their sign is fixed so that the first component
 * exceeding 1e-3 of the state's maximum modulus is positive. Throws
 * domain_too_small when a requested state has not decayed at the walls.
 */
inline EigenSolution solve_bound_states(const PotentialSpec& potential, const Grid& grid, std::size_t k) {
  if (k == 0) throw Error(ErrorCode::invalid_argument, "at least one state must be requested");
  if (k > grid.size() - 2) throw Error(ErrorCode::invalid_argument, "more states requested than interior grid points");
  const PhysicalUnits units = potential.units();
  auto v = potential.on(grid);
  const auto t = discretize_hamiltonian(v, units);
  const std::size_t n = grid.size();
  const double h = grid.spacing();

  EigenSolution sol{{}, {}, v, units};
  std::vector<std::vector<double>> vectors;
  for (std::size_t s = 0; s < k; ++s) {
    const double lambda = t.eigenvalue(s);
    auto vec = t.eigenvector(lambda, vectors);
    vectors.push_back(vec);

    double peak = 0.0;
    for (double c : vec) peak = std::max(peak, std::abs(c));
    double sign = 1.0;
    for (double c : vec) {
      if (std::abs(c) > 1e-3 * peak) {
        sign = c > 0.0 ? 1.0 : -1.0;
        break;
      }
    }
    // Interior eigenvector -> grid function with zero walls, unit L2 norm (sum h psi^2 = 1).
    ComplexFunction psi(grid);
    const double scale = sign / std::sqrt(h);
    for (std::size_t i = 1; i + 1 < n; ++i) psi[i] = scale * vec[i - 1];

    const double edge = std::max(std::abs(psi[1]), std::abs(psi[n - 2]));
    if (edge > boundary_decay_threshold) {
      throw Error(ErrorCode::domain_too_small,
                  "state " + std::to_string(s) + " has |psi| = " + std::to_string(edge) +
                      " at the domain edge; widen the grid");
    }
    sol.energies.push_back(lambda);
    sol.states.emplace_back(WaveFunction::from_unnormalized(std::move(psi), units));
  }
  return sol;
}

/// ||H psi - E psi|| for state `index`.
inline double residual_norm(const EigenSolution& solution, std::size_t index) {
  if (index >= solution.states.size()) throw Error(ErrorCode::invalid_argument, "eigenstate index out of range");
  const auto& psi = solution.states[index].psi();
  auto r = solution.hamiltonian()(psi);
  const double e = solution.energies[index];
  for (std::size_t i = 0; i < r.size(); ++i) r[i] -= e * psi[i];
  return norm(r);
}

}  // namespace qmeas
