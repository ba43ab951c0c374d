#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "qmeas/error.hpp"

namespace qmeas {

using complex = std::complex<double>;

/**
 * Uniform 1D grid: x_i = x_min + i*h, h = (x_max - x_min)/(n - 1).
 *
 * Both end points are grid points. Grids compare equal only when all three
 * defining parameters match exactly; every binary operation on grid
 * functions requires equal grids.
 */
class Grid {
 public:
  static constexpr std::size_t min_points = 8;

  Grid(double x_min, double x_max, std::size_t n) : x_min_(x_min), x_max_(x_max), n_(n) {
    if (!(std::isfinite(x_min) && std::isfinite(x_max)) || !(x_min < x_max)) {
      throw Error(ErrorCode::invalid_argument, "grid requires finite x_min < x_max");
    }
    if (n < min_points) {
      throw Error(ErrorCode::invalid_argument,
                  "grid requires at least " + std::to_string(min_points) + " points");
    }
    h_ = (x_max - x_min) / static_cast<double>(n - 1);
  }

  /// Symmetric grid [-half_width, +half_width].
  static Grid symmetric(double half_width, std::size_t n) { return Grid(-half_width, half_width, n); }

  double x_min() const noexcept { return x_min_; }
  double x_max() const noexcept { return x_max_; }
  std::size_t size() const noexcept { return n_; }
  double spacing() const noexcept { return h_; }

  double x(std::size_t i) const noexcept {
    // Pin the last point so x(n-1) == x_max bit-for-bit.
    return i + 1 == n_ ? x_max_ : x_min_ + static_cast<double>(i) * h_;
  }

  std::vector<double> points() const {
    std::vector<double> xs(n_);
    for (std::size_t i = 0; i < n_; ++i) xs[i] = x(i);
    return xs;
  }

  friend bool operator==(const Grid& a, const Grid& b) noexcept {
    return a.x_min_ == b.x_min_ && a.x_max_ == b.x_max_ && a.n_ == b.n_;
  }

 private:
  double x_min_;
  double x_max_;
  std::size_t n_;
  double h_;
};

enum class Quadrature { trapezoid, simpson };

/// Quadrature weights w_i such that sum_i w_i f(x_i) approximates the integral.
/// Simpson falls back to a 3/8 panel on the last three intervals when the
/// interval count is odd.
inline std::vector<double> quadrature_weights(const Grid& grid, Quadrature rule = Quadrature::trapezoid) {
  const std::size_t n = grid.size();
  const double h = grid.spacing();
  std::vector<double> w(n, 0.0);
  if (rule == Quadrature::trapezoid) {
    std::fill(w.begin(), w.end(), h);
    w.front() = w.back() = 0.5 * h;
    return w;
  }
  const std::size_t intervals = n - 1;
  const std::size_t simpson_end = intervals % 2 == 0 ? n - 1 : n - 4;
  for (std::size_t i = 0; i < simpson_end; i += 2) {
    w[i] += h / 3.0;
    w[i + 1] += 4.0 * h / 3.0;
    w[i + 2] += h / 3.0;
  }
  if (simpson_end != n - 1) {
    const double c = 3.0 * h / 8.0;
    w[n - 4] += c;
    w[n - 3] += 3.0 * c;
    w[n - 2] += 3.0 * c;
    w[n - 1] += c;
  }
  return w;
}

template <typename T>
concept GridScalar = std::is_same_v<T, double> || std::is_same_v<T, complex>;

/// Values of a function sampled at every point of a grid.
template <GridScalar T>
class GridFunction {
 public:
  using value_type = T;

  explicit GridFunction(Grid grid) : grid_(std::move(grid)), values_(grid_.size(), T{}) {}

  GridFunction(Grid grid, std::vector<T> values) : grid_(std::move(grid)), values_(std::move(values)) {
    if (values_.size() != grid_.size()) {
      throw Error(ErrorCode::invalid_argument, "grid function needs one value per grid point");
    }
  }

  /// Samples `f(x)` at every grid point.
  template <typename F>
    requires std::is_invocable_r_v<T, F, double>
  static GridFunction sample(const Grid& grid, F&& f) {
    std::vector<T> values(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) values[i] = f(grid.x(i));
    return GridFunction(grid, std::move(values));
  }

  const Grid& grid() const noexcept { return grid_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::span<const T> values() const& noexcept { return values_; }
  std::span<T> values() & noexcept { return values_; }
  // A span into a temporary would dangle.
  std::span<const T> values() const&& = delete;

  const T& operator[](std::size_t i) const noexcept { return values_[i]; }
  T& operator[](std::size_t i) noexcept { return values_[i]; }

  GridFunction& operator+=(const GridFunction& other) {
    require_same_grid(other);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
  }
  GridFunction& operator-=(const GridFunction& other) {
    require_same_grid(other);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
    return *this;
  }
  GridFunction& operator*=(T scale) {
    for (auto& v : values_) v *= scale;
    return *this;
  }

  friend GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
  friend GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
  friend GridFunction operator*(GridFunction a, T s) { return a *= s; }
  friend GridFunction operator*(T s, GridFunction a) { return a *= s; }

  void require_same_grid(const Grid& other) const {
    if (!(grid_ == other)) throw Error(ErrorCode::grid_mismatch, "grid functions live on different grids");
  }
  template <GridScalar U>
  void require_same_grid(const GridFunction<U>& other) const {
    require_same_grid(other.grid());
  }

 private:
  Grid grid_;
  std::vector<T> values_;
};

using RealFunction = GridFunction<double>;
using ComplexFunction = GridFunction<complex>;

inline ComplexFunction to_complex(const RealFunction& f) {
  std::vector<complex> v(f.values().begin(), f.values().end());
  return ComplexFunction(f.grid(), std::move(v));
}

inline RealFunction real_part(const ComplexFunction& f) {
  std::vector<double> v(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) v[i] = f[i].real();
  return RealFunction(f.grid(), std::move(v));
}

inline ComplexFunction conjugate(ComplexFunction f) {
  for (auto& v : f.values()) v = std::conj(v);
  return f;
}

template <GridScalar T>
T integrate(const GridFunction<T>& f, Quadrature rule = Quadrature::trapezoid) {
  const auto w = quadrature_weights(f.grid(), rule);
  T sum{};
  for (std::size_t i = 0; i < f.size(); ++i) sum += w[i] * f[i];
  return sum;
}

/// (f, g) = integral of conj(f) * g.
template <GridScalar T>
complex inner_product(const GridFunction<T>& f, const GridFunction<T>& g,
                      Quadrature rule = Quadrature::trapezoid) {
  f.require_same_grid(g);
  const auto w = quadrature_weights(f.grid(), rule);
  complex sum{};
  for (std::size_t i = 0; i < f.size(); ++i) {
    if constexpr (std::is_same_v<T, complex>) {
      // Written out so that (f, f) has an exactly zero imaginary part.
      const double re = f[i].real() * g[i].real() + f[i].imag() * g[i].imag();
      const double im = f[i].real() * g[i].imag() - f[i].imag() * g[i].real();
      sum += w[i] * complex(re, im);
    } else {
      sum += w[i] * f[i] * g[i];
    }
  }
  return sum;
}

/// Squared L2 norm; real by construction.
template <GridScalar T>
double norm_squared(const GridFunction<T>& f, Quadrature rule = Quadrature::trapezoid) {
  const auto w = quadrature_weights(f.grid(), rule);
  double sum = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) sum += w[i] * std::norm(f[i]);
  return sum;
}

template <GridScalar T>
double norm(const GridFunction<T>& f, Quadrature rule = Quadrature::trapezoid) {
  return std::sqrt(norm_squared(f, rule));
}

/**
 * First or second derivative by finite differences.
 *
 * Interior points use second-order central differences. The two boundary
 * points use one-sided second-order stencils; there is no periodic wrap.
 */
template <GridScalar T>
GridFunction<T> derivative(const GridFunction<T>& f, int order) {
  if (order != 1 && order != 2) {
    throw Error(ErrorCode::invalid_argument, "derivative order must be 1 or 2");
  }
  const std::size_t n = f.size();
  const double h = f.grid().spacing();
  GridFunction<T> d(f.grid());
  if (order == 1) {
    const double c = 1.0 / (2.0 * h);
    for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (f[i + 1] - f[i - 1]) * c;
    d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) * c;
    d[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) * c;
  } else {
    const double c = 1.0 / (h * h);
    for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (f[i + 1] - 2.0 * f[i] + f[i - 1]) * c;
    d[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) * c;
    d[n - 1] = (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) * c;
  }
  return d;
}

/// Rescales f to unit L2 norm. Throws zero_norm when the norm vanishes.
template <GridScalar T>
GridFunction<T> normalize(GridFunction<T> f, Quadrature rule = Quadrature::trapezoid) {
  const double nrm = norm(f, rule);
  if (!(nrm > 0.0) || !std::isfinite(nrm)) {
    throw Error(ErrorCode::zero_norm, "cannot normalize a function with zero or non-finite norm");
  }
  f *= T(1.0 / nrm);
  return f;
}

}  // namespace qmeas
