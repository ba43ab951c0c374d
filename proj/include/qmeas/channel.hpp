#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "qmeas/error.hpp"
#include "qmeas/grid.hpp"
#include "qmeas/quantum_state.hpp"

namespace qmeas {

/// Which integrals of K(x, x') are pinned to one.
///   row:    integral over x' of K(x, x') = 1 for every x
///   column: integral over x  of K(x, x') = 1 for every x'
enum class KernelNormalization { row, column, both };

/**
 * Integral kernel K(x_i, x'_j) on a grid, stored row-major.
 *
 * Application is quadrature weighted: (K f)(x_i) = sum_j K_ij w_j f_j,
 * with w the trapezoid weights of the grid.
 */
class Kernel {
 public:
  static constexpr double normalization_tolerance = 1e-12;
  static constexpr int max_scaling_sweeps = 100000;

  /// Takes a nonnegative matrix and rescales it per `mode`. Doubly normalized
  /// kernels use alternating row/column scaling (Sinkhorn).
  static Kernel normalized(Grid grid, std::vector<double> values, KernelNormalization mode) {
    Kernel k(std::move(grid), std::move(values), mode);
    k.renormalize();
    return k;
  }

  /// Discrete Dirac kernel: K_ii = 1 / w_i, so K f = f exactly.
  static Kernel identity(const Grid& grid) {
    const std::size_t n = grid.size();
    const auto w = quadrature_weights(grid);
    std::vector<double> values(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) values[i * n + i] = 1.0 / w[i];
    Kernel k(grid, std::move(values), KernelNormalization::both);
    k.identity_ = true;
    return k;
  }

  const Grid& grid() const noexcept { return grid_; }
  std::size_t size() const noexcept { return grid_.size(); }
  KernelNormalization normalization() const noexcept { return mode_; }
  bool is_identity() const noexcept { return identity_; }
  std::span<const double> values() const noexcept { return values_; }

  double operator()(std::size_t i, std::size_t j) const noexcept { return values_[i * size() + j]; }

  /// Quadrature sums over x' for each row x_i.
  std::vector<double> row_integrals() const {
    const std::size_t n = size();
    const auto w = quadrature_weights(grid_);
    std::vector<double> sums(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = &values_[i * n];
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += row[j] * w[j];
      sums[i] = s;
    }
    return sums;
  }

  /// Quadrature sums over x for each column x'_j.
  std::vector<double> column_integrals() const {
    const std::size_t n = size();
    const auto w = quadrature_weights(grid_);
    std::vector<double> sums(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = &values_[i * n];
      for (std::size_t j = 0; j < n; ++j) sums[j] += w[i] * row[j];
    }
    return sums;
  }

  RealFunction apply(const RealFunction& f) const {
    f.require_same_grid(grid_);
    if (identity_) return f;
    const std::size_t n = size();
    const auto w = quadrature_weights(grid_);
    std::vector<double> wf(n);
    for (std::size_t j = 0; j < n; ++j) wf[j] = w[j] * f[j];
    RealFunction out(grid_);
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = &values_[i * n];
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += row[j] * wf[j];
      out[i] = s;
    }
    return out;
  }

 private:
  Kernel(Grid grid, std::vector<double> values, KernelNormalization mode)
      : grid_(std::move(grid)), values_(std::move(values)), mode_(mode) {
    const std::size_t n = grid_.size();
    if (values_.size() != n * n) throw Error(ErrorCode::invalid_argument, "kernel matrix must be n x n");
    for (double v : values_) {
      if (!std::isfinite(v) || v < 0.0) throw Error(ErrorCode::invalid_argument, "kernel entries must be finite and >= 0");
    }
  }

  // sum_j G_ij w_j v_j
  std::vector<double> weighted_row_products(const std::vector<double>& w, const std::vector<double>& v) const {
    const std::size_t n = size();
    std::vector<double> wv(n), out(n);
    for (std::size_t j = 0; j < n; ++j) wv[j] = w[j] * v[j];
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = &values_[i * n];
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += row[j] * wv[j];
      out[i] = s;
    }
    return out;
  }

  // sum_i w_i v_i G_ij
  std::vector<double> weighted_column_products(const std::vector<double>& w, const std::vector<double>& v) const {
    const std::size_t n = size();
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = &values_[i * n];
      const double c = w[i] * v[i];
      for (std::size_t j = 0; j < n; ++j) out[j] += c * row[j];
    }
    return out;
  }

  bool is_symmetric() const {
    const std::size_t n = size();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        if (values_[i * n + j] != values_[j * n + i]) return false;
      }
    }
    return true;
  }

  void scale(const std::vector<double>& left, const std::vector<double>& right) {
    const std::size_t n = size();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) values_[i * n + j] *= left[i] * right[j];
    }
  }

  static std::vector<double> reciprocals(const std::vector<double>& sums) {
    std::vector<double> r(sums.size());
    for (std::size_t i = 0; i < sums.size(); ++i) {
      if (!(sums[i] > 0.0)) throw Error(ErrorCode::zero_norm, "kernel row or column has zero integral");
      r[i] = 1.0 / sums[i];
    }
    return r;
  }

  // K = diag(r) G diag(c), with r and c found by Sinkhorn iteration. A
  // symmetric G gets the symmetric update a <- sqrt(a / (G w a)), which keeps
  // K symmetric and converges much faster than plain alternation.
  void renormalize() {
    const std::size_t n = size();
    const auto w = quadrature_weights(grid_);
    const std::vector<double> ones(n, 1.0);
    switch (mode_) {
      case KernelNormalization::row: scale(reciprocals(weighted_row_products(w, ones)), ones); return;
      case KernelNormalization::column: scale(ones, reciprocals(weighted_column_products(w, ones))); return;
      case KernelNormalization::both: break;
    }
    auto worst = [](const std::vector<double>& scale, const std::vector<double>& products) {
      double d = 0.0;
      for (std::size_t i = 0; i < scale.size(); ++i) d = std::max(d, std::abs(scale[i] * products[i] - 1.0));
      return d;
    };
    if (is_symmetric()) {
      std::vector<double> a(n, 1.0);
      for (int sweep = 0; sweep < max_scaling_sweeps; ++sweep) {
        const auto g = weighted_row_products(w, a);
        if (worst(a, g) <= normalization_tolerance) {
          scale(a, a);
          return;
        }
        for (std::size_t i = 0; i < n; ++i) {
          if (!(g[i] > 0.0)) throw Error(ErrorCode::zero_norm, "kernel row has zero integral");
          a[i] = std::sqrt(a[i] / g[i]);
        }
      }
    } else {
      std::vector<double> r(n, 1.0), c(n, 1.0);
      for (int sweep = 0; sweep < max_scaling_sweeps; ++sweep) {
        c = reciprocals(weighted_column_products(w, r));
        const auto rows = weighted_row_products(w, c);
        if (worst(r, rows) <= normalization_tolerance) {
          scale(r, c);
          return;
        }
        r = reciprocals(rows);
      }
    }
    throw Error(ErrorCode::no_convergence, "kernel normalization did not converge");
  }

  Grid grid_;
  std::vector<double> values_;
  KernelNormalization mode_;
  bool identity_ = false;
};

/// Gaussian device model with error width gamma; gamma = 0 is the ideal device.
struct GaussianChannelSpec {
  double gamma = 0.0;
  Grid grid;
};

/**
 * Kernel proportional to exp(-(x - x')^2 / (2 gamma^2)), doubly normalized.
 * Widths below half a grid spacing cannot be resolved and yield the identity.
 */
inline Kernel build_gaussian_kernel(const GaussianChannelSpec& spec) {
  if (!(spec.gamma >= 0.0) || !std::isfinite(spec.gamma)) {
    throw Error(ErrorCode::invalid_argument, "gamma must be finite and >= 0");
  }
  const Grid& grid = spec.grid;
  if (spec.gamma < 0.5 * grid.spacing()) return Kernel::identity(grid);
  const std::size_t n = grid.size();
  const double h = grid.spacing();
  const double inv = 1.0 / (2.0 * spec.gamma * spec.gamma);
  // Entries depend only on |i - j|; tabulate once.
  std::vector<double> profile(n);
  for (std::size_t d = 0; d < n; ++d) {
    const double dx = static_cast<double>(d) * h;
    profile[d] = std::exp(-dx * dx * inv);
  }
  std::vector<double> values(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) values[i * n + j] = profile[i > j ? i - j : j - i];
  }
  return Kernel::normalized(grid, std::move(values), KernelNormalization::both);
}

/// Density kernel (Gamma) and current kernel (Lambda) of one measuring device.
struct ChannelModel {
  Kernel gamma_kernel;
  Kernel lambda_kernel;
  std::string label;

  ChannelModel(Kernel gamma, Kernel lambda, std::string label_text)
      : gamma_kernel(std::move(gamma)), lambda_kernel(std::move(lambda)), label(std::move(label_text)) {
    if (!(gamma_kernel.grid() == lambda_kernel.grid())) {
      throw Error(ErrorCode::grid_mismatch, "channel kernels must share one grid");
    }
  }

  static ChannelModel ideal(const Grid& grid) {
    return ChannelModel(Kernel::identity(grid), Kernel::identity(grid), "ideal");
  }

  /// Gaussian kernels for density (width gamma) and current (width gamma_current).
  static ChannelModel gaussian(const Grid& grid, double gamma, double gamma_current) {
    auto g = build_gaussian_kernel({gamma, grid});
    auto l = gamma_current == gamma ? g : build_gaussian_kernel({gamma_current, grid});
    std::ostringstream label;
    label << "gaussian(gamma=" << gamma << ", gamma_current=" << gamma_current << ")";
    return ChannelModel(std::move(g), std::move(l), label.str());
  }

  static ChannelModel gaussian(const Grid& grid, double gamma) { return gaussian(grid, gamma, gamma); }

  const Grid& grid() const noexcept { return gamma_kernel.grid(); }
};

struct ChannelOutput {
  RealFunction density;
  RealFunction current;
};

/// rho_pd = Gamma * rho_in and j_pd = Lambda * j_in.
inline ChannelOutput apply_channel(const ChannelModel& channel, const RealFunction& rho_in, const RealFunction& j_in) {
  rho_in.require_same_grid(channel.grid());
  j_in.require_same_grid(channel.grid());
  auto rho = channel.gamma_kernel.apply(rho_in);
  // Roundoff can leave -1e-300 style values where the input is ~0.
  for (auto& v : rho.values()) v = std::max(v, 0.0);
  return {std::move(rho), channel.lambda_kernel.apply(j_in)};
}

/// Density floor relative to max(rho) below which no phase is assigned.
inline constexpr double density_floor_fraction = 1e-12;

/**
 * Builds psi = sqrt(rho) exp(i phi) with phi' = m j / (hbar rho).
 *
 * Phase increments between neighbouring points invert the central-difference
 * current used by current(): with a_i = sqrt(rho_i), the increment is
 * asin of S = 2 h m j_i / (hbar a_i (a_{i-1} + a_{i+1})), averaged over the two
 * end points of the cell. This tends to h phi' as h -> 0 and reproduces a
 * discretized plane wave exactly. The phase is zero at the leftmost point
 * above the density floor; points below the floor must carry (almost) no current
 * and continue the phase at the nearest known rate.
 */
inline WaveFunction reconstruct_predicted_state(const RealFunction& rho, const RealFunction& j, PhysicalUnits units = {}) {
  rho.require_same_grid(j);
  units.validated();
  const std::size_t n = rho.size();
  const double h = rho.grid().spacing();

  double rho_max = 0.0;
  double j_max = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (rho[i] < 0.0 || !std::isfinite(rho[i]) || !std::isfinite(j[i])) {
      throw Error(ErrorCode::invalid_argument, "density must be finite and nonnegative, current finite");
    }
    rho_max = std::max(rho_max, rho[i]);
    j_max = std::max(j_max, std::abs(j[i]));
  }
  if (!(rho_max > 0.0)) throw Error(ErrorCode::zero_norm, "density vanishes everywhere");

  const double rho_floor = density_floor_fraction * rho_max;
  // Current tolerated under the floor: what the peak speed j_max/rho_max would carry there.
  const double j_floor = 10.0 * std::max(rho_floor * j_max / rho_max, std::numeric_limits<double>::min());

  std::vector<double> amp(n);
  std::vector<bool> supported(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    amp[i] = std::sqrt(rho[i]);
    if (rho[i] > rho_floor) {
      supported[i] = true;
    } else if (std::abs(j[i]) > j_floor) {
      throw Error(ErrorCode::inconsistent_channel_output,
                  "current " + std::to_string(j[i]) + " in zero-density region at x = " +
                      std::to_string(rho.grid().x(i)));
    }
  }

  // Per-point sine of the phase step, S_i ~ h phi'(x_i).
  const double scale = units.mass / units.hbar;
  std::vector<double> step_sine(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!supported[i]) continue;
    const bool interior = i > 0 && i + 1 < n;
    const double neighbours = interior ? amp[i - 1] + amp[i + 1] : 0.0;
    step_sine[i] = neighbours > 0.0 ? 2.0 * h * scale * j[i] / (amp[i] * neighbours) : h * scale * j[i] / rho[i];
  }

  // Phase step across each cell (i-1, i); NaN where an end point is below the floor.
  const double unknown = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> step(n, unknown);
  for (std::size_t i = 1; i < n; ++i) {
    if (supported[i - 1] && supported[i]) {
      step[i] = std::asin(std::clamp(0.5 * (step_sine[i - 1] + step_sine[i]), -1.0, 1.0));
    }
  }
  // Under the floor the phase is undetermined; carry the nearest known step so it stays smooth.
  double carried = unknown;
  for (std::size_t i = 1; i < n; ++i) {
    if (std::isnan(step[i])) {
      step[i] = carried;
    } else {
      carried = step[i];
    }
  }
  const auto first_known = std::find_if(step.begin() + 1, step.end(), [](double s) { return !std::isnan(s); });
  const double lead = first_known == step.end() ? 0.0 : *first_known;
  for (std::size_t i = 1; i < n && std::isnan(step[i]); ++i) step[i] = lead;

  std::vector<double> phase(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) phase[i] = phase[i - 1] + step[i];
  const auto anchor = std::find(supported.begin(), supported.end(), true) - supported.begin();
  ComplexFunction psi(rho.grid());
  for (std::size_t i = 0; i < n; ++i) psi[i] = std::polar(amp[i], phase[i] - phase[anchor]);
  return WaveFunction::from_unnormalized(std::move(psi), units);
}

/// Predicted mean and deviation of A after the channel: same contract as the intrinsic ones.
inline DescriptorSet pd_descriptors(const WaveFunction& state_pd, const Observable& a, bool with_higher = false) {
  return describe(state_pd, a, with_higher);
}

struct OscillatorClosedForms {
  double mean_pd = 0.0;
  double dev_pd = 0.0;
  double mean_in = 0.0;
  double dev_in = 0.0;
};

/// Energy mean and deviation of the oscillator ground state before and after a Gaussian device of width gamma.
inline OscillatorClosedForms oscillator_closed_forms(PhysicalUnits units, double gamma) {
  units.validated();
  if (!(gamma >= 0.0)) throw Error(ErrorCode::invalid_argument, "gamma must be >= 0");
  const double hbar = units.hbar;
  const double m = units.mass;
  const double w = units.omega;
  const double g2 = gamma * gamma;
  const double b = hbar + 2.0 * m * w * g2;
  OscillatorClosedForms r;
  r.mean_in = 0.5 * hbar * w;
  r.dev_in = 0.0;
  r.mean_pd = w * (hbar * hbar + b * b) / (4.0 * b);
  r.dev_pd = std::sqrt(2.0) * m * w * w * g2 * (hbar + m * w * g2) / b;
  return r;
}

/// Writes the kernel as CSV: header "x\x'" followed by the x' values, then one row per x.
inline void write_kernel_csv(std::ostream& os, const Kernel& k) {
  const Grid& g = k.grid();
  const std::size_t n = g.size();
  os.precision(17);
  os << "x\\x'";
  for (std::size_t j = 0; j < n; ++j) os << ',' << g.x(j);
  os << '\n';
  for (std::size_t i = 0; i < n; ++i) {
    os << g.x(i);
    for (std::size_t j = 0; j < n; ++j) os << ',' << k(i, j);
    os << '\n';
  }
}

/**
 * Reads a kernel written by write_kernel_csv (or by hand in the same layout)
 * on `grid` and normalizes it per `mode`. Point coordinates must match the grid.
 */
inline Kernel read_kernel_csv(std::istream& is, const Grid& grid, KernelNormalization mode = KernelNormalization::both) {
  const std::size_t n = grid.size();
  const double tol = 1e-9 * std::max(std::abs(grid.x_min()), std::abs(grid.x_max()));
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  auto number = [](const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    const auto last = s.find_last_not_of(" \t\r");
    double v = 0.0;
    if (first == std::string::npos) throw Error(ErrorCode::io_error, "kernel CSV: empty cell");
    const char* end = s.data() + last + 1;
    const auto [ptr, ec] = std::from_chars(s.data() + first, end, v);
    if (ptr != end || (ec != std::errc() && ec != std::errc::result_out_of_range)) {
      throw Error(ErrorCode::io_error, "kernel CSV: not a number: '" + s + "'");
    }
    return v;
  };
  std::string line;
  if (!std::getline(is, line)) throw Error(ErrorCode::io_error, "kernel CSV: missing header");
  auto header = split(line);
  if (header.size() != n + 1) throw Error(ErrorCode::grid_mismatch, "kernel CSV: column count does not match grid");
  for (std::size_t j = 0; j < n; ++j) {
    if (std::abs(number(header[j + 1]) - grid.x(j)) > tol) {
      throw Error(ErrorCode::grid_mismatch, "kernel CSV: x' values do not match grid");
    }
  }
  std::vector<double> values;
  values.reserve(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(is, line)) throw Error(ErrorCode::io_error, "kernel CSV: too few rows");
    auto cells = split(line);
    if (cells.size() != n + 1) throw Error(ErrorCode::io_error, "kernel CSV: ragged row");
    if (std::abs(number(cells[0]) - grid.x(i)) > tol) {
      throw Error(ErrorCode::grid_mismatch, "kernel CSV: x values do not match grid");
    }
    for (std::size_t j = 0; j < n; ++j) values.push_back(number(cells[j + 1]));
  }
  return Kernel::normalized(grid, std::move(values), mode);
}

}  // namespace qmeas
