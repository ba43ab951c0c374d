#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "qmeas/eigensolver.hpp"
#include "qmeas/error.hpp"
#include "qmeas/grid.hpp"
#include "qmeas/quantum_state.hpp"

namespace qmeas {

/// One eigenvalue a_s and its probability p_s = |(psi_s, psi)|^2.
struct SpectralLine {
  double value = 0.0;
  double probability = 0.0;
};

using Spectrum = std::vector<SpectralLine>;

/// Minimum total probability the supplied eigenbasis must capture.
inline constexpr double spectral_capture_threshold = 0.999;

inline Spectrum spectral_probabilities(const WaveFunction& state, const EigenSolution& solution) {
  state.psi().require_same_grid(solution.grid());
  Spectrum lines;
  double total = 0.0;
  for (std::size_t s = 0; s < solution.states.size(); ++s) {
    const double p = std::norm(inner_product(solution.states[s].psi(), state.psi()));
    lines.push_back({solution.energies[s], p});
    total += p;
  }
  if (total < spectral_capture_threshold) {
    throw Error(ErrorCode::k_max_too_small,
                "eigenbasis captures only " + std::to_string(total) + " of the state's probability");
  }
  return lines;
}

inline double spectral_mean(std::span<const SpectralLine> lines) {
  double total = 0.0, m = 0.0;
  for (const auto& l : lines) {
    total += l.probability;
    m += l.probability * l.value;
  }
  return m / total;
}

/// Recorded-value corruption by the device: nothing, or additive zero-mean Gaussian noise.
struct DeviceNoise {
  double width = 0.0;

  static DeviceNoise none() { return {}; }
  static DeviceNoise additive_gaussian(double width) {
    if (!(width >= 0.0) || !std::isfinite(width)) throw Error(ErrorCode::invalid_argument, "noise width must be >= 0");
    return {width};
  }
  bool is_none() const noexcept { return width == 0.0; }
};

struct SamplingPlan {
  std::size_t n_samples = 100000;
  std::uint64_t seed = 0;
  DeviceNoise noise;
};

/// Where samples come from: a discrete spectrum or a position density on a grid.
using SampleSource = std::variant<Spectrum, RealFunction>;

namespace detail {

/// Inverse-CDF sampler over a tabulated density; the CDF is linear within each grid cell.
class DensitySampler {
 public:
  explicit DensitySampler(const RealFunction& rho) : x_(rho.grid().points()), cdf_(rho.size(), 0.0) {
    const double h = rho.grid().spacing();
    for (std::size_t i = 1; i < rho.size(); ++i) {
      if (rho[i] < 0.0 || rho[i - 1] < 0.0) throw Error(ErrorCode::invalid_argument, "density must be nonnegative");
      cdf_[i] = cdf_[i - 1] + 0.5 * h * (rho[i - 1] + rho[i]);
    }
    if (!(cdf_.back() > 0.0)) throw Error(ErrorCode::zero_norm, "density has zero mass");
    for (double& c : cdf_) c /= cdf_.back();
  }

  double operator()(double u) const {
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.begin()) return x_.front();
    if (it == cdf_.end()) return x_.back();
    const std::size_t i = static_cast<std::size_t>(it - cdf_.begin());
    const double c0 = cdf_[i - 1], c1 = cdf_[i];
    const double t = c1 > c0 ? (u - c0) / (c1 - c0) : 0.0;
    return x_[i - 1] + t * (x_[i] - x_[i - 1]);
  }

 private:
  std::vector<double> x_;
  std::vector<double> cdf_;
};

class SpectrumSampler {
 public:
  explicit SpectrumSampler(const Spectrum& lines) {
    if (lines.empty()) throw Error(ErrorCode::invalid_argument, "empty spectrum");
    std::vector<double> weights;
    for (const auto& l : lines) {
      values_.push_back(l.value);
      weights.push_back(l.probability);
    }
    pick_ = std::discrete_distribution<std::size_t>(weights.begin(), weights.end());
  }

  template <typename Rng>
  double operator()(Rng& rng) {
    return values_[pick_(rng)];
  }

 private:
  std::vector<double> values_;
  std::discrete_distribution<std::size_t> pick_;
};

/// Draws from a source with a caller-owned generator.
class SourceSampler {
 public:
  explicit SourceSampler(const SampleSource& source) {
    if (const auto* s = std::get_if<Spectrum>(&source)) {
      spectrum_.emplace(*s);
    } else {
      density_.emplace(std::get<RealFunction>(source));
    }
  }

  template <typename Rng>
  double operator()(Rng& rng) {
    if (spectrum_) return (*spectrum_)(rng);
    return (*density_)(uniform_(rng));
  }

 private:
  std::optional<SpectrumSampler> spectrum_;
  std::optional<DensitySampler> density_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace detail

/// Draws plan.n_samples recorded values, then applies the device noise. Deterministic in plan.seed.
inline std::vector<double> draw_samples(const SamplingPlan& plan, const SampleSource& source) {
  if (plan.n_samples == 0) throw Error(ErrorCode::invalid_argument, "n_samples must be >= 1");
  std::mt19937_64 rng(plan.seed);
  detail::SourceSampler sampler(source);
  std::normal_distribution<double> noise(0.0, plan.noise.is_none() ? 1.0 : plan.noise.width);
  std::vector<double> out(plan.n_samples);
  for (auto& v : out) {
    v = sampler(rng);
    if (!plan.noise.is_none()) v += noise(rng);
  }
  return out;
}

/// Recorded values alpha_j with relative frequencies nu_j.
class EmpiricalDistribution {
 public:
  EmpiricalDistribution(std::vector<double> values, std::vector<double> frequencies)
      : values_(std::move(values)), frequencies_(std::move(frequencies)) {
    if (values_.empty() || values_.size() != frequencies_.size()) {
      throw Error(ErrorCode::invalid_argument, "need one frequency per recorded value");
    }
    double total = 0.0;
    for (std::size_t j = 0; j < values_.size(); ++j) {
      if (!(frequencies_[j] > 0.0)) throw Error(ErrorCode::invalid_argument, "frequencies must be positive");
      if (j > 0 && !(values_[j] > values_[j - 1])) {
        throw Error(ErrorCode::invalid_argument, "recorded values must be strictly ascending");
      }
      total += frequencies_[j];
    }
    if (std::abs(total - 1.0) > 1e-12) throw Error(ErrorCode::invalid_argument, "frequencies must sum to 1");
  }

  /**
   * Bins raw samples with the Freedman-Diaconis width 2 IQR / N^(1/3).
   *
   * Each bin is represented by the mean of the samples that fell in it, so
   * the distribution's mean equals the raw sample mean. When the IQR is zero
   * the samples are grouped by distinct value instead.
   */
  static EmpiricalDistribution from_samples(std::span<const double> samples) {
    if (samples.empty()) throw Error(ErrorCode::invalid_argument, "no samples to bin");
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    const double width = 2.0 * (quantile(sorted, 0.75) - quantile(sorted, 0.25)) / std::cbrt(n);

    std::vector<double> sums, counts;
    auto push = [&](double v, bool new_bin) {
      if (new_bin) {
        sums.push_back(0.0);
        counts.push_back(0.0);
      }
      sums.back() += v;
      counts.back() += 1.0;
    };
    if (width > 0.0) {
      const double origin = sorted.front();
      std::size_t current = 0;
      for (std::size_t i = 0; i < sorted.size(); ++i) {
        const auto bin = static_cast<std::size_t>(std::floor((sorted[i] - origin) / width));
        push(sorted[i], i == 0 || bin != current);
        current = bin;
      }
    } else {
      for (std::size_t i = 0; i < sorted.size(); ++i) push(sorted[i], i == 0 || sorted[i] != sorted[i - 1]);
    }

    std::vector<double> values(sums.size()), freqs(sums.size());
    for (std::size_t j = 0; j < sums.size(); ++j) {
      values[j] = sums[j] / counts[j];
      freqs[j] = counts[j] / n;
    }
    // Bin means of adjacent bins can only tie if both bins hold one repeated value.
    std::vector<double> v2, f2;
    for (std::size_t j = 0; j < values.size(); ++j) {
      if (!v2.empty() && !(values[j] > v2.back())) {
        f2.back() += freqs[j];
      } else {
        v2.push_back(values[j]);
        f2.push_back(freqs[j]);
      }
    }
    renormalize(f2);
    return EmpiricalDistribution(std::move(v2), std::move(f2));
  }

  std::span<const double> values() const noexcept { return values_; }
  std::span<const double> frequencies() const noexcept { return frequencies_; }
  std::size_t size() const noexcept { return values_.size(); }

 private:
  static double quantile(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
  }

  // Summing count/n can drift by a few ulps; fold the drift into the largest bin.
  static void renormalize(std::vector<double>& f) {
    const double total = std::accumulate(f.begin(), f.end(), 0.0);
    auto it = std::max_element(f.begin(), f.end());
    *it += 1.0 - total;
  }

  std::vector<double> values_;
  std::vector<double> frequencies_;
};

/// exp-mean sum nu_j alpha_j and exp-deviation sqrt(sum nu_j (alpha_j - mean)^2).
inline DescriptorSet exp_quantifiers(const EmpiricalDistribution& dist) {
  const auto a = dist.values();
  const auto nu = dist.frequencies();
  double mean = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) mean += nu[j] * a[j];
  double var = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) var += nu[j] * (a[j] - mean) * (a[j] - mean);
  return {mean, std::sqrt(var), std::nullopt, std::nullopt};
}

/// Acceptance bounds for comparing theory with experiment.
struct Tolerances {
  double mean_relative = 0.05;
  double deviation_relative = 0.10;
  /// Theory deviations below this are compared absolutely against it.
  double deviation_absolute = 0.02;
};

enum class Verdict { confirmed, refuted };

/// u1: improve the intrinsic state; u2: improve the apparatus; u3: add a measurement description.
enum class Upgrading { u1, u2, u3 };

constexpr std::string_view to_string(Verdict v) noexcept { return v == Verdict::confirmed ? "confirmed" : "refuted"; }

constexpr std::string_view to_string(Upgrading u) noexcept {
  switch (u) {
    case Upgrading::u1: return "u1";
    case Upgrading::u2: return "u2";
    case Upgrading::u3: return "u3";
  }
  return "?";
}

struct ComparisonResult {
  double theory = 0.0;
  double experiment = 0.0;
  double discrepancy = 0.0;  // relative, or absolute when `absolute` is set
  double bound = 0.0;
  bool absolute = false;
  bool within = false;
};

struct ConfrontationReport {
  DescriptorSet in_desc;
  std::optional<DescriptorSet> pd_desc;
  DescriptorSet exp_desc;
  Tolerances tolerances;
  ComparisonResult mean_check;
  ComparisonResult deviation_check;
  Verdict verdict = Verdict::refuted;
  std::vector<Upgrading> suggested_upgradings;
};

namespace detail {

inline ComparisonResult compare_mean(double theory, double experiment, const Tolerances& tol) {
  ComparisonResult r{theory, experiment, 0.0, tol.mean_relative, false, false};
  r.discrepancy = std::abs(experiment - theory) / std::max(std::abs(theory), 1e-12);
  r.within = r.discrepancy <= r.bound;
  return r;
}

inline ComparisonResult compare_deviation(double theory, double experiment, const Tolerances& tol) {
  ComparisonResult r{theory, experiment, 0.0, tol.deviation_relative, false, false};
  if (std::abs(theory) < tol.deviation_absolute) {
    r.absolute = true;
    r.bound = tol.deviation_absolute;
    r.discrepancy = std::abs(experiment - theory);
  } else {
    r.discrepancy = std::abs(experiment - theory) / std::abs(theory);
  }
  r.within = r.discrepancy <= r.bound;
  return r;
}

}  // namespace detail

/**
 * Confronts theory with experiment. With pd descriptors present the
 * experiment is compared against them (the channel-aware reading); otherwise
 * against the intrinsic descriptors.
 */
inline ConfrontationReport confront(const DescriptorSet& in_desc, const DescriptorSet& exp_desc,
                                    const std::optional<DescriptorSet>& pd_desc, const Tolerances& tol = {}) {
  ConfrontationReport rep;
  rep.in_desc = in_desc;
  rep.pd_desc = pd_desc;
  rep.exp_desc = exp_desc;
  rep.tolerances = tol;
  const DescriptorSet& theory = pd_desc ? *pd_desc : in_desc;
  rep.mean_check = detail::compare_mean(theory.mean, exp_desc.mean, tol);
  rep.deviation_check = detail::compare_deviation(theory.deviation, exp_desc.deviation, tol);
  rep.verdict = rep.mean_check.within && rep.deviation_check.within ? Verdict::confirmed : Verdict::refuted;
  if (rep.verdict == Verdict::refuted) {
    rep.suggested_upgradings = {Upgrading::u1, Upgrading::u2};
    if (!pd_desc) rep.suggested_upgradings.push_back(Upgrading::u3);
  }
  return rep;
}

struct EstimatorVarianceRow {
  std::size_t ensemble_size = 0;
  double variance = 0.0;           // variance of the N-sample mean across trials
  double scaled_variance = 0.0;    // variance * N; flat in N for the 1/N law
};

/**
 * For each ensemble size N, repeats `trials` experiments that average N draws
 * and reports the variance of those averages. Each trial owns a generator
 * seeded from (seed, N, trial), so results do not depend on evaluation order.
 */
inline std::vector<EstimatorVarianceRow> single_sampling_fallacy_demo(const SampleSource& population,
                                                                      std::span<const std::size_t> ensemble_sizes,
                                                                      std::size_t trials, std::uint64_t seed) {
  if (ensemble_sizes.empty()) throw Error(ErrorCode::invalid_argument, "need at least one ensemble size");
  if (trials < 100) throw Error(ErrorCode::invalid_argument, "need at least 100 trials");
  std::vector<EstimatorVarianceRow> rows;
  detail::SourceSampler sampler(population);
  for (std::size_t n : ensemble_sizes) {
    if (n == 0) throw Error(ErrorCode::invalid_argument, "ensemble sizes must be >= 1");
    std::vector<double> means(trials);
    for (std::size_t t = 0; t < trials; ++t) {
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(t)};
      std::mt19937_64 rng(seq);
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += sampler(rng);
      means[t] = s / static_cast<double>(n);
    }
    const double m = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(trials);
    double var = 0.0;
    for (double v : means) var += (v - m) * (v - m);
    var /= static_cast<double>(trials - 1);
    rows.push_back({n, var, var * static_cast<double>(n)});
  }
  return rows;
}

}  // namespace qmeas
