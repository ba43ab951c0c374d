#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "qmeas/channel.hpp"

using namespace qmeas;

namespace {

const PhysicalUnits natural = PhysicalUnits::natural();
const double sigma = natural.oscillator_sigma();

Grid channel_grid(double gamma, std::size_t n = 2048) {
  return Grid::symmetric(12.0 * std::sqrt(sigma * sigma + gamma * gamma), n);
}

RealFunction gaussian_density(const Grid& g, double variance) {
  return RealFunction::sample(g, [variance](double x) { return oracle::gaussian_pdf(x, variance); });
}

WaveFunction ground_state(const Grid& g) {
  return WaveFunction::from_unnormalized(
      RealFunction::sample(g, [](double x) { return std::exp(-x * x / (4.0 * sigma * sigma)); }));
}

double max_abs_diff(const RealFunction& a, const RealFunction& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST(GaussianKernel, ZeroWidthIsIdentity) {
  const Grid g = channel_grid(0.0, 256);
  const auto k = build_gaussian_kernel({0.0, g});
  EXPECT_TRUE(k.is_identity());
  const auto rho = gaussian_density(g, 0.5);
  const auto out = k.apply(rho);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(out[i], rho[i]);
  // Widths below half a spacing snap to the identity as well.
  EXPECT_TRUE(build_gaussian_kernel({0.4 * g.spacing(), g}).is_identity());
  EXPECT_FALSE(build_gaussian_kernel({0.6 * g.spacing(), g}).is_identity());
}

TEST(GaussianKernel, DoublyNormalized) {
  const Grid g = channel_grid(1.0, 1024);
  const auto k = build_gaussian_kernel({1.0, g});
  for (double s : k.row_integrals()) EXPECT_NEAR(s, 1.0, 1e-10);
  for (double s : k.column_integrals()) EXPECT_NEAR(s, 1.0, 1e-10);
  for (double v : k.values()) EXPECT_GE(v, 0.0);
  // Identity kernel is doubly normalized by construction.
  const auto id = Kernel::identity(g);
  for (double s : id.row_integrals()) EXPECT_NEAR(s, 1.0, 1e-12);
  for (double s : id.column_integrals()) EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(GaussianKernel, ConvolutionAddsVariances) {
  const double s2 = 0.5, gamma = 1.0;
  const Grid g = channel_grid(gamma);
  const auto out = build_gaussian_kernel({gamma, g}).apply(gaussian_density(g, s2));
  const double half = 6.0 * std::sqrt(s2 + gamma * gamma);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (std::abs(g.x(i)) > half) continue;
    EXPECT_NEAR(out[i], oracle::gaussian_pdf(g.x(i), s2 + gamma * gamma), 1e-6) << g.x(i);
  }
}

TEST(Kernel, RowAndColumnModes) {
  const Grid g(0.0, 1.0, 16);
  std::vector<double> m(16 * 16);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  for (auto& v : m) v = u(rng);
  const auto r = Kernel::normalized(g, m, KernelNormalization::row);
  for (double s : r.row_integrals()) EXPECT_NEAR(s, 1.0, 1e-13);
  const auto c = Kernel::normalized(g, m, KernelNormalization::column);
  for (double s : c.column_integrals()) EXPECT_NEAR(s, 1.0, 1e-13);
  // Non-symmetric input goes through plain alternating scaling.
  const auto b = Kernel::normalized(g, m, KernelNormalization::both);
  for (double s : b.row_integrals()) EXPECT_NEAR(s, 1.0, 1e-10);
  for (double s : b.column_integrals()) EXPECT_NEAR(s, 1.0, 1e-10);
}

TEST(Kernel, RejectsNegativeEntries) {
  const Grid g(0.0, 1.0, 8);
  std::vector<double> m(64, 1.0);
  m[5] = -0.1;
  EXPECT_THROW((void)Kernel::normalized(g, m, KernelNormalization::both), Error);
}

TEST(Kernel, CsvRoundTrip) {
  const Grid g = channel_grid(0.5, 64);
  const auto k = build_gaussian_kernel({0.5, g});
  std::stringstream ss;
  write_kernel_csv(ss, k);
  const auto header = ss.str().substr(0, ss.str().find('\n'));
  EXPECT_EQ(header.rfind("x\\x',", 0), 0u);
  const auto back = read_kernel_csv(ss, g);
  for (std::size_t i = 0; i < k.values().size(); ++i) EXPECT_NEAR(back.values()[i], k.values()[i], 1e-12);

  std::stringstream wrong_grid(ss.str());
  write_kernel_csv(wrong_grid, k);
  EXPECT_THROW((void)read_kernel_csv(wrong_grid, channel_grid(0.5, 65)), Error);
}

TEST(ApplyChannel, IdealChannelIsTransparent) {
  const Grid g = channel_grid(0.0, 512);
  const auto rho = gaussian_density(g, 0.5);
  const auto j = RealFunction::sample(g, [](double x) { return 0.3 * oracle::gaussian_pdf(x, 0.5); });
  const auto out = apply_channel(ChannelModel::ideal(g), rho, j);
  EXPECT_EQ(max_abs_diff(out.density, rho), 0.0);
  EXPECT_EQ(max_abs_diff(out.current, j), 0.0);
}

TEST(ApplyChannel, ZeroCurrentStaysZero) {
  const Grid g = channel_grid(1.0, 512);
  const auto out = apply_channel(ChannelModel::gaussian(g, 1.0, 0.3), gaussian_density(g, 0.5), RealFunction(g));
  for (double v : out.current.values()) EXPECT_EQ(v, 0.0);
}

TEST(ApplyChannel, GroundStateDensityBroadensByGammaSquared) {
  const Grid g = channel_grid(1.0);
  const auto psi = ground_state(g);
  const auto out = apply_channel(ChannelModel::gaussian(g, 1.0), density(psi), current(psi));
  const double var = sigma * sigma + 1.0;
  EXPECT_NEAR(integrate(out.density), 1.0, 1e-10);
  for (std::size_t i = 0; i < g.size(); i += 13) {
    if (std::abs(g.x(i)) < 6.0 * std::sqrt(var)) EXPECT_NEAR(out.density[i], oracle::gaussian_pdf(g.x(i), var), 1e-6);
  }
}

TEST(ApplyChannel, GridMismatchThrows) {
  const Grid g = channel_grid(1.0, 64);
  const auto ch = ChannelModel::gaussian(g, 1.0);
  const RealFunction other(channel_grid(1.0, 65));
  EXPECT_THROW((void)apply_channel(ch, other, other), Error);
}

TEST(ApplyChannel, ConservesProbabilityAndPositivity) {
  const Grid g = channel_grid(0.7, 512);
  const auto ch = ChannelModel::gaussian(g, 0.7);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-4.0, 4.0), w(0.2, 1.5);
  for (int t = 0; t < 20; ++t) {
    const double c1 = u(rng), c2 = u(rng), w1 = w(rng), w2 = w(rng), mix = std::uniform_real_distribution<double>(0, 1)(rng);
    auto rho = RealFunction::sample(g, [&](double x) {
      return mix * oracle::gaussian_pdf(x - c1, w1 * w1) + (1 - mix) * oracle::gaussian_pdf(x - c2, w2 * w2);
    });
    rho *= 1.0 / integrate(rho);
    const auto out = apply_channel(ch, rho, RealFunction(g));
    EXPECT_NEAR(integrate(out.density), 1.0, 1e-10);
    for (double v : out.density.values()) EXPECT_GE(v, 0.0);
  }
}

TEST(ApplyChannel, DiracLimitIsMonotone) {
  const Grid g = channel_grid(0.0);
  const auto rho = density(ground_state(g));
  double previous = std::numeric_limits<double>::infinity();
  for (double f : {0.5, 0.2, 0.1, 0.05}) {
    const auto out = apply_channel(ChannelModel::gaussian(g, f * sigma), rho, RealFunction(g));
    double d = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (std::abs(g.x(i)) < 6.0 * sigma) d = std::max(d, std::abs(out.density[i] - rho[i]));
    }
    EXPECT_LT(d, previous) << f;
    previous = d;
  }
}

TEST(Reconstruct, ZeroCurrentGivesRealSqrtDensity) {
  const Grid g = channel_grid(1.0, 1024);
  const double var = sigma * sigma + 1.0;
  const auto rho = gaussian_density(g, var);
  const auto psi = reconstruct_predicted_state(rho, RealFunction(g));
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_EQ(psi.psi()[i].imag(), 0.0);
    // Closed form: sqrt of the N(0, var) density.
    EXPECT_NEAR(psi.psi()[i].real(), std::sqrt(oracle::gaussian_pdf(g.x(i), var)), 1e-8);
  }
}

TEST(Reconstruct, RoundTripOfMovingPacket) {
  const Grid g = Grid::symmetric(12.0, 4096);
  for (double k : {0.0, 1.0, 3.0}) {
    const auto psi = WaveFunction::from_unnormalized(ComplexFunction::sample(g, [k](double x) {
      return std::polar(std::exp(-(x - 0.5) * (x - 0.5) / 2.0), k * x);
    }));
    const auto rho = density(psi);
    const auto j = current(psi);
    const auto rec = reconstruct_predicted_state(rho, j);
    EXPECT_GE(std::abs(inner_product(rec.psi(), psi.psi())), 1.0 - 1e-6) << k;
    const auto rho2 = density(rec), j2 = current(rec);
    for (std::size_t i = 1; i + 1 < g.size(); ++i) {
      EXPECT_NEAR(rho2[i], rho[i], 1e-8);
      EXPECT_NEAR(j2[i], j[i], 1e-6);
    }
    // Phase is pinned to zero at the leftmost supported point.
    std::size_t first = 0;
    while (rho[first] <= density_floor_fraction * *std::max_element(rho.values().begin(), rho.values().end())) ++first;
    EXPECT_NEAR(std::arg(rec.psi()[first]), 0.0, 1e-12);
  }
}

TEST(Reconstruct, PhaseStaysSmoothBelowDensityFloor) {
  // Tails of a boosted packet fall below the floor; a phase kink there would
  // blow up (dH)^2 psi and with it the fourth energy moment.
  const Grid g = Grid::symmetric(8.5, 2048);
  const auto psi = WaveFunction::from_unnormalized(
      ComplexFunction::sample(g, [](double x) { return std::exp(-x * x / 2.0) * std::polar(1.0, x); }));
  const auto rec = reconstruct_predicted_state(density(psi), current(psi));
  const auto h = harmonic_hamiltonian(g);
  const auto a = describe(psi, h, true), b = describe(rec, h, true);
  EXPECT_NEAR(*b.fourth_moment, *a.fourth_moment, 1e-8);
  const auto ratio = rec.psi()[0] / psi.psi()[0];
  const auto ratio_end = rec.psi()[g.size() - 1] / psi.psi()[g.size() - 1];
  EXPECT_NEAR(std::abs(ratio - ratio_end), 0.0, 1e-9);
}

TEST(Reconstruct, CurrentWithoutDensityIsInconsistent) {
  const Grid g = Grid::symmetric(10.0, 512);
  const auto rho = RealFunction::sample(g, [](double x) { return std::abs(x) < 2.0 ? 0.25 : 0.0; });
  const auto j = RealFunction::sample(g, [](double) { return 0.1; });
  try {
    (void)reconstruct_predicted_state(rho, j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::inconsistent_channel_output);
  }
}

TEST(PdDescriptors, IdealChannelReproducesInDescriptors) {
  const Grid g = channel_grid(0.0);
  const auto psi = ground_state(g);
  const auto h = harmonic_hamiltonian(g);
  const auto out = apply_channel(ChannelModel::ideal(g), density(psi), current(psi));
  const auto pd = pd_descriptors(reconstruct_predicted_state(out.density, out.current), h);
  const auto in = describe(psi, h);
  EXPECT_NEAR(pd.mean, in.mean, 1e-8);
  EXPECT_NEAR(pd.deviation, in.deviation, 1e-8);
}

TEST(PdDescriptors, UnitWidthDeviceMatchesGaussianOracle) {
  const double gamma = 1.0;
  const Grid g = channel_grid(gamma);
  const auto psi = ground_state(g);
  const auto out = apply_channel(ChannelModel::gaussian(g, gamma), density(psi), current(psi));
  const auto pd = pd_descriptors(reconstruct_predicted_state(out.density, out.current), harmonic_hamiltonian(g));
  const auto ref = oracle::oscillator_energy_moments(sigma * sigma + gamma * gamma);
  EXPECT_NEAR(ref.mean, 5.0 / 6.0, 1e-10);
  EXPECT_NEAR(ref.deviation, 2.0 * std::numbers::sqrt2 / 3.0, 1e-10);
  EXPECT_NEAR(pd.mean / ref.mean, 1.0, 1e-4);
  EXPECT_NEAR(pd.deviation / ref.deviation, 1.0, 1e-4);
}

TEST(ClosedForms, IdealLimit) {
  const auto cf = oscillator_closed_forms(natural, 0.0);
  EXPECT_DOUBLE_EQ(cf.mean_in, 0.5);
  EXPECT_DOUBLE_EQ(cf.dev_in, 0.0);
  EXPECT_DOUBLE_EQ(cf.mean_pd, 0.5);
  EXPECT_DOUBLE_EQ(cf.dev_pd, 0.0);
}

TEST(ClosedForms, SpotValues) {
  const auto one = oscillator_closed_forms(natural, 1.0);
  EXPECT_NEAR(one.mean_pd, 10.0 / 12.0, 1e-15);
  EXPECT_NEAR(one.dev_pd, 2.0 * std::numbers::sqrt2 / 3.0, 1e-15);
  const auto half = oscillator_closed_forms(natural, 0.5);
  EXPECT_NEAR(half.mean_pd, 3.25 / 6.0, 1e-15);
  EXPECT_NEAR(half.dev_pd, std::numbers::sqrt2 * 0.25 * 1.25 / 1.5, 1e-15);
  EXPECT_NEAR(half.dev_pd, 0.29463, 1e-5);
}

TEST(ClosedForms, AgreeWithGaussianStateQuadrature) {
  // The predicted state is the real Gaussian of variance hbar/(2 m w) + gamma^2.
  for (const PhysicalUnits u : {natural, PhysicalUnits{1.0, 2.0, 0.5}, PhysicalUnits{0.7, 1.3, 2.2}}) {
    for (double gamma : {0.0, 0.1, 0.5, 1.0, 2.0}) {
      const auto cf = oscillator_closed_forms(u, gamma);
      const double s2 = u.hbar / (2.0 * u.mass * u.omega) + gamma * gamma;
      const auto ref = oracle::oscillator_energy_moments(s2, u.hbar, u.mass, u.omega);
      EXPECT_NEAR(cf.mean_pd, ref.mean, 1e-9 * ref.mean);
      EXPECT_NEAR(cf.dev_pd, ref.deviation, 1e-7 * (1.0 + ref.deviation));
    }
  }
}

TEST(ClosedForms, MeanIncreasesWithGamma) {
  double previous = 0.0;
  for (double gamma : {0.0, 0.1, 0.5, 1.0, 2.0}) {
    const double m = oscillator_closed_forms(natural, gamma).mean_pd;
    EXPECT_GT(m, previous);
    previous = m;
  }
}
