#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "qmeas/channel.hpp"
#include "qmeas/sampling.hpp"

using namespace qmeas;

namespace {

const PhysicalUnits natural = PhysicalUnits::natural();
const double sigma = natural.oscillator_sigma();

double sample_mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double sample_sd(const std::vector<double>& v) {
  const double m = sample_mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / v.size());
}

struct OscillatorFixture : ::testing::Test {
  static void SetUpTestSuite() {
    grid = std::make_unique<Grid>(Grid::symmetric(16.0, 4096));
    basis = std::make_unique<EigenSolution>(solve_bound_states(PotentialSpec::harmonic(), *grid, 30));
  }
  static void TearDownTestSuite() {
    basis.reset();
    grid.reset();
  }
  static inline std::unique_ptr<Grid> grid;
  static inline std::unique_ptr<EigenSolution> basis;
};

}  // namespace

TEST_F(OscillatorFixture, GroundStateSpectrumIsDegenerate) {
  const auto lines = spectral_probabilities(basis->states[0], *basis);
  EXPECT_NEAR(lines[0].probability, 1.0, 1e-8);
  for (std::size_t s = 1; s < lines.size(); ++s) EXPECT_LE(lines[s].probability, 1e-8);
}

TEST_F(OscillatorFixture, EqualSuperposition) {
  const auto psi = WaveFunction::from_unnormalized(basis->states[0].psi() + basis->states[1].psi());
  const auto lines = spectral_probabilities(psi, *basis);
  EXPECT_NEAR(lines[0].probability, 0.5, 1e-8);
  EXPECT_NEAR(lines[1].probability, 0.5, 1e-8);
}

TEST_F(OscillatorFixture, PredictedStateSpectrumMatchesPdMean) {
  const auto psi = basis->states[0];
  const auto out = apply_channel(ChannelModel::gaussian(*grid, 1.0), density(psi), current(psi));
  const auto pd = reconstruct_predicted_state(out.density, out.current);
  const auto lines = spectral_probabilities(pd, *basis);
  const double total = std::accumulate(lines.begin(), lines.end(), 0.0, [](double a, const SpectralLine& l) { return a + l.probability; });
  EXPECT_GE(total, 0.999);
  EXPECT_LE(total, 1.0 + 1e-9);
  EXPECT_NEAR(spectral_mean(lines), pd_descriptors(pd, basis->hamiltonian()).mean, 1e-3);
}

TEST_F(OscillatorFixture, TruncatedBasisIsRejected) {
  const auto psi = basis->states[0];
  const auto out = apply_channel(ChannelModel::gaussian(*grid, 2.0), density(psi), current(psi));
  const auto pd = reconstruct_predicted_state(out.density, out.current);
  EigenSolution small = *basis;
  small.energies.resize(2);
  small.states.erase(small.states.begin() + 2, small.states.end());
  try {
    (void)spectral_probabilities(pd, small);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::k_max_too_small);
  }
}

TEST(DrawSamples, EigenstateWithoutNoiseIsConstant) {
  const Spectrum lines{{0.5, 1.0}, {1.5, 0.0}};
  const auto v = draw_samples({1000, 42, DeviceNoise::none()}, lines);
  for (double x : v) EXPECT_EQ(x, 0.5);
}

TEST(DrawSamples, DeterministicInSeed) {
  const Grid g = Grid::symmetric(8.0, 1024);
  const auto rho = RealFunction::sample(g, [](double x) { return oracle::gaussian_pdf(x, 0.5); });
  const SamplingPlan plan{5000, 1234, DeviceNoise::additive_gaussian(0.1)};
  EXPECT_EQ(draw_samples(plan, rho), draw_samples(plan, rho));
  auto other = plan;
  other.seed = 1235;
  EXPECT_NE(draw_samples(plan, rho), draw_samples(other, rho));
  EXPECT_THROW((void)draw_samples({0, 1, {}}, rho), Error);
}

TEST(DrawSamples, GroundStateDensityMeanWithinCltBound) {
  const Grid g = Grid::symmetric(12.0 * sigma, 2048);
  const auto rho = RealFunction::sample(g, [](double x) { return oracle::gaussian_pdf(x, sigma * sigma); });
  const std::size_t n = 100000;
  const auto v = draw_samples({n, 2024, {}}, rho);
  EXPECT_LT(std::abs(sample_mean(v)), 3.0 * sigma / std::sqrt(static_cast<double>(n)));
  EXPECT_NEAR(sample_sd(v) / sigma, 1.0, 0.01);
}

TEST(DrawSamples, NoiseKeepsMeanAndAddsVariance) {
  const Spectrum lines{{0.5, 0.25}, {2.5, 0.5}, {4.5, 0.25}};
  const double width = 1.2;
  const double spectrum_sd = std::sqrt(2.0);  // variance 0.25*4 + 0.25*4
  const auto v = draw_samples({200000, 9, DeviceNoise::additive_gaussian(width)}, lines);
  const double se = std::sqrt(2.0 + width * width) / std::sqrt(2e5);
  EXPECT_NEAR(sample_mean(v), 2.5, 4.0 * se);
  EXPECT_NEAR(sample_sd(v), std::sqrt(spectrum_sd * spectrum_sd + width * width), 0.01);
  EXPECT_THROW((void)DeviceNoise::additive_gaussian(-1.0), Error);
}

TEST(DrawSamples, LawOfLargeNumbersOverSeeds) {
  const Spectrum lines{{0.5, 0.6}, {2.5, 0.3}, {4.5, 0.1}};
  const double mean = spectral_mean(lines);
  double var = 0.0;
  for (const auto& l : lines) var += l.probability * (l.value - mean) * (l.value - mean);
  const std::size_t n = 10000;
  int inside = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto dist = EmpiricalDistribution::from_samples(draw_samples({n, seed, {}}, lines));
    if (std::abs(exp_quantifiers(dist).mean - mean) <= 4.0 * std::sqrt(var / n)) ++inside;
  }
  EXPECT_GE(inside, 99);
}

TEST(ExpQuantifiers, HandArithmetic) {
  const auto d = exp_quantifiers(EmpiricalDistribution({1.0, 2.0, 3.0}, {0.2, 0.3, 0.5}));
  EXPECT_NEAR(d.mean, 2.3, 1e-15);
  EXPECT_NEAR(d.deviation, std::sqrt(0.61), 1e-15);
  EXPECT_NEAR(d.deviation, 0.78102, 1e-5);
}

TEST(ExpQuantifiers, DegenerateAndSymmetric) {
  const auto one = exp_quantifiers(EmpiricalDistribution({4.2}, {1.0}));
  EXPECT_EQ(one.mean, 4.2);
  EXPECT_EQ(one.deviation, 0.0);
  const auto two = exp_quantifiers(EmpiricalDistribution({-1.0, 1.0}, {0.5, 0.5}));
  EXPECT_EQ(two.mean, 0.0);
  EXPECT_EQ(two.deviation, 1.0);
}

TEST(EmpiricalDistribution, ValidatesInvariants) {
  EXPECT_THROW(EmpiricalDistribution({1.0, 1.0}, {0.5, 0.5}), Error);
  EXPECT_THROW(EmpiricalDistribution({1.0, 2.0}, {0.5, 0.6}), Error);
  EXPECT_THROW(EmpiricalDistribution({1.0, 2.0}, {1.0, 0.0}), Error);
  EXPECT_THROW(EmpiricalDistribution({}, {}), Error);
}

TEST(EmpiricalDistribution, BinningPreservesMomentsWithinHalfBin) {
  const Grid g = Grid::symmetric(10.0, 2048);
  const auto rho = RealFunction::sample(g, [](double x) { return 0.7 * oracle::gaussian_pdf(x + 1.0, 0.3) + 0.3 * oracle::gaussian_pdf(x - 2.0, 1.0); });
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto raw = draw_samples({20000, seed, {}}, rho);
    const auto dist = EmpiricalDistribution::from_samples(raw);
    double freq_total = 0.0;
    for (double f : dist.frequencies()) freq_total += f;
    EXPECT_NEAR(freq_total, 1.0, 1e-12);
    for (std::size_t j = 1; j < dist.size(); ++j) EXPECT_GT(dist.values()[j], dist.values()[j - 1]);
    std::vector<double> sorted = raw;
    std::sort(sorted.begin(), sorted.end());
    const double iqr = sorted[sorted.size() * 3 / 4] - sorted[sorted.size() / 4];
    const double half_bin = iqr / std::cbrt(static_cast<double>(raw.size()));
    const auto d = exp_quantifiers(dist);
    EXPECT_NEAR(d.mean, sample_mean(raw), 1e-12);
    EXPECT_NEAR(d.deviation, sample_sd(raw), half_bin);
  }
}

TEST(EmpiricalDistribution, DiscreteSamplesGroupByValue) {
  const std::vector<double> raw{0.5, 0.5, 0.5, 2.5, 0.5, 0.5, 0.5, 0.5};
  const auto d = EmpiricalDistribution::from_samples(raw);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.values()[0], 0.5);
  EXPECT_EQ(d.values()[1], 2.5);
  EXPECT_NEAR(d.frequencies()[0], 7.0 / 8.0, 1e-15);
}

TEST(Confront, IdenticalDescriptorsConfirm) {
  const DescriptorSet a{0.5, 0.0, {}, {}};
  const auto rep = confront(a, a, std::nullopt);
  EXPECT_EQ(rep.verdict, Verdict::confirmed);
  EXPECT_TRUE(rep.suggested_upgradings.empty());
  EXPECT_TRUE(rep.deviation_check.absolute);
}

TEST(Confront, IntrinsicTheoryRefutedByNoisyDevice) {
  const DescriptorSet in{0.5, 0.0, {}, {}}, exp{0.83, 0.94, {}, {}};
  const auto rep = confront(in, exp, std::nullopt, Tolerances{0.05, 0.10, 0.02});
  EXPECT_EQ(rep.verdict, Verdict::refuted);
  EXPECT_EQ(rep.suggested_upgradings, (std::vector<Upgrading>{Upgrading::u1, Upgrading::u2, Upgrading::u3}));
}

TEST(Confront, ChannelAwareTheoryConfirmed) {
  const auto cf = oscillator_closed_forms(natural, 1.0);
  const DescriptorSet in{cf.mean_in, cf.dev_in, {}, {}}, pd{cf.mean_pd, cf.dev_pd, {}, {}};
  const DescriptorSet exp{cf.mean_pd * 1.02, cf.dev_pd * 0.98, {}, {}};
  const auto rep = confront(in, exp, pd);
  EXPECT_EQ(rep.verdict, Verdict::confirmed);
  EXPECT_TRUE(rep.suggested_upgradings.empty());

  const DescriptorSet far{cf.mean_pd * 1.5, cf.dev_pd, {}, {}};
  const auto refuted = confront(in, far, pd);
  EXPECT_EQ(refuted.verdict, Verdict::refuted);
  EXPECT_EQ(refuted.suggested_upgradings, (std::vector<Upgrading>{Upgrading::u1, Upgrading::u2}));
}

TEST(FallacyDemo, SingleSampleVarianceEqualsPopulationVariance) {
  const Spectrum lines{{0.0, 0.5}, {1.0, 0.5}};  // Bernoulli(1/2), variance 1/4
  const std::vector<std::size_t> sizes{1, 2, 4, 8};
  const auto rows = single_sampling_fallacy_demo(lines, sizes, 10000, 77);
  EXPECT_NEAR(rows[0].variance / 0.25, 1.0, 0.10);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_NEAR(rows[i].variance / rows[i - 1].variance, 0.5, 0.5 * 0.15);
}

TEST(FallacyDemo, DegeneratePopulationHasNoSpread) {
  const Spectrum lines{{2.5, 1.0}};
  const std::vector<std::size_t> sizes{1, 10, 100};
  for (const auto& r : single_sampling_fallacy_demo(lines, sizes, 100, 1)) EXPECT_EQ(r.variance, 0.0);
}

TEST(FallacyDemo, IsDeterministicAndValidatesArguments) {
  const Spectrum lines{{0.0, 0.3}, {1.0, 0.7}};
  const std::vector<std::size_t> sizes{1, 3};
  const auto a = single_sampling_fallacy_demo(lines, sizes, 200, 5);
  const auto b = single_sampling_fallacy_demo(lines, sizes, 200, 5);
  EXPECT_EQ(a[1].variance, b[1].variance);
  EXPECT_THROW((void)single_sampling_fallacy_demo(lines, sizes, 99, 5), Error);
  EXPECT_THROW((void)single_sampling_fallacy_demo(lines, std::vector<std::size_t>{}, 200, 5), Error);
}
