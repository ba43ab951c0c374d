// Prints how a Gaussian device of growing width turns the oscillator ground
// state (a sharp energy eigenstate) into a state with spread-out energy.

#include <cmath>
#include <cstdio>

#include "qmeas/qmeas.hpp"

int main() {
  using namespace qmeas;
  const auto units = PhysicalUnits::natural();
  const double sigma = units.oscillator_sigma();

  std::printf("%6s  %10s %10s  %10s %10s  %8s\n", "gamma", "<H>_pd", "closed", "dH_pd", "closed", "p(E0)");
  for (double gamma : {0.0, 0.1, 0.25, 0.5, 1.0, 1.5, 2.0}) {
    const Grid grid = Grid::symmetric(12.0 * std::hypot(sigma, gamma), 2048);
    const auto basis = solve_bound_states(PotentialSpec::harmonic(units), grid, 1);
    const auto& psi = basis.states[0];

    const auto out = apply_channel(ChannelModel::gaussian(grid, gamma), density(psi), current(psi));
    const auto pd = reconstruct_predicted_state(out.density, out.current, units);
    const auto d = pd_descriptors(pd, basis.hamiltonian());
    const auto cf = oscillator_closed_forms(units, gamma);
    // Weight of the original eigenstate left in the predicted state.
    const double p0 = std::norm(inner_product(psi.psi(), pd.psi()));

    std::printf("%6.2f  %10.6f %10.6f  %10.6f %10.6f  %8.5f\n", gamma, d.mean, cf.mean_pd, d.deviation, cf.dev_pd, p0);
  }
}
