#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "cli_config.hpp"
#include "qmeas/qmeas.hpp"

namespace qmeas::cli {

using nlohmann::json;

inline constexpr int report_schema_version = 1;

enum ExitCode : int { exit_ok = 0, exit_config = 2, exit_numeric = 3, exit_refuted = 4 };

inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::config_error:
    case ErrorCode::io_error:
    case ErrorCode::invalid_argument:
      return exit_config;
    default:
      return exit_numeric;
  }
}

/// Shortest decimal text that round-trips to the same double.
inline std::string format_number(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& os) : os_(os) {}

  void header(std::initializer_list<std::string_view> cols) {
    bool first = true;
    for (auto c : cols) {
      if (!first) os_ << ',';
      os_ << c;
      first = false;
    }
    os_ << '\n';
  }
  void header(const std::vector<std::string>& cols) {
    for (std::size_t i = 0; i < cols.size(); ++i) os_ << (i ? "," : "") << cols[i];
    os_ << '\n';
  }
  void row(std::initializer_list<double> vals) { row(std::vector<double>(vals)); }
  void row(const std::vector<double>& vals) {
    for (std::size_t i = 0; i < vals.size(); ++i) os_ << (i ? "," : "") << format_number(vals[i]);
    os_ << '\n';
  }

 private:
  std::ostream& os_;
};

/// Writes via a temporary file and a rename so readers never see partial output.
inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw Error(ErrorCode::io_error, "cannot write '" + tmp.string() + "'");
    f << content;
    if (!f) throw Error(ErrorCode::io_error, "write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

struct Artifacts {
  std::string out_dir;
  void save(const std::string& name, const std::string& content) const {
    if (!out_dir.empty()) write_file(std::filesystem::path(out_dir) / name, content);
  }
};

inline json descriptor_json(const DescriptorSet& d) {
  json j{{"mean", d.mean}, {"dev", d.deviation}};
  if (d.third_moment) j["third_moment"] = *d.third_moment;
  if (d.fourth_moment) j["fourth_moment"] = *d.fourth_moment;
  return j;
}

/// |numeric - closed| / max(|closed|, 1e-12 * scale); scale is 1 in natural units.
inline double relative_error(double numeric, double closed, double scale = 1.0) {
  return std::abs(numeric - closed) / std::max(std::abs(closed), 1e-12 * scale);
}

// ---------------------------------------------------------------------------
// Pipeline pieces shared by the commands.

inline PhysicalUnits units_of(const RunConfig& c) {
  return c.units == "si" ? PhysicalUnits::si(c.mass, c.omega) : PhysicalUnits::natural();
}

/// Natural scale of an observable, used to express tolerance_abs in SI runs.
inline double observable_scale(const RunConfig& c, const PhysicalUnits& u) {
  switch (c.observable) {
    case Observable::energy: return u.hbar * u.omega;
    case Observable::position: return std::sqrt(u.hbar / (u.mass * u.omega));
    case Observable::momentum: return std::sqrt(u.hbar * u.mass * u.omega);
  }
  return 1.0;
}

inline std::string_view observable_name(Observable o) {
  switch (o) {
    case Observable::energy: return "energy";
    case Observable::position: return "position";
    case Observable::momentum: return "momentum";
  }
  return "?";
}

/// Reads a two-column x,V table on a uniform grid. A non-numeric first line is taken as a header.
inline RealFunction read_potential_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::config_error, "cannot open potential file '" + path + "'");
  std::vector<double> xs, vs;
  std::string line;
  int lineno = 0;
  auto parse = [&](std::string_view cell, double& v) {
    const std::string t = trim(cell);
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    return !t.empty() && ec == std::errc() && ptr == t.data() + t.size();
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto comma = line.find(',');
    double x = 0.0, v = 0.0;
    const bool ok = comma != std::string::npos && parse(std::string_view(line).substr(0, comma), x) &&
                    parse(std::string_view(line).substr(comma + 1), v);
    if (!ok) {
      if (xs.empty() && lineno == 1) continue;
      throw Error(ErrorCode::io_error, path + ":" + std::to_string(lineno) + ": expected x,V");
    }
    xs.push_back(x);
    vs.push_back(v);
  }
  if (xs.size() < Grid::min_points) throw Error(ErrorCode::io_error, path + ": too few rows");
  const Grid g(xs.front(), xs.back(), xs.size());
  // Loose enough for tables written with ~6 significant digits.
  const double tol = 1e-2 * g.spacing();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (std::abs(xs[i] - g.x(i)) > tol) throw Error(ErrorCode::io_error, path + ": x column is not uniformly spaced");
  }
  return RealFunction(g, std::move(vs));
}

struct Setup {
  PhysicalUnits units;
  Grid grid;
  PotentialSpec potential;
  bool harmonic = true;
};

/**
 * Harmonic runs use a symmetric grid of half-width domain * sqrt(sigma^2 + gamma^2);
 * when an eigenbasis of k_max states is needed it is widened so that the
 * highest state has decayed well past its classical turning point.
 */
inline Setup make_setup(const RunConfig& c, double gamma, bool needs_basis) {
  const PhysicalUnits u = units_of(c);
  if (c.potential == "table") {
    RealFunction v = read_potential_table(c.potential_file);
    Grid g = v.grid();
    return {u, g, PotentialSpec::table(std::move(v), u), false};
  }
  const double sigma = u.oscillator_sigma();
  double half = c.domain * std::sqrt(sigma * sigma + gamma * gamma);
  if (needs_basis) {
    const double turning = std::sqrt(2.0 * (2.0 * static_cast<double>(c.k_max) + 1.0)) * sigma;
    half = std::max(half, turning + 10.0 * sigma);
  }
  const Grid g = Grid::symmetric(half, c.grid_n);
  return {u, g, PotentialSpec::harmonic(u), true};
}

inline qmeas::Observable observable_of(const RunConfig& c, const EigenSolution& sol) {
  switch (c.observable) {
    case Observable::position: return position_operator(sol.units);
    case Observable::momentum: return momentum_operator(sol.units);
    case Observable::energy: break;
  }
  return sol.hamiltonian();
}

inline ChannelModel channel_of(const RunConfig& c, const Grid& g, double gamma) {
  if (!c.kernel_file.empty()) {
    std::ifstream in(c.kernel_file);
    if (!in) throw Error(ErrorCode::config_error, "cannot open kernel file '" + c.kernel_file + "'");
    Kernel k = read_kernel_csv(in, g);
    return ChannelModel(k, k, "kernel-file");
  }
  const double gc = c.gamma_current.value_or(gamma);
  if (gamma == 0.0 && gc == 0.0) return ChannelModel::ideal(g);
  return ChannelModel::gaussian(g, gamma, gc);
}

struct Measured {
  Setup setup;
  EigenSolution solution;
  WaveFunction in_state;
  ChannelOutput output;
  WaveFunction pd_state;
};

inline Measured run_channel(const RunConfig& c, double gamma, std::size_t n_states, bool needs_basis) {
  Setup s = make_setup(c, gamma, needs_basis);
  EigenSolution sol = solve_bound_states(s.potential, s.grid, std::max(n_states, c.state + 1));
  WaveFunction in = sol.states[c.state];
  const ChannelModel ch = channel_of(c, s.grid, gamma);
  ChannelOutput out = apply_channel(ch, density(in), current(in));
  WaveFunction pd = reconstruct_predicted_state(out.density, out.current, s.units);
  return {std::move(s), std::move(sol), std::move(in), std::move(out), std::move(pd)};
}

inline bool closed_forms_apply(const RunConfig& c, const Setup& s) {
  return s.harmonic && c.observable == Observable::energy && c.state == 0 && c.kernel_file.empty();
}

inline json closed_form_json(const OscillatorClosedForms& cf) {
  return {{"mean_in", cf.mean_in}, {"dev_in", cf.dev_in}, {"mean_pd", cf.mean_pd}, {"dev_pd", cf.dev_pd}};
}

inline json report_header(const std::string& command, const RunConfig& c) {
  return {{"command", command},
          {"schema_version", report_schema_version},
          {"seed", c.seed},
          {"config_hash", hex64(fnv1a(c.canonical))}};
}

inline json grid_json(const Grid& g) { return {{"x_min", g.x_min()}, {"x_max", g.x_max()}, {"n", g.size()}}; }

// ---------------------------------------------------------------------------
// Commands. Each returns an exit code and writes its primary artifact to `out`.

inline int cmd_solve(const RunConfig& c, std::ostream& out, const Artifacts& art) {
  const Setup s = make_setup(c, 0.0, false);
  const EigenSolution sol = solve_bound_states(s.potential, s.grid, c.states);
  json r = report_header("solve", c);
  r["potential"] = c.potential;
  r["grid"] = grid_json(s.grid);
  std::vector<double> residuals;
  for (std::size_t k = 0; k < sol.states.size(); ++k) residuals.push_back(residual_norm(sol, k));
  r["energies"] = sol.energies;
  r["residuals"] = residuals;
  if (s.harmonic) {
    std::vector<double> exact;
    for (std::size_t k = 0; k < sol.energies.size(); ++k) exact.push_back((k + 0.5) * s.units.hbar * s.units.omega);
    r["closed_form"] = {{"energies", exact}};
  } else {
    r["closed_form"] = nullptr;
  }

  std::ostringstream energies, states;
  CsvWriter ew(energies);
  ew.header({"index", "energy", "residual"});
  for (std::size_t k = 0; k < sol.energies.size(); ++k) ew.row({double(k), sol.energies[k], residuals[k]});
  CsvWriter sw(states);
  std::vector<std::string> cols{"x"};
  for (std::size_t k = 0; k < sol.states.size(); ++k) cols.push_back("psi_" + std::to_string(k));
  sw.header(cols);
  for (std::size_t i = 0; i < s.grid.size(); ++i) {
    std::vector<double> row{s.grid.x(i)};
    for (const auto& st : sol.states) row.push_back(st.psi()[i].real());
    sw.row(row);
  }
  const std::string text = r.dump(2) + "\n";
  art.save("energies.csv", energies.str());
  art.save("states.csv", states.str());
  art.save("solve.json", text);
  out << text;
  return exit_ok;
}

inline int cmd_describe(const RunConfig& c, std::ostream& out, const Artifacts& art) {
  const Setup s = make_setup(c, 0.0, false);
  const EigenSolution sol = solve_bound_states(s.potential, s.grid, c.state + 1);
  const auto& psi = sol.states[c.state];
  json r = report_header("describe", c);
  r["observable"] = observable_name(c.observable);
  r["state"] = c.state;
  r["energy"] = sol.energies[c.state];
  r["in"] = descriptor_json(describe(psi, observable_of(c, sol), true));
  const std::string text = r.dump(2) + "\n";
  art.save("describe.json", text);
  out << text;
  return exit_ok;
}

inline int cmd_measure(const RunConfig& c, std::ostream& out, const Artifacts& art) {
  const Measured m = run_channel(c, c.gamma, 1, false);
  const auto a = observable_of(c, m.solution);
  const DescriptorSet in = describe(m.in_state, a);
  const DescriptorSet pd = pd_descriptors(m.pd_state, a);
  json r = report_header("measure", c);
  r["observable"] = observable_name(c.observable);
  r["state"] = c.state;
  r["gamma"] = c.gamma;
  r["grid"] = grid_json(m.setup.grid);
  r["in"] = descriptor_json(in);
  r["pd"] = descriptor_json(pd);
  r["pd_mass"] = integrate(m.output.density);
  if (closed_forms_apply(c, m.setup)) {
    const auto cf = oscillator_closed_forms(m.setup.units, c.gamma);
    r["closed_form"] = closed_form_json(cf);
    const double e = m.setup.units.hbar * m.setup.units.omega;
    r["rel_err"] = {{"mean_pd", relative_error(pd.mean, cf.mean_pd, e)}, {"dev_pd", relative_error(pd.deviation, cf.dev_pd, e)}};
  } else {
    r["closed_form"] = nullptr;
    r["rel_err"] = nullptr;
  }

  std::ostringstream csv;
  CsvWriter w(csv);
  w.header({"x", "rho_in", "j_in", "rho_pd", "j_pd"});
  const auto rho_in = density(m.in_state);
  const auto j_in = current(m.in_state);
  for (std::size_t i = 0; i < m.setup.grid.size(); ++i) {
    w.row({m.setup.grid.x(i), rho_in[i], j_in[i], m.output.density[i], m.output.current[i]});
  }
  const std::string text = r.dump(2) + "\n";
  art.save("densities.csv", csv.str());
  art.save("measure.json", text);
  out << text;
  return exit_ok;
}

/// The simulated truth: recordings drawn from the state after the device.
inline SampleSource truth_source(const RunConfig& c, const Measured& m) {
  switch (c.observable) {
    case Observable::energy: return spectral_probabilities(m.pd_state, m.solution);
    case Observable::position: return density(m.pd_state);
    case Observable::momentum: break;
  }
  throw Error(ErrorCode::config_error, "sampling supports observable = energy | position");
}

inline std::string samples_csv(const std::vector<double>& samples) {
  std::ostringstream os;
  CsvWriter w(os);
  w.header({"value"});
  for (double v : samples) w.row({v});
  return os.str();
}

inline std::string distribution_csv(const EmpiricalDistribution& d) {
  std::ostringstream os;
  CsvWriter w(os);
  w.header({"value", "frequency"});
  for (std::size_t j = 0; j < d.values().size(); ++j) w.row({d.values()[j], d.frequencies()[j]});
  return os.str();
}

struct Experiment {
  Measured measured;
  std::vector<double> samples;
  EmpiricalDistribution distribution;
};

inline Experiment run_experiment(const RunConfig& c) {
  if (c.observable == Observable::momentum) {
    throw Error(ErrorCode::config_error, "sampling supports observable = energy | position");
  }
  const bool basis = c.observable == Observable::energy;
  Measured m = run_channel(c, c.gamma, basis ? c.k_max : 1, basis);
  const SamplingPlan plan{c.n_samples, c.seed, DeviceNoise::additive_gaussian(c.noise_width)};
  std::vector<double> samples = draw_samples(plan, truth_source(c, m));
  EmpiricalDistribution d = EmpiricalDistribution::from_samples(samples);
  return {std::move(m), std::move(samples), std::move(d)};
}

inline int cmd_sample(const RunConfig& c, std::ostream& out, const Artifacts& art) {
  const Experiment e = run_experiment(c);
  json r = report_header("sample", c);
  r["observable"] = observable_name(c.observable);
  r["gamma"] = c.gamma;
  r["n_samples"] = c.n_samples;
  r["noise_width"] = c.noise_width;
  r["exp"] = descriptor_json(exp_quantifiers(e.distribution));
  r["bins"] = e.distribution.values().size();
  const std::string text = r.dump(2) + "\n";
  art.save("samples.csv", samples_csv(e.samples));
  art.save("distribution.csv", distribution_csv(e.distribution));
  art.save("sample.json", text);
  out << text;
  return exit_ok;
}

inline json check_json(const ComparisonResult& r) {
  return {{"theory", r.theory},   {"experiment", r.experiment}, {"discrepancy", r.discrepancy},
          {"bound", r.bound},     {"absolute", r.absolute},     {"within", r.within}};
}

inline int cmd_confront(const RunConfig& c, std::ostream& out, const Artifacts& art) {
  const Experiment e = run_experiment(c);
  const auto a = observable_of(c, e.measured.solution);
  const DescriptorSet in = describe(e.measured.in_state, a);
  const DescriptorSet pd = pd_descriptors(e.measured.pd_state, a);
  const DescriptorSet exp = exp_quantifiers(e.distribution);
  const Tolerances tol{c.tolerance_mean, c.tolerance_dev, c.tolerance_abs * observable_scale(c, e.measured.setup.units)};
  const auto rep = confront(in, exp, c.compare == "pd" ? std::optional(pd) : std::nullopt, tol);

  json r = report_header("confront", c);
  r["observable"] = observable_name(c.observable);
  r["gamma"] = c.gamma;
  r["n_samples"] = c.n_samples;
  r["compared_against"] = c.compare;
  r["in"] = descriptor_json(in);
  r["pd"] = descriptor_json(pd);
  r["exp"] = descriptor_json(exp);
  r["closed_form"] = closed_forms_apply(c, e.measured.setup)
                         ? closed_form_json(oscillator_closed_forms(e.measured.setup.units, c.gamma))
                         : json(nullptr);
  r["tolerances"] = {{"mean", tol.mean_relative}, {"dev", tol.deviation_relative}, {"abs", tol.deviation_absolute}};
  r["checks"] = {{"mean", check_json(rep.mean_check)}, {"dev", check_json(rep.deviation_check)}};
  r["verdict"] = to_string(rep.verdict);
  json ups = json::array();
  for (auto u : rep.suggested_upgradings) ups.push_back(to_string(u));
  r["suggested_upgradings"] = ups;

  const std::string text = r.dump(2) + "\n";
  art.save("samples.csv", samples_csv(e.samples));
  art.save("distribution.csv", distribution_csv(e.distribution));
  art.save("report.json", text);
  out << text;
  return rep.verdict == Verdict::confirmed ? exit_ok : exit_refuted;
}

inline int cmd_sweep(const RunConfig& c, std::ostream& out, const Artifacts& art) {
  if (c.potential != "harmonic" || !c.kernel_file.empty()) {
    throw Error(ErrorCode::config_error, "sweep needs potential = harmonic and no kernel_file");
  }
  RunConfig ground = c;
  ground.state = 0;
  ground.observable = Observable::energy;
  ground.gamma_current.reset();
  std::ostringstream csv;
  CsvWriter w(csv);
  w.header({"gamma", "mean_pd_numeric", "dev_pd_numeric", "mean_pd_closed", "dev_pd_closed", "rel_err_mean", "rel_err_dev"});
  for (double g : c.gammas) {
    const Measured m = run_channel(ground, g, 1, false);
    const DescriptorSet pd = pd_descriptors(m.pd_state, m.solution.hamiltonian());
    const auto cf = oscillator_closed_forms(m.setup.units, g);
    const double e = m.setup.units.hbar * m.setup.units.omega;
    w.row({g, pd.mean, pd.deviation, cf.mean_pd, cf.dev_pd, relative_error(pd.mean, cf.mean_pd, e),
           relative_error(pd.deviation, cf.dev_pd, e)});
  }
  art.save("sweep.csv", csv.str());
  out << csv.str();
  return exit_ok;
}

inline int cmd_ensemble(const RunConfig& c, std::ostream& out, const Artifacts& art) {
  if (c.observable == Observable::momentum) {
    throw Error(ErrorCode::config_error, "ensemble supports observable = energy | position");
  }
  const bool basis = c.observable == Observable::energy;
  const Measured m = run_channel(c, c.gamma, basis ? c.k_max : 1, basis);
  const auto rows = single_sampling_fallacy_demo(truth_source(c, m), c.ensemble_sizes, c.trials, c.seed);
  std::ostringstream csv;
  CsvWriter w(csv);
  w.header({"N", "variance", "scaled_variance"});
  for (const auto& row : rows) w.row({double(row.ensemble_size), row.variance, row.scaled_variance});
  art.save("ensemble.csv", csv.str());
  out << csv.str();
  return exit_ok;
}

// ---------------------------------------------------------------------------

inline void write_error(std::ostream& err, std::string_view code, const std::string& message) {
  err << json{{"error", std::string(code)}, {"message", message}}.dump() << "\n";
}

inline std::string flag_name(std::string_view key) {
  std::string f(key);
  std::replace(f.begin(), f.end(), '_', '-');
  return "--" + f;
}

/// Parses argv, runs one subcommand and maps failures to exit codes with a JSON error on `err`.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"qmeas: intrinsic and predicted descriptors of 1D quantum states under a measurement channel"};
  app.set_version_flag("--version", "qmeas 0.1.0");
  std::string config_path;
  std::map<std::string, std::string> flags;
  app.add_option("--config", config_path, "flat key = value config file; flags override it");
  for (const auto& key : config_keys) {
    const std::string name(key.name);
    app.add_option_function<std::string>(
        flag_name(key.name), [&flags, name](const std::string& v) { flags[name] = v; },
        std::string(key.help) + (key.default_value.empty() ? "" : " [" + std::string(key.default_value) + "]"));
  }

  using Command = int (*)(const RunConfig&, std::ostream&, const Artifacts&);
  const std::vector<std::tuple<std::string, std::string, Command>> commands{
      {"solve", "bound states of the configured potential", cmd_solve},
      {"describe", "intrinsic descriptors of one bound state", cmd_describe},
      {"measure", "intrinsic and predicted descriptors through the channel", cmd_measure},
      {"sample", "simulated recordings from the state after the device", cmd_sample},
      {"confront", "compare simulated recordings with theory; exit 4 when refuted", cmd_confront},
      {"sweep", "predicted energy descriptors against closed forms over gammas", cmd_sweep},
      {"ensemble", "variance of the N-sample mean for each ensemble size", cmd_ensemble},
  };
  std::vector<std::pair<CLI::App*, Command>> subs;
  for (const auto& [name, help, fn] : commands) subs.emplace_back(app.add_subcommand(name, help)->fallthrough(), fn);
  app.require_subcommand(1, 1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    write_error(err, to_string(ErrorCode::config_error), e.what());
    return exit_config;
  }

  try {
    const auto file_values = config_path.empty() ? std::map<std::string, std::string>{} : read_config_file(config_path);
    const RunConfig cfg = resolve_config(file_values, flags);
    const Artifacts art{cfg.out};
    for (const auto& [sub, fn] : subs) {
      if (sub->parsed()) return fn(cfg, out, art);
    }
    return exit_config;
  } catch (const Error& e) {
    write_error(err, to_string(e.code()), e.what());
    return exit_code_for(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    write_error(err, to_string(ErrorCode::io_error), e.what());
    return exit_config;
  } catch (const std::exception& e) {
    write_error(err, "internal", e.what());
    return 1;
  }
}

}  // namespace qmeas::cli
