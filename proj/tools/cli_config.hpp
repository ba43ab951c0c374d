#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "qmeas/error.hpp"

namespace qmeas::cli {

struct ConfigKey {
  std::string_view name;
  std::string_view default_value;
  std::string_view help;
};

/**
 * Every recognised configuration key with its default. The same keys are
 * accepted as `--key` flags (underscores written as hyphens).
 */
inline constexpr std::array<ConfigKey, 25> config_keys{{
    {"units", "natural", "natural | si"},
    {"mass", "9.1093837015e-31", "particle mass in kg (si only)"},
    {"omega", "1e15", "oscillator angular frequency in rad/s (si only)"},
    {"potential", "harmonic", "harmonic | table"},
    {"potential_file", "", "CSV of x,V on a uniform grid (potential = table)"},
    {"grid_n", "2048", "grid points"},
    {"domain", "12", "grid half-width in units of sqrt(sigma^2 + gamma^2)"},
    {"gamma", "0", "Gaussian device width (length units)"},
    {"gamma_current", "", "width of the current kernel; defaults to gamma"},
    {"kernel_file", "", "kernel CSV replacing the Gaussian device"},
    {"observable", "energy", "energy | position | momentum"},
    {"state", "0", "index of the bound state to measure"},
    {"states", "5", "number of bound states for solve"},
    {"k_max", "40", "eigenbasis size for energy sampling"},
    {"n_samples", "100000", "recordings per simulated experiment"},
    {"seed", "0", "random seed (unsigned 64-bit)"},
    {"noise_width", "0", "additive Gaussian device noise width"},
    {"compare", "pd", "confront against in | pd descriptors"},
    {"tolerance_mean", "0.05", "relative tolerance on means"},
    {"tolerance_dev", "0.10", "relative tolerance on deviations"},
    {"tolerance_abs", "0.02", "absolute deviation tolerance, natural scale"},
    {"gammas", "0.1,0.5,1,2", "comma-separated widths for sweep"},
    {"ensemble_sizes", "1,10,100,1000", "comma-separated N for ensemble"},
    {"trials", "10000", "repetitions per N for ensemble"},
    {"out", "", "directory for CSV/JSON artifacts"},
}};

inline const std::map<std::string, std::string>& config_defaults() {
  static const std::map<std::string, std::string> defaults = [] {
    std::map<std::string, std::string> m;
    for (const auto& k : config_keys) m.emplace(k.name, k.default_value);
    return m;
  }();
  return defaults;
}

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

/**
 * Flat key = value text. Blank lines and lines starting with '#' are ignored;
 * a key may appear once. Relative file paths are resolved against the
 * directory of the config file.
 */
inline std::map<std::string, std::string> parse_config_text(std::istream& is, const std::filesystem::path& base_dir = {}) {
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::config_error, "config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(t).substr(0, eq));
    std::string value = trim(std::string_view(t).substr(eq + 1));
    if (!config_defaults().contains(key)) {
      throw Error(ErrorCode::config_error, "config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    if (kv.contains(key)) {
      throw Error(ErrorCode::config_error, "config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    if ((key == "potential_file" || key == "kernel_file") && !value.empty() && std::filesystem::path(value).is_relative()) {
      value = (base_dir / value).lexically_normal().string();
    }
    kv[key] = value;
  }
  return kv;
}

inline std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::config_error, "cannot open config file '" + path.string() + "'");
  return parse_config_text(in, path.parent_path());
}

enum class Observable { energy, position, momentum };

struct RunConfig {
  std::string units;
  double mass = 0.0;
  double omega = 0.0;
  std::string potential;
  std::string potential_file;
  std::size_t grid_n = 0;
  double domain = 0.0;
  double gamma = 0.0;
  std::optional<double> gamma_current;
  std::string kernel_file;
  Observable observable = Observable::energy;
  std::size_t state = 0;
  std::size_t states = 0;
  std::size_t k_max = 0;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
  double noise_width = 0.0;
  std::string compare;
  double tolerance_mean = 0.0;
  double tolerance_dev = 0.0;
  double tolerance_abs = 0.0;
  std::vector<double> gammas;
  std::vector<std::size_t> ensemble_sizes;
  std::size_t trials = 0;
  std::string out;

  /// Resolved key/value pairs, sorted by key; `out` is excluded.
  std::string canonical;
};

namespace detail {

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw Error(ErrorCode::config_error, "'" + key + "': not a valid number: '" + text + "'");
  }
  return v;
}

enum class Sign { non_negative, positive };

inline double parse_real(const std::string& key, const std::string& text, Sign sign = Sign::non_negative) {
  const double v = parse_number<double>(key, text);
  if (!std::isfinite(v) || v < 0.0 || (sign == Sign::positive && v == 0.0)) {
    throw Error(ErrorCode::config_error, "'" + key + "' must be " + (sign == Sign::positive ? "positive" : "non-negative"));
  }
  return v;
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(parse_number<T>(key, trim(cell)));
  if (out.empty()) throw Error(ErrorCode::config_error, "'" + key + "' must list at least one value");
  return out;
}

inline std::string one_of(const std::string& key, const std::string& v, std::initializer_list<std::string_view> allowed) {
  for (auto a : allowed) {
    if (v == a) return v;
  }
  std::string msg = "'" + key + "' must be one of";
  for (auto a : allowed) msg += " " + std::string(a);
  throw Error(ErrorCode::config_error, msg);
}

/// Numbers (and comma lists of numbers) in shortest round-trip form, so "1" and "1.0" agree.
inline std::string canonical_value(const std::string& v) {
  std::string out;
  std::stringstream ss(v);
  std::string cell;
  bool first = true;
  while (std::getline(ss, cell, ',')) {
    const std::string t = trim(cell);
    double x = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) return v;
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    out += (first ? "" : ",") + std::string(buf, res.ptr);
    first = false;
  }
  return out;
}

}  // namespace detail

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Defaults, then the config file, then flags. Validates every field.
inline RunConfig resolve_config(const std::map<std::string, std::string>& file_values,
                                const std::map<std::string, std::string>& flag_values) {
  std::map<std::string, std::string> kv = config_defaults();
  for (const auto& [k, v] : file_values) kv[k] = v;
  for (const auto& [k, v] : flag_values) {
    if (!config_defaults().contains(k)) throw Error(ErrorCode::config_error, "unknown option '" + k + "'");
    kv[k] = v;
  }

  using detail::parse_number;
  using detail::parse_real;
  RunConfig c;
  c.units = detail::one_of("units", kv["units"], {"natural", "si"});
  c.mass = parse_real("mass", kv["mass"], detail::Sign::positive);
  c.omega = parse_real("omega", kv["omega"], detail::Sign::positive);
  c.potential = detail::one_of("potential", kv["potential"], {"harmonic", "table"});
  c.potential_file = kv["potential_file"];
  if (c.potential == "table" && c.potential_file.empty()) {
    throw Error(ErrorCode::config_error, "potential = table needs potential_file");
  }
  c.grid_n = parse_number<std::size_t>("grid_n", kv["grid_n"]);
  if (c.grid_n < 8) throw Error(ErrorCode::config_error, "'grid_n' must be >= 8");
  c.domain = parse_real("domain", kv["domain"], detail::Sign::positive);
  c.gamma = parse_real("gamma", kv["gamma"]);
  if (!kv["gamma_current"].empty()) c.gamma_current = parse_real("gamma_current", kv["gamma_current"]);
  c.kernel_file = kv["kernel_file"];
  const std::string obs = detail::one_of("observable", kv["observable"], {"energy", "position", "momentum"});
  c.observable = obs == "energy" ? Observable::energy : obs == "position" ? Observable::position : Observable::momentum;
  c.state = parse_number<std::size_t>("state", kv["state"]);
  c.states = parse_number<std::size_t>("states", kv["states"]);
  if (c.states == 0) throw Error(ErrorCode::config_error, "'states' must be >= 1");
  c.k_max = parse_number<std::size_t>("k_max", kv["k_max"]);
  if (c.k_max <= c.state) throw Error(ErrorCode::config_error, "'k_max' must exceed 'state'");
  c.n_samples = parse_number<std::size_t>("n_samples", kv["n_samples"]);
  if (c.n_samples == 0) throw Error(ErrorCode::config_error, "'n_samples' must be >= 1");
  c.seed = parse_number<std::uint64_t>("seed", kv["seed"]);
  c.noise_width = parse_real("noise_width", kv["noise_width"]);
  c.compare = detail::one_of("compare", kv["compare"], {"in", "pd"});
  c.tolerance_mean = parse_real("tolerance_mean", kv["tolerance_mean"]);
  c.tolerance_dev = parse_real("tolerance_dev", kv["tolerance_dev"]);
  c.tolerance_abs = parse_real("tolerance_abs", kv["tolerance_abs"]);
  c.gammas = detail::parse_list<double>("gammas", kv["gammas"]);
  for (double g : c.gammas) {
    if (!(g >= 0.0) || !std::isfinite(g)) throw Error(ErrorCode::config_error, "'gammas' entries must be >= 0");
  }
  c.ensemble_sizes = detail::parse_list<std::size_t>("ensemble_sizes", kv["ensemble_sizes"]);
  for (auto n : c.ensemble_sizes) {
    if (n == 0) throw Error(ErrorCode::config_error, "'ensemble_sizes' entries must be >= 1");
  }
  c.trials = parse_number<std::size_t>("trials", kv["trials"]);
  if (c.trials < 100) throw Error(ErrorCode::config_error, "'trials' must be >= 100");
  c.out = kv["out"];

  for (const auto& [k, v] : kv) {
    if (k != "out") c.canonical += k + "=" + detail::canonical_value(v) + "\n";
  }
  return c;
}

}  // namespace qmeas::cli
