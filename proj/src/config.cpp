#include "narxmpc/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace narxmpc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string accepted_keys() {
  std::string out;
  for (const auto& k : config_keys()) out += (out.empty() ? "" : ", ") + k;
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (r.ec != std::errc() || r.ptr != end) {
    throw ConfigError(key + ": expected a decimal number, got '" + v + "'");
  }
  return out;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out = 0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (r.ec != std::errc() || r.ptr != end) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int<int>(key, trim(item)));
  if (out.empty()) throw ConfigError(key + ": expected a comma-separated list of integers");
  return out;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "D",      "N",      "Q",       "R",          "nu",       "steps",         "seed",
      "u_lo",   "u_hi",   "dt",      "mode",       "sigma",    "jitter",        "h1_ref",
      "h_max",  "x0_level", "growth_states", "growth_horizon", "validation_samples"};
  return keys;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

KeyValues parse_key_values(std::istream& in, const std::string& source) {
  KeyValues out;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

void apply_config_value(BenchmarkConfig& cfg, const std::string& key, const std::string& value) {
  static const std::map<std::string, std::function<void(BenchmarkConfig&, const std::string&)>>
      setters{
          {"D", [](auto& c, auto& v) { c.D_values = parse_int_list("D", v); }},
          {"N", [](auto& c, auto& v) { c.N = parse_int<int>("N", v); }},
          {"Q", [](auto& c, auto& v) { c.Q = parse_double("Q", v); }},
          {"R", [](auto& c, auto& v) { c.R = parse_double("R", v); }},
          {"nu", [](auto& c, auto& v) { c.nu = parse_int<int>("nu", v); }},
          {"steps", [](auto& c, auto& v) { c.steps = parse_int<int>("steps", v); }},
          {"seed", [](auto& c, auto& v) { c.seed = parse_int<std::uint64_t>("seed", v); }},
          {"u_lo", [](auto& c, auto& v) { c.u_lo = parse_double("u_lo", v); }},
          {"u_hi", [](auto& c, auto& v) { c.u_hi = parse_double("u_hi", v); }},
          {"dt", [](auto& c, auto& v) { c.dt = parse_double("dt", v); }},
          {"mode", [](auto& c, auto& v) { c.mode = parse_sampling_mode(v); }},
          {"sigma", [](auto& c, auto& v) { c.sigma = parse_double("sigma", v); }},
          {"jitter", [](auto& c, auto& v) { c.jitter = parse_double("jitter", v); }},
          {"h1_ref", [](auto& c, auto& v) { c.h1_ref = parse_double("h1_ref", v); }},
          {"h_max", [](auto& c, auto& v) { c.h_max = parse_double("h_max", v); }},
          {"x0_level", [](auto& c, auto& v) { c.x0_level = parse_double("x0_level", v); }},
          {"growth_states",
           [](auto& c, auto& v) { c.growth_states = parse_int<int>("growth_states", v); }},
          {"growth_horizon",
           [](auto& c, auto& v) { c.growth_horizon = parse_int<int>("growth_horizon", v); }},
          {"validation_samples",
           [](auto& c, auto& v) { c.validation_samples = parse_int<int>("validation_samples", v); }},
      };
  const auto it = setters.find(key);
  if (it == setters.end()) {
    throw ConfigError("unknown config key '" + key + "' (accepted: " + accepted_keys() + ")");
  }
  it->second(cfg, value);
}

BenchmarkConfig config_from_values(const KeyValues& values, BenchmarkConfig base) {
  for (const auto& [k, v] : values) apply_config_value(base, k, v);
  base.validate();
  return base;
}

BenchmarkConfig load_config(const std::filesystem::path& path, BenchmarkConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  return config_from_values(parse_key_values(in, path.string()), std::move(base));
}

std::string config_to_text(const BenchmarkConfig& c) {
  std::ostringstream os;
  os << "D = ";
  for (std::size_t i = 0; i < c.D_values.size(); ++i) os << (i ? ", " : "") << c.D_values[i];
  os << "\nN = " << c.N << "\nQ = " << format_double(c.Q) << "\nR = " << format_double(c.R)
     << "\nnu = " << c.nu << "\nsteps = " << c.steps << "\nseed = " << c.seed
     << "\nu_lo = " << format_double(c.u_lo) << "\nu_hi = " << format_double(c.u_hi)
     << "\ndt = " << format_double(c.dt) << "\nmode = " << to_string(c.mode)
     << "\nsigma = " << format_double(c.sigma) << "\njitter = " << format_double(c.jitter)
     << "\nh1_ref = " << format_double(c.h1_ref) << "\nh_max = " << format_double(c.h_max)
     << "\nx0_level = " << format_double(c.x0_level) << "\ngrowth_states = " << c.growth_states
     << "\ngrowth_horizon = " << c.growth_horizon
     << "\nvalidation_samples = " << c.validation_samples << "\n";
  return os.str();
}

}  // namespace narxmpc
