#pragma once

// Flat key=value benchmark configuration files.
//
//   # comment
//   D = 101, 2501
//   mode = trajectory
//
// Unknown keys are errors. Values override the built-in defaults.

#include <filesystem>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include "narxmpc/two_tank.hpp"

namespace narxmpc {

using KeyValues = std::map<std::string, std::string>;

// Every key accepted by apply_config_value(), in echo order.
const std::vector<std::string>& config_keys();

// Throws ConfigError naming `source` and the line on malformed input.
KeyValues parse_key_values(std::istream& in, const std::string& source);

// Throws ConfigError naming the key and the accepted keys or values.
void apply_config_value(BenchmarkConfig& cfg, const std::string& key, const std::string& value);

BenchmarkConfig config_from_values(const KeyValues& values, BenchmarkConfig base = {});

// Throws ConfigError naming the path if it cannot be read.
BenchmarkConfig load_config(const std::filesystem::path& path, BenchmarkConfig base = {});

// Resolved configuration as key=value lines (round-trips through load_config).
std::string config_to_text(const BenchmarkConfig& cfg);

// 17 significant digits; parses back to the same double.
std::string format_double(double v);

}  // namespace narxmpc
