#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kmf/experiments.hpp"

namespace kmf {

struct RunConfig {
  std::string experiment;  // experiment name, or "simulate"
  ExperimentConfig exp;
  std::filesystem::path output = "out";

  bool operator==(const RunConfig&) const = default;
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

// Every key a configuration file or --key flag may set.
const std::vector<std::string>& config_keys();

// Parses "key = value" lines; '#' starts a comment, blank lines are ignored.
// Throws ConfigError on malformed lines, unknown keys and repeated keys.
KeyValues read_key_values(std::string_view text, std::string_view origin = "config");
KeyValues read_key_values_file(const std::filesystem::path& path);

// Starts from the defaults of `experiment`, applies the file entries and then
// the flag entries, validates and runs the smallness precheck. A file that
// names a different experiment is an error; with no name anywhere the run is
// a plain "simulate".
RunConfig resolve_config(std::string_view experiment, const KeyValues& file,
                         const KeyValues& flags = {});

// Parses a complete configuration text.
RunConfig parse_config_text(std::string_view text);
RunConfig parse_config(const std::filesystem::path& path);

// Every key with its resolved value, in config_keys() order; parsing it with
// parse_config_text gives back the same RunConfig.
std::string resolved_config_text(const RunConfig& cfg);

}  // namespace kmf
