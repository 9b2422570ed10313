#include "kmf/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "kmf/error.hpp"

namespace kmf {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::uint64_t parse_uint(std::string_view text) {
  text = trim(text);
  std::uint64_t value = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw std::invalid_argument("expected a non-negative integer, got '" + std::string(text) + "'");
  }
  return value;
}

bool parse_bool(std::string_view text) {
  text = trim(text);
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw std::invalid_argument("expected true or false, got '" + std::string(text) + "'");
}

std::vector<std::string_view> split_list(std::string_view text) {
  std::vector<std::string_view> items;
  text = trim(text);
  if (text.empty()) return items;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(',', start);
    items.push_back(trim(text.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return items;
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? "," : "") + parts[i];
  return out;
}

struct KeySpec {
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
KeySpec size_key(T ExperimentConfig::*member) {
  return {[member](RunConfig& c, std::string_view v) {
            c.exp.*member = static_cast<T>(parse_uint(v));
          },
          [member](const RunConfig& c) { return std::to_string(c.exp.*member); }};
}

KeySpec real_key(double ExperimentConfig::*member) {
  return {[member](RunConfig& c, std::string_view v) { c.exp.*member = parse_double(v); },
          [member](const RunConfig& c) { return format_double(c.exp.*member); }};
}

KeySpec coeff_key(double Coefficients::*member) {
  return {[member](RunConfig& c, std::string_view v) { c.exp.coeffs.*member = parse_double(v); },
          [member](const RunConfig& c) { return format_double(c.exp.coeffs.*member); }};
}

// Keys in canonical order.
const std::vector<std::pair<std::string, KeySpec>>& key_table() {
  static const std::vector<std::pair<std::string, KeySpec>> table = {
      {"experiment",
       {[](RunConfig& c, std::string_view v) { c.experiment = std::string(trim(v)); },
        [](const RunConfig& c) { return c.experiment; }}},
      {"output",
       {[](RunConfig& c, std::string_view v) { c.output = std::string(trim(v)); },
        [](const RunConfig& c) { return c.output.string(); }}},
      {"field.kind",
       {[](RunConfig& c, std::string_view v) { c.exp.kind = field_kind_from_string(trim(v)); },
        [](const RunConfig& c) { return std::string(to_string(c.exp.kind)); }}},
      {"field.alpha", coeff_key(&Coefficients::alpha)},
      {"field.alpha_prime", coeff_key(&Coefficients::alpha_prime)},
      {"field.beta", coeff_key(&Coefficients::beta)},
      {"field.gamma", coeff_key(&Coefficients::gamma)},
      {"field.delta", coeff_key(&Coefficients::delta)},
      {"field.dim",
       {[](RunConfig& c, std::string_view v) {
          const std::uint64_t d = parse_uint(v);
          if (d < 1 || d > 1024) throw std::invalid_argument("dim must lie in [1, 1024]");
          c.exp.coeffs.dim = static_cast<int>(d);
        },
        [](const RunConfig& c) { return std::to_string(c.exp.coeffs.dim); }}},
      {"N", size_key(&ExperimentConfig::n)},
      {"dt", real_key(&ExperimentConfig::dt)},
      {"T", real_key(&ExperimentConfig::t_end)},
      {"stride", size_key(&ExperimentConfig::stride)},
      {"seed", size_key(&ExperimentConfig::seed)},
      {"replicas", size_key(&ExperimentConfig::replicas)},
      {"exp.init_x", real_key(&ExperimentConfig::init_x)},
      {"exp.init_v", real_key(&ExperimentConfig::init_v)},
      {"exp.init_spread", real_key(&ExperimentConfig::init_spread)},
      {"exp.offset_x", real_key(&ExperimentConfig::offset_x)},
      {"exp.offset_v", real_key(&ExperimentConfig::offset_v)},
      {"exp.n_ladder",
       {[](RunConfig& c, std::string_view v) {
          c.exp.n_ladder.clear();
          for (std::string_view item : split_list(v)) {
            c.exp.n_ladder.push_back(static_cast<std::size_t>(parse_uint(item)));
          }
        },
        [](const RunConfig& c) {
          std::vector<std::string> parts;
          for (std::size_t n : c.exp.n_ladder) parts.push_back(std::to_string(n));
          return join(parts);
        }}},
      {"exp.mode",
       {[](RunConfig& c, std::string_view v) { c.exp.mode = chaos_mode_from_string(trim(v)); },
        [](const RunConfig& c) { return std::string(to_string(c.exp.mode)); }}},
      {"exp.proxy_m", size_key(&ExperimentConfig::proxy_m)},
      {"exp.observable",
       {[](RunConfig& c, std::string_view v) {
          c.exp.observable = observable_from_string(trim(v));
        },
        [](const RunConfig& c) { return std::string(to_string(c.exp.observable)); }}},
      {"exp.radii",
       {[](RunConfig& c, std::string_view v) {
          c.exp.radii.clear();
          for (std::string_view item : split_list(v)) c.exp.radii.push_back(parse_double(item));
        },
        [](const RunConfig& c) {
          std::vector<std::string> parts;
          for (double r : c.exp.radii) parts.push_back(format_double(r));
          return join(parts);
        }}},
      {"exp.reference_n", size_key(&ExperimentConfig::reference_n)},
      {"exp.reference_T", real_key(&ExperimentConfig::reference_t)},
      {"exp.rate_mode",
       {[](RunConfig& c, std::string_view v) {
          c.exp.rate_mode = search_mode_from_string(trim(v));
        },
        [](const RunConfig& c) { return std::string(to_string(c.exp.rate_mode)); }}},
      {"exp.subsample", size_key(&ExperimentConfig::subsample)},
      {"exp.tail_start", real_key(&ExperimentConfig::tail_start)},
      {"exp.snapshot",
       {[](RunConfig& c, std::string_view v) { c.exp.snapshot = parse_bool(v); },
        [](const RunConfig& c) { return std::string(c.exp.snapshot ? "true" : "false"); }}},
  };
  return table;
}

const KeySpec* find_key(std::string_view key) {
  for (const auto& [name, spec] : key_table()) {
    if (name == key) return &spec;
  }
  return nullptr;
}

void apply(RunConfig& cfg, const KeyValues& entries, std::string_view origin) {
  for (const auto& [key, value] : entries) {
    if (key == "experiment") continue;
    const KeySpec* spec = find_key(key);
    if (spec == nullptr) throw ConfigError(std::string(origin) + ": unknown key '" + key + "'");
    try {
      spec->set(cfg, value);
    } catch (const std::exception& e) {
      throw ConfigError(std::string(origin) + ": " + key + ": " + e.what());
    }
  }
}

std::string experiment_in(const KeyValues& entries) {
  for (const auto& [key, value] : entries) {
    if (key == "experiment") return std::string(trim(value));
  }
  return {};
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& entry : key_table()) out.push_back(entry.first);
    return out;
  }();
  return keys;
}

KeyValues read_key_values(std::string_view text, std::string_view origin) {
  KeyValues out;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = std::string(origin) + ":" + std::to_string(line_no);
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (key != "experiment" && find_key(key) == nullptr) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
    if (!seen.insert(key).second) throw ConfigError(where + ": key '" + key + "' set twice");
    out.emplace_back(key, value);
  }
  return out;
}

KeyValues read_key_values_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return read_key_values(buf.str(), path.string());
}

RunConfig resolve_config(std::string_view experiment, const KeyValues& file,
                         const KeyValues& flags) {
  std::string name(experiment);
  const std::string from_file = experiment_in(file);
  const std::string from_flags = experiment_in(flags);
  for (const std::string& other : {from_file, from_flags}) {
    if (other.empty()) continue;
    if (name.empty()) {
      name = other;
    } else if (other != name) {
      throw ConfigError("configuration names experiment '" + other + "' but '" + name +
                        "' was requested");
    }
  }
  if (name.empty()) name = "simulate";
  RunConfig cfg;
  cfg.experiment = name;
  cfg.exp = defaults_for(name);
  apply(cfg, file, "config file");
  apply(cfg, flags, "flag");
  try {
    cfg.exp.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  require_admissible(name, cfg.exp.coeffs);
  return cfg;
}

RunConfig parse_config_text(std::string_view text) {
  return resolve_config({}, read_key_values(text));
}

RunConfig parse_config(const std::filesystem::path& path) {
  return resolve_config({}, read_key_values_file(path));
}

std::string resolved_config_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& [name, spec] : key_table()) out += name + " = " + spec.get(cfg) + '\n';
  return out;
}

}  // namespace kmf
