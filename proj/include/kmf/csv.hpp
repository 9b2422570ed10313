#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "kmf/dynamics.hpp"

namespace kmf {

// Shortest decimal text that parses back to the same double ("nan", "inf",
// "-inf" for non-finite values).
std::string format_double(double value);

// Strict inverse of format_double; throws std::invalid_argument on anything
// that is not a complete number.
double parse_double(std::string_view text);

// Numeric table with named columns.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  void add_row(std::vector<double> row);
};

// Header line plus one line per row; `,` separated, LF terminated.
std::string to_csv(const Table& table);

// Writes `content`, preceded by a "# generated <UTC time>" line when
// `timestamp` is set. Creates parent directories.
void write_text_file(const std::filesystem::path& path, const std::string& content,
                     bool timestamp);

// Particle snapshot: a "# t=...,N=...,seed=..." line, the header
// x_0..x_{d-1},v_0..v_{d-1}, then one row per particle.
std::string snapshot_csv(const ParticleState& state, std::uint64_t seed);

struct Snapshot {
  ParticleState state;
  std::uint64_t seed = 0;
};

// Reads files written by snapshot_csv. Comment lines other than the metadata
// line are skipped. Throws kmf::Error on malformed input.
Snapshot read_snapshot(const std::filesystem::path& path);
Snapshot parse_snapshot(std::string_view text);

}  // namespace kmf
