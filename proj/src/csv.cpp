#include "kmf/csv.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "kmf/error.hpp"

namespace kmf {

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) {
    text.remove_suffix(1);
  }
  if (text == "nan") return std::nan("");
  if (text == "inf") return INFINITY;
  if (text == "-inf") return -INFINITY;
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw std::invalid_argument("not a number: '" + std::string(text) + "'");
  }
  return value;
}

void Table::add_row(std::vector<double> row) {
  if (row.size() != columns.size()) throw std::invalid_argument("Table: row width mismatch");
  rows.push_back(std::move(row));
}

std::string to_csv(const Table& table) {
  std::string out;
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    if (c) out += ',';
    out += table.columns[c];
  }
  out += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ',';
      out += format_double(row[c]);
    }
    out += '\n';
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& content,
                     bool timestamp) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  if (timestamp) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm utc{};
    gmtime_r(&now, &utc);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &utc);
    out << "# generated " << buf << '\n';
  }
  out << content;
  if (!out) throw Error("write failed: " + path.string());
}

std::string snapshot_csv(const ParticleState& state, std::uint64_t seed) {
  state.check();
  const auto d = static_cast<std::size_t>(state.dim);
  std::string out = "# t=" + format_double(state.t) + ",N=" + std::to_string(state.n) +
                    ",seed=" + std::to_string(seed) + '\n';
  for (std::size_t k = 0; k < d; ++k) out += (k ? ",x_" : "x_") + std::to_string(k);
  for (std::size_t k = 0; k < d; ++k) out += ",v_" + std::to_string(k);
  out += '\n';
  for (std::size_t i = 0; i < state.n; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      if (k) out += ',';
      out += format_double(state.x[i * d + k]);
    }
    for (std::size_t k = 0; k < d; ++k) {
      out += ',';
      out += format_double(state.v[i * d + k]);
    }
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    parts.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

}  // namespace

Snapshot parse_snapshot(std::string_view text) {
  Snapshot snap;
  bool have_meta = false;
  bool have_header = false;
  std::size_t declared_n = 0;
  std::size_t d = 0;
  std::vector<double> xs, vs;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    try {
      if (line.front() == '#') {
        if (line.rfind("# t=", 0) != 0) continue;
        for (std::string_view field : split(line.substr(2), ',')) {
          const std::size_t eq = field.find('=');
          if (eq == std::string_view::npos) throw Error("bad metadata field");
          const std::string_view key = field.substr(0, eq);
          const std::string_view value = field.substr(eq + 1);
          if (key == "t") {
            snap.state.t = parse_double(value);
          } else if (key == "N") {
            declared_n = static_cast<std::size_t>(parse_double(value));
          } else if (key == "seed") {
            snap.seed = std::stoull(std::string(value));
          }
        }
        have_meta = true;
        continue;
      }
      const auto cells = split(line, ',');
      if (!have_header) {
        if (cells.size() % 2 != 0 || cells.empty()) throw Error("header needs x_k and v_k columns");
        d = cells.size() / 2;
        for (std::size_t k = 0; k < d; ++k) {
          if (cells[k] != "x_" + std::to_string(k) || cells[d + k] != "v_" + std::to_string(k)) {
            throw Error("unexpected column '" + std::string(cells[k]) + "'");
          }
        }
        have_header = true;
        continue;
      }
      if (cells.size() != 2 * d) throw Error("row has " + std::to_string(cells.size()) + " cells");
      for (std::size_t k = 0; k < d; ++k) xs.push_back(parse_double(cells[k]));
      for (std::size_t k = 0; k < d; ++k) vs.push_back(parse_double(cells[d + k]));
    } catch (const std::exception& e) {
      throw Error("snapshot line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) throw Error("snapshot: missing header");
  const std::size_t n = d ? xs.size() / d : 0;
  if (n == 0) throw Error("snapshot: no particles");
  if (have_meta && declared_n != n) {
    throw Error("snapshot: header declares N=" + std::to_string(declared_n) + " but has " +
                std::to_string(n) + " rows");
  }
  snap.state.n = n;
  snap.state.dim = static_cast<int>(d);
  snap.state.x = std::move(xs);
  snap.state.v = std::move(vs);
  snap.state.check();
  return snap;
}

Snapshot read_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_snapshot(buf.str());
}

}  // namespace kmf
