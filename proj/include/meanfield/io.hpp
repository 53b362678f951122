#ifndef MEANFIELD_IO_HPP
#define MEANFIELD_IO_HPP

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "meanfield/core.hpp"
#include "meanfield/dynamics.hpp"
#include "meanfield/ensembles.hpp"
#include "meanfield/points.hpp"
#include "meanfield/transport.hpp"

namespace meanfield {

// Shortest text that round-trips a double.
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// Rows of already formatted cells under a fixed header.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(std::vector<std::string> cells) {
    require(cells.size() == header_.size(), "CsvTable: row width does not match header");
    rows_.push_back(std::move(cells));
  }

  const std::vector<std::string>& header() const noexcept { return header_; }
  const std::vector<std::vector<std::string>>& rows() const noexcept { return rows_; }

  std::string str() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += cells[i];
      }
      out += '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return out;
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw ArgumentError("write to '" + path.string() + "' failed");
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (c != '\r' && c != ' ' && c != '\t') {
      cell += c;
    }
  }
  cells.push_back(cell);
  return cells;
}

inline double parse_number(const std::string& s, const std::string& where) {
  if (s.empty()) throw ArgumentError(where + ": empty field");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v))
    throw ArgumentError(where + ": '" + s + "' is not a finite number");
  return v;
}

}  // namespace detail

// Point-cloud CSV: header "weight,z1,...,zd", one atom per row.
inline std::string point_cloud_csv(const DiscreteMeasure& mu) {
  std::vector<std::string> header{"weight"};
  for (std::size_t c = 0; c < mu.dim(); ++c) header.push_back("z" + std::to_string(c + 1));
  CsvTable t(std::move(header));
  for (std::size_t i = 0; i < mu.size(); ++i) {
    std::vector<std::string> row{format_double(mu.weight(i))};
    for (double x : mu.point(i)) row.push_back(format_double(x));
    t.add_row(std::move(row));
  }
  return t.str();
}

inline void write_point_cloud(const std::filesystem::path& path, const DiscreteMeasure& mu) {
  write_text(path, point_cloud_csv(mu));
}

// Weights must be nonnegative and sum to 1 within 1e-6; they are then
// renormalized exactly. Errors name the file and line.
inline DiscreteMeasure parse_point_cloud(const std::string& text, const std::string& name) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") != std::string::npos) {
      header = detail::split_csv_line(line);
      break;
    }
  }
  const std::string at_header = name + ":" + std::to_string(lineno);
  if (header.size() < 2 || header[0] != "weight")
    throw ArgumentError(at_header + ": header must be weight,z1,...,zd");
  for (std::size_t c = 1; c < header.size(); ++c)
    if (header[c] != "z" + std::to_string(c))
      throw ArgumentError(at_header + ": expected column 'z" + std::to_string(c) + "', got '" +
                          header[c] + "'");
  const std::size_t d = header.size() - 1;

  std::vector<double> coords, weights;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = name + ":" + std::to_string(lineno);
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != d + 1)
      throw ArgumentError(where + ": expected " + std::to_string(d + 1) + " fields, got " +
                          std::to_string(cells.size()));
    const double w = detail::parse_number(cells[0], where);
    if (w < 0.0) throw ArgumentError(where + ": negative weight");
    weights.push_back(w);
    for (std::size_t c = 1; c <= d; ++c) coords.push_back(detail::parse_number(cells[c], where));
  }
  if (weights.empty()) throw ArgumentError(name + ": no atoms");
  const double total = pairwise_sum(weights);
  if (std::abs(total - 1.0) > 1e-6)
    throw ArgumentError(name + ": weights sum to " + format_double(total) + ", not 1");
  return DiscreteMeasure(d, std::move(coords), normalized(std::move(weights)));
}

inline DiscreteMeasure read_point_cloud(const std::filesystem::path& path) {
  return parse_point_cloud(read_text(path), path.string());
}

// Transport plan CSV: source, target, mass.
inline std::string plan_csv(const TransportPlan& plan) {
  CsvTable t({"source", "target", "mass"});
  for (const auto& e : plan.entries)
    t.add_row({std::to_string(e.source), std::to_string(e.target), format_double(e.mass)});
  return t.str();
}

// Trajectory CSV: t, particle_index, z1..zd, one row per particle per frame.
inline std::string trajectory_csv(const Trajectory& traj) {
  require(!traj.empty(), "trajectory_csv: empty trajectory");
  const std::size_t d = traj.front().state.dim();
  std::vector<std::string> header{"t", "particle_index"};
  for (std::size_t c = 0; c < d; ++c) header.push_back("z" + std::to_string(c + 1));
  CsvTable table(std::move(header));
  for (const auto& frame : traj)
    for (std::size_t k = 0; k < frame.state.count(); ++k) {
      std::vector<std::string> row{format_double(frame.t), std::to_string(k)};
      for (double x : frame.state.point(k)) row.push_back(format_double(x));
      table.add_row(std::move(row));
    }
  return table.str();
}

// Ensemble directory: member_0000.csv ... plus manifest.json holding the
// member files, weights, seed and time.
inline void write_ensemble(const std::filesystem::path& dir, const MeasureEnsemble& p) {
  p.check();
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["seed"] = p.seed;
  manifest["time"] = p.time;
  manifest["dim"] = p.dim();
  manifest["members"] = nlohmann::json::array();
  for (std::size_t i = 0; i < p.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "member_%04zu.csv", i);
    write_point_cloud(dir / name, p.members[i]);
    manifest["members"].push_back({{"file", name}, {"weight", p.weights[i]}});
  }
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline MeasureEnsemble read_ensemble(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(manifest_path.string() + ": " + e.what());
  }
  MeasureEnsemble p;
  try {
    p.seed = manifest.at("seed").get<std::uint64_t>();
    p.time = manifest.value("time", 0.0);
    for (const auto& m : manifest.at("members")) {
      p.members.push_back(read_point_cloud(dir / m.at("file").get<std::string>()));
      p.weights.push_back(m.at("weight").get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(manifest_path.string() + ": " + e.what());
  }
  p.check();
  return p;
}

}  // namespace meanfield

#endif  // MEANFIELD_IO_HPP
