#pragma once

// Metric files: MI matrix and MDS CSVs, plus the run manifest.

#include <Eigen/Core>

#include <array>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skillworld/analysis/ksg.hpp"
#include "skillworld/planner/algorithm.hpp"
#include "skillworld/util/csv.hpp"
#include "skillworld/util/digest.hpp"

namespace skillworld::analysis {

inline constexpr const char* kVersion = "1.0.0";

/// SHA-256 of the compact JSON text. Object keys are stored sorted, so the
/// hash depends only on content.
inline std::string config_hash(const nlohmann::json& config) { return sha256_hex(config.dump()); }

struct Manifest {
  std::string command;
  std::uint64_t seed = 0;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json outputs = nlohmann::json::array();
  std::string status = "started";
  std::string error;

  nlohmann::json to_json() const {
    nlohmann::json j{{"command", command},
                     {"seed", seed},
                     {"config", config},
                     {"config_hash", config_hash(config)},
                     {"versions",
                      {{"skillworld", kVersion},
                       {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                     std::to_string(EIGEN_MINOR_VERSION)},
                       {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                             std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                             std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                       {"compiler", __VERSION__}}},
                     {"outputs", outputs},
                     {"status", status}};
    if (!error.empty()) j["error"] = error;
    return j;
  }
};

inline void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  out << m.to_json().dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

// --- MI matrix --------------------------------------------------------------

inline void write_mi_matrix(const MIMatrix& m, const std::string& path) {
  csv::Writer w(path);
  std::vector<std::string> header{"ground"};
  header.insert(header.end(), m.col_labels.begin(), m.col_labels.end());
  w.header(header);
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    std::vector<std::string> row{m.row_labels[i]};
    for (double v : m.values[i]) row.push_back(csv::format_double(v));
    w.row(row);
  }
}

inline MIMatrix read_mi_matrix(const std::string& path) {
  const auto t = csv::read(path);
  if (t.header.empty() || t.header[0] != "ground") throw std::runtime_error(path + ": not an MI matrix file");
  MIMatrix m;
  m.col_labels.assign(t.header.begin() + 1, t.header.end());
  for (const auto& r : t.rows) {
    if (r.size() != t.header.size()) throw std::runtime_error(path + ": ragged row");
    m.row_labels.push_back(r[0]);
    std::vector<double> v;
    for (std::size_t j = 1; j < r.size(); ++j) v.push_back(csv::parse_double(r[j]));
    m.values.push_back(std::move(v));
  }
  return m;
}

// --- MDS --------------------------------------------------------------------

struct MdsRow {
  double z1 = 0, z2 = 0, ground_x = 0, ground_y = 0;
  friend bool operator==(const MdsRow&, const MdsRow&) = default;
};

/// Pairs the first two embedding coordinates with ground positions.
inline std::vector<MdsRow> mds_rows(const Eigen::MatrixXd& coords, const std::vector<std::array<double, 2>>& ground) {
  if (static_cast<std::size_t>(coords.rows()) != ground.size())
    throw std::invalid_argument("mds export: embedding and ground counts differ");
  std::vector<MdsRow> out;
  for (Eigen::Index i = 0; i < coords.rows(); ++i)
    out.push_back({coords(i, 0), coords.cols() > 1 ? coords(i, 1) : 0.0, ground[i][0], ground[i][1]});
  return out;
}

inline void write_mds(const std::vector<MdsRow>& rows, const std::string& path) {
  csv::Writer w(path);
  w.header({"z1", "z2", "ground_x", "ground_y"});
  for (const auto& r : rows) w.row(std::vector<double>{r.z1, r.z2, r.ground_x, r.ground_y});
}

inline std::vector<MdsRow> read_mds(const std::string& path) {
  const auto t = csv::read(path);
  const std::size_t c1 = t.column("z1"), c2 = t.column("z2"), cx = t.column("ground_x"), cy = t.column("ground_y");
  std::vector<MdsRow> out;
  for (const auto& r : t.rows)
    out.push_back({csv::parse_double(r.at(c1)), csv::parse_double(r.at(c2)), csv::parse_double(r.at(cx)),
                   csv::parse_double(r.at(cy))});
  return out;
}

// --- Bundle -----------------------------------------------------------------

struct RunArtifacts {
  std::optional<MIMatrix> mi;
  std::optional<std::vector<MdsRow>> mds;
  std::optional<std::vector<planner::CurvePoint>> curves;
};

/// Writes whatever the run produced, then the manifest listing it.
inline void export_metrics(const RunArtifacts& a, const std::filesystem::path& dir, Manifest manifest) {
  std::filesystem::create_directories(dir);
  if (a.mi) {
    write_mi_matrix(*a.mi, (dir / "mi_matrix.csv").string());
    manifest.outputs.push_back("mi_matrix.csv");
  }
  if (a.mds) {
    write_mds(*a.mds, (dir / "mds.csv").string());
    manifest.outputs.push_back("mds.csv");
  }
  if (a.curves) {
    planner::write_curves(*a.curves, (dir / "curves.csv").string());
    manifest.outputs.push_back("curves.csv");
  }
  write_manifest(manifest, dir / "manifest.json");
}

}  // namespace skillworld::analysis
