#include "manifold_calib/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "manifold_calib/error.hpp"

namespace manifold_calib {

namespace {

constexpr const char* kPoseHeader = "x,y,z,alpha,beta,gamma";

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingArtifact, "missing artifact " + path.string());
  return in;
}

std::string meta_line(const ArtifactMeta& meta) {
  return "# config_hash=" + meta.config_hash + " seed=" + std::to_string(meta.seed);
}

std::vector<double> parse_row(const std::string& line, std::size_t expected,
                              const std::filesystem::path& path, std::size_t line_no) {
  std::vector<double> values;
  const char* p = line.c_str();
  while (true) {
    char* end = nullptr;
    const double v = std::strtod(p, &end);
    if (end == p || !std::isfinite(v)) break;
    values.push_back(v);
    p = end;
    if (*p == ',') {
      ++p;
    } else {
      break;
    }
  }
  while (*p == '\r' || *p == ' ') ++p;
  if (values.size() != expected || *p != '\0') {
    throw Error(ErrorCode::kParseError, path.string() + ":" + std::to_string(line_no) + ": expected " +
                                            std::to_string(expected) + " numeric columns");
  }
  return values;
}

/// Calls fn(values) for each data row of a CSV with a known header.
template <typename Fn>
void read_csv(const std::filesystem::path& path, const std::string& header, std::size_t columns, Fn&& fn) {
  std::ifstream in = open_in(path);
  std::string line;
  std::size_t line_no = 0;
  bool seen_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!seen_header) {
      if (line != header) {
        throw Error(ErrorCode::kParseError, path.string() + ": unexpected header '" + line + "'");
      }
      seen_header = true;
      continue;
    }
    fn(parse_row(line, columns, path, line_no));
  }
  if (!seen_header) throw Error(ErrorCode::kParseError, path.string() + ": missing CSV header");
}

void append_pose(std::string& row, const Pose6& p) {
  const Vec6 v = p.vec();
  for (int i = 0; i < 6; ++i) {
    if (!row.empty()) row += ',';
    row += format_double(v[i]);
  }
}

Pose6 pose_at(const std::vector<double>& v, std::size_t offset) {
  return {v[offset], v[offset + 1], v[offset + 2], v[offset + 3], v[offset + 4], v[offset + 5]};
}

}  // namespace

std::string config_hash(const nlohmann::json& config) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_manifold_csv(const std::filesystem::path& path, const ManifoldSet& manifold,
                        const ArtifactMeta& meta) {
  std::ofstream out = open_out(path);
  out << meta_line(meta) << '\n' << kPoseHeader << '\n';
  for (const Pose6& p : manifold.poses) {
    std::string row;
    append_pose(row, p);
    out << row << '\n';
  }
}

ManifoldSet read_manifold_csv(const std::filesystem::path& path) {
  ManifoldSet manifold;
  read_csv(path, kPoseHeader, 6, [&](const std::vector<double>& v) { manifold.poses.push_back(pose_at(v, 0)); });
  return manifold;
}

void write_dataset_csv(const std::filesystem::path& path, const std::vector<ProjectionSample>& samples,
                       const ArtifactMeta& meta) {
  std::ofstream out = open_out(path);
  out << meta_line(meta) << '\n'
      << "in_x,in_y,in_z,in_alpha,in_beta,in_gamma,nn_x,nn_y,nn_z,nn_alpha,nn_beta,nn_gamma\n";
  for (const auto& s : samples) {
    std::string row;
    append_pose(row, s.input);
    append_pose(row, s.target);
    out << row << '\n';
  }
}

std::vector<ProjectionSample> read_dataset_csv(const std::filesystem::path& path) {
  std::vector<ProjectionSample> samples;
  read_csv(path, "in_x,in_y,in_z,in_alpha,in_beta,in_gamma,nn_x,nn_y,nn_z,nn_alpha,nn_beta,nn_gamma", 12,
           [&](const std::vector<double>& v) { samples.push_back({pose_at(v, 0), pose_at(v, 6)}); });
  return samples;
}

void write_observations_jsonl(const std::filesystem::path& path,
                              const std::vector<ContactObservation>& observations,
                              const ArtifactMeta& meta) {
  std::ofstream out = open_out(path);
  out << nlohmann::json{{"config_hash", meta.config_hash}, {"seed", meta.seed}}.dump() << '\n';
  for (const auto& obs : observations) {
    std::string row = "{\"q\":[";
    for (Eigen::Index i = 0; i < obs.q.size(); ++i) {
      if (i > 0) row += ',';
      row += format_double(obs.q[i]);
    }
    out << row << "]}\n";
  }
}

std::vector<ContactObservation> read_observations_jsonl(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::vector<ContactObservation> observations;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::kParseError, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!doc.contains("q")) continue;  // metadata line
    if (!doc["q"].is_array()) {
      throw Error(ErrorCode::kParseError, path.string() + ":" + std::to_string(line_no) + ": q must be an array");
    }
    const auto q = doc["q"].get<std::vector<double>>();
    ContactObservation obs;
    obs.q = Eigen::Map<const Eigen::VectorXd>(q.data(), static_cast<Eigen::Index>(q.size()));
    observations.push_back(std::move(obs));
  }
  return observations;
}

nlohmann::json params_to_json(const KinematicParams& params) {
  return {{"r", params.r}, {"b", std::vector<double>(params.b.data(), params.b.data() + params.b.size())}};
}

KinematicParams params_from_json(const nlohmann::json& doc) {
  try {
    const auto b = doc.at("b").get<std::vector<double>>();
    return {doc.at("r").get<double>(), Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()))};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("malformed parameter block: ") + e.what());
  }
}

nlohmann::json result_to_json(const CalibrationResult& result) {
  return {{"r_hat", result.params.r},
          {"b_hat", params_to_json(result.params)["b"]},
          {"iterations", result.iterations},
          {"best_iteration", result.best_iteration},
          {"converged", result.converged},
          {"flat_parameters", result.flat_parameters},
          {"extrapolated", result.extrapolated},
          {"loss_history",
           {{"positional", result.positional_history},
            {"rotational", result.rotational_history},
            {"total", result.total_history}}}};
}

nlohmann::json report_to_json(const ErrorReport& report) {
  return {{"strain_abs_error", report.strain_abs_error},
          {"bias_mae", report.bias_mae},
          {"strain_initial_error", report.strain_initial_error},
          {"bias_initial_error", report.bias_initial_error},
          {"strain_fold_reduction", report.strain_fold_reduction},
          {"bias_fold_reduction", report.bias_fold_reduction}};
}

std::string format_report_table(const ErrorReport& report) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%-18s %14s %14s %10s\n"
                "%-18s %14.6f %14.6f %9.3fx\n"
                "%-18s %14.4f %14.4f %9.3fx\n",
                "parameter", "initial error", "final error", "reduction",
                "link strain", report.strain_initial_error, report.strain_abs_error,
                report.strain_fold_reduction,
                "encoder bias (deg)", report.bias_initial_error, report.bias_mae,
                report.bias_fold_reduction);
  return buf;
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  std::ofstream out = open_out(path);
  out << doc.dump(2) << '\n';
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out = open_out(path);
  out << text;
}

}  // namespace manifold_calib
